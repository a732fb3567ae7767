//! CSV renderings of analysis results. Angles in degrees, frequencies in MHz,
//! gains in dB; the first row is a header.

use std::fmt::Write as _;

use num_complex::Complex;

use crate::analysis::aoa::{AngleFrequencyMap, Heatmap};
use crate::analysis::gain::GainCurve;
use crate::num::{to_f64, Real};

fn deg<T: Real>(rad: T) -> f64 {
    to_f64(rad).to_degrees()
}

/// Long format: one `angle_deg,freq_mhz,gain_db` row per cell.
pub fn heatmap_csv<T: Real>(hm: &Heatmap<T>) -> String {
    let mut s = String::from("angle_deg,freq_mhz,gain_db\n");
    for (theta, row) in hm.angles_rad.iter().zip(&hm.gain_db) {
        for (f, g) in hm.freq_hz.iter().zip(row) {
            let _ = writeln!(s, "{:.3},{:.4},{:.6}", deg(*theta), to_f64(*f) / 1e6, to_f64(*g));
        }
    }
    s
}

pub fn gain_csv<T: Real>(curve: &GainCurve<T>) -> String {
    let mut s = String::from("freq_mhz,gain_db\n");
    for (f, g) in curve.freq_hz.iter().zip(&curve.gain_db) {
        let _ = writeln!(s, "{:.4},{:.6}", to_f64(*f) / 1e6, to_f64(*g));
    }
    s
}

pub fn pattern_csv<T: Real>(angles_rad: &[T], gain_db: &[T]) -> String {
    let mut s = String::from("angle_deg,gain_db\n");
    for (a, g) in angles_rad.iter().zip(gain_db) {
        let _ = writeln!(s, "{:.4},{:.6}", deg(*a), to_f64(*g));
    }
    s
}

pub fn map_csv<T: Real>(map: &AngleFrequencyMap<T>) -> String {
    let mut s = String::from("angle_deg,peak_bin,peak_freq_mhz,centroid_bin,peak_gain_db\n");
    let df = to_f64(map.plan.subcarrier_spacing_hz) / 1e6;
    for i in 0..map.len() {
        let _ = writeln!(
            s,
            "{:.3},{},{:.4},{:.4},{:.6}",
            deg(map.angles_rad[i]),
            map.peak_subcarrier_index[i],
            map.peak_subcarrier_index[i] as f64 * df,
            to_f64(map.peak_position[i]),
            10.0 * to_f64(map.peak_gain[i]).log10()
        );
    }
    s
}

/// Generic two-column table with a caller-chosen header.
pub fn xy_csv<T: Real>(header: &str, x: &[T], y: &[T]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(s, "{},{}", to_f64(*a), to_f64(*b));
    }
    s
}

/// Constellation dump: `i,q` per symbol.
pub fn iq_csv<T: Real>(points: &[Complex<T>]) -> String {
    let mut s = String::from("i,q\n");
    for p in points {
        let _ = writeln!(s, "{:.8},{:.8}", to_f64(p.re), to_f64(p.im));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_is_long_format() {
        let hm = Heatmap {
            angles_rad: vec![0.0, std::f64::consts::FRAC_PI_6],
            freq_hz: vec![-1e6, 0.0, 1e6],
            bins: vec![-1, 0, 1],
            gain_db: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        };
        let csv = heatmap_csv(&hm);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "angle_deg,freq_mhz,gain_db");
        assert_eq!(lines[1], "0.000,-1.0000,1.000000");
        assert_eq!(lines[6], "30.000,1.0000,6.000000");
    }

    #[test]
    fn iq_rows() {
        let csv = iq_csv(&[Complex::new(0.5f32, -0.25)]);
        assert_eq!(csv, "i,q\n0.50000000,-0.25000000\n");
    }
}
