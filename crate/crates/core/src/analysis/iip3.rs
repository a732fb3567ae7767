//! Two-tone third-order intercept measurement.

use serde::{Deserialize, Serialize};

use crate::analysis::psd::{bin_index, psd, Averaging, Window};
use crate::array::ArrayConfig;
use crate::codebook::TapSet;
use crate::dsp::{delay_and_combine, SamplerConfig};
use crate::error::{Error, Result};
use crate::num::{cst, db, to_f64, Real};
use crate::waveform::{apply_channel, gen_two_tone, ChannelSpec};

/// IM3 must clear the noise floor by this much to count, dB.
pub const IM3_MARGIN_DB: f64 = 10.0;
/// Accepted range of the IM3-versus-input slope.
pub const SLOPE_RANGE: (f64, f64) = (2.5, 3.5);
/// Floor applied below the fundamental so round-off never reads as IM3, dBc.
const NUMERICAL_FLOOR_DBC: f64 = -150.0;

/// Two-tone stimulus and analysis grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTone<T> {
    pub f1_hz: T,
    pub f2_hz: T,
    pub sample_rate_hz: T,
    /// FFT length; tones and products should fall on bin centres.
    pub nfft: usize,
    /// Number of FFT blocks averaged.
    pub n_blocks: usize,
}

impl<T: Real> TwoTone<T> {
    /// 766 and 776 MHz at 1.6 GS/s on a 1 MHz grid.
    pub fn prototype() -> Self {
        Self {
            f1_hz: cst(766e6),
            f2_hz: cst(776e6),
            sample_rate_hz: cst(1.6e9),
            nfft: 1600,
            n_blocks: 8,
        }
    }

    /// Lower and upper third-order products `2f1 - f2`, `2f2 - f1`.
    pub fn im3_hz(&self) -> (T, T) {
        let two: T = cst(2.0);
        (two * self.f1_hz - self.f2_hz, two * self.f2_hz - self.f1_hz)
    }
}

/// One input level of a two-tone sweep, all powers per tone in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTonePoint<T> {
    pub input_dbm: T,
    pub fundamental_dbm: T,
    /// Mean of both products; `None` when not above the floor.
    pub im3_dbm: Option<T>,
    pub floor_dbm: T,
}

/// Result of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iip3Report<T> {
    /// `+inf` when no third-order product was found.
    pub iip3_dbm: T,
    /// Least-squares IM3 slope in dB/dB, when at least two levels had IM3.
    pub slope: Option<T>,
    pub points: Vec<TwoTonePoint<T>>,
    pub warnings: Vec<String>,
}

/// Read fundamental, IM3 and floor levels from an output PSD.
pub fn measure_two_tone<T: Real>(output_psd: &[T], tt: &TwoTone<T>, input_dbm: T, impedance_ohm: T) -> TwoTonePoint<T> {
    let to_dbm = |p: T| db(p * cst(crate::dsp::REFERENCE_OHM) / impedance_ohm);
    let bin = |f: T| bin_index(f, tt.nfft, tt.sample_rate_hz);
    let (lo, hi) = tt.im3_hz();
    let tone_bins = [bin(tt.f1_hz), bin(tt.f2_hz)];
    let im3_bins = [bin(lo), bin(hi)];
    let fund = (output_psd[tone_bins[0]] + output_psd[tone_bins[1]]) / cst(2.0);
    let im3 = (output_psd[im3_bins[0]] + output_psd[im3_bins[1]]) / cst(2.0);

    let mut rest: Vec<T> = output_psd
        .iter()
        .enumerate()
        .filter(|(i, _)| !tone_bins.contains(i) && !im3_bins.contains(i))
        .map(|(_, &v)| v)
        .collect();
    rest.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = rest.get(rest.len() / 2).copied().unwrap_or(T::zero());
    let floor = median.max(fund * crate::num::from_db(cst(NUMERICAL_FLOOR_DBC)));
    let detected = im3 >= floor * crate::num::from_db(cst(IM3_MARGIN_DB));
    TwoTonePoint {
        input_dbm,
        fundamental_dbm: to_dbm(fund),
        im3_dbm: detected.then(|| to_dbm(im3)),
        floor_dbm: to_dbm(floor),
    }
}

/// Intercept from measured points: `P_in + (P_fund - P_IM3)/2` averaged over
/// the levels where IM3 was detected, with the IM3 slope checked across
/// levels.
pub fn extract_iip3<T: Real>(points: &[TwoTonePoint<T>]) -> Iip3Report<T> {
    let mut warnings = Vec::new();
    let valid: Vec<(T, T, T)> = points
        .iter()
        .filter_map(|p| p.im3_dbm.map(|im3| (p.input_dbm, p.fundamental_dbm, im3)))
        .collect();
    if valid.is_empty() {
        return Iip3Report {
            iip3_dbm: T::infinity(),
            slope: None,
            points: points.to_vec(),
            warnings,
        };
    }
    let n: T = cst(valid.len() as f64);
    let iip3 = valid.iter().fold(T::zero(), |a, &(p, f, i)| a + p + (f - i) / cst(2.0)) / n;
    let slope = if valid.len() >= 2 {
        let mx = valid.iter().fold(T::zero(), |a, v| a + v.0) / n;
        let my = valid.iter().fold(T::zero(), |a, v| a + v.2) / n;
        let sxy = valid.iter().fold(T::zero(), |a, v| a + (v.0 - mx) * (v.2 - my));
        let sxx = valid.iter().fold(T::zero(), |a, v| a + (v.0 - mx) * (v.0 - mx));
        (sxx > T::zero()).then(|| sxy / sxx)
    } else {
        None
    };
    match slope {
        Some(s) if to_f64(s) < SLOPE_RANGE.0 || to_f64(s) > SLOPE_RANGE.1 => warnings.push(format!(
            "IM3 slope {:.3} dB/dB outside [{}, {}]; not a third-order product",
            to_f64(s),
            SLOPE_RANGE.0,
            SLOPE_RANGE.1
        )),
        None => warnings.push("IM3 slope not verified: fewer than two detected levels".into()),
        _ => {}
    }
    Iip3Report {
        iip3_dbm: iip3,
        slope,
        points: points.to_vec(),
        warnings,
    }
}

/// Drive one element of the sampler with two tones at `per_tone_dbm` and
/// measure the output spectrum.
pub fn run_two_tone<T: Real>(
    tt: &TwoTone<T>,
    scfg: &SamplerConfig<T>,
    per_tone_dbm: T,
    snr_db: Option<T>,
    seed: u64,
) -> Result<TwoTonePoint<T>> {
    if to_f64((tt.sample_rate_hz - scfg.sample_rate_hz()).abs()) > 1e-9 * to_f64(tt.sample_rate_hz) {
        return Err(Error::Config("two-tone rate differs from the sampler rate".into()));
    }
    let len = tt.nfft * tt.n_blocks.max(1);
    // gen_two_tone splits unit power evenly, so each tone sits 3 dB below total.
    let stimulus = crate::dsp::scale_to_dbm(
        &gen_two_tone(tt.f1_hz, tt.f2_hz, tt.sample_rate_hz, len)?,
        per_tone_dbm + db(cst::<T>(2.0)),
        scfg.reference_impedance_ohm,
    );
    let one = ArrayConfig::critical(1, cst(28e9), tt.sample_rate_hz)?;
    let rx = apply_channel(
        &stimulus,
        tt.sample_rate_hz,
        &one,
        &ChannelSpec {
            theta: T::zero(),
            snr_db,
            seed,
        },
    )?;
    let out = delay_and_combine(&rx, &TapSet::broadside(1), scfg)?;
    let avg = Averaging {
        window: Window::Rectangular,
        hop: tt.nfft,
        offset: 0,
    };
    let p = psd(&out.samples, tt.nfft, &avg)?;
    Ok(measure_two_tone(&p, tt, per_tone_dbm, scfg.reference_impedance_ohm))
}

/// Sweep input levels and extract the intercept.
pub fn iip3_sweep<T: Real>(
    tt: &TwoTone<T>,
    scfg: &SamplerConfig<T>,
    levels_dbm: &[T],
    snr_db: Option<T>,
    seed: u64,
) -> Result<Iip3Report<T>> {
    let points = levels_dbm
        .iter()
        .enumerate()
        .map(|(i, &p)| run_two_tone(tt, scfg, p, snr_db, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(extract_iip3(&points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampler(iip3: Option<f64>) -> SamplerConfig<f64> {
        SamplerConfig {
            iip3_dbm: iip3,
            ..SamplerConfig::prototype()
        }
    }

    #[test]
    fn product_frequencies() {
        let tt = TwoTone::<f64>::prototype();
        assert_eq!(tt.im3_hz(), (756e6, 786e6));
    }

    #[test]
    fn cubic_at_fourteen_dbm_is_recovered() {
        let tt = TwoTone::prototype();
        let rep = iip3_sweep(&tt, &sampler(Some(14.0)), &[-30.0, -25.0, -20.0], None, 0).unwrap();
        assert!((rep.iip3_dbm - 14.0).abs() < 0.05, "{}", rep.iip3_dbm);
        let s = rep.slope.unwrap();
        assert!((s - 3.0).abs() < 0.01, "{s}");
        assert!(rep.warnings.is_empty());
        // Closed-form IM3 level 3P - 2 IIP3.
        let p = rep.points[2];
        assert!((p.im3_dbm.unwrap() - (3.0 * -20.0 - 28.0)).abs() < 0.05);
    }

    #[test]
    fn linear_chain_gives_infinite_intercept() {
        let tt = TwoTone::prototype();
        let rep = iip3_sweep(&tt, &sampler(None), &[-30.0, -20.0], None, 0).unwrap();
        assert!(rep.iip3_dbm.is_infinite() && rep.iip3_dbm > 0.0);
        assert!(rep.points.iter().all(|p| p.im3_dbm.is_none()));
    }

    #[test]
    fn wrong_slope_is_flagged() {
        let pts: [TwoTonePoint<f64>; 2] = [
            TwoTonePoint {
                input_dbm: -30.0,
                fundamental_dbm: -30.0,
                im3_dbm: Some(-100.0),
                floor_dbm: -200.0,
            },
            TwoTonePoint {
                input_dbm: -20.0,
                fundamental_dbm: -20.0,
                im3_dbm: Some(-80.0),
                floor_dbm: -200.0,
            },
        ];
        let rep = extract_iip3(&pts);
        assert!((rep.slope.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn noisy_measurement_still_within_half_db() {
        let tt = TwoTone::prototype();
        let rep = iip3_sweep(&tt, &sampler(Some(14.0)), &[-20.0, -15.0, -10.0], Some(60.0), 9).unwrap();
        assert!((rep.iip3_dbm - 14.0).abs() < 0.5, "{}", rep.iip3_dbm);
    }
}
