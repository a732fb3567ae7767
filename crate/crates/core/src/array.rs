//! Continuous-frequency uniform linear array model.
//!
//! Angles are measured from broadside and are positive toward increasing
//! element index. Element `n` (0-based here) of the steering vector is
//! `exp(-j 2π n d f sinθ / c)`, i.e. a plane wave from a positive angle reaches
//! higher-index elements later.
//!
//! Tap weights act at complex baseband. A weight with delay `τ` and phase `φ`
//! evaluated at RF frequency `f` is `exp(-j(2π f_bb τ + φ))` where
//! `f_bb = f - f_c + f_if` is the frequency the delay line actually sees after
//! downconversion.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::codebook::TapSet;
use crate::error::{Error, Result};
use crate::num::{cis, cst, db, idx, Real};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Geometry and RF plan of a uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig<T> {
    pub n_elements: usize,
    /// Inter-element spacing, meters.
    pub spacing_m: T,
    pub carrier_hz: T,
    pub bandwidth_hz: T,
    /// Center of the band after downconversion to complex baseband.
    pub if_center_hz: T,
}

impl<T: Real> ArrayConfig<T> {
    pub fn new(n_elements: usize, spacing_m: T, carrier_hz: T, bandwidth_hz: T, if_center_hz: T) -> Result<Self> {
        let cfg = Self {
            n_elements,
            spacing_m,
            carrier_hz,
            bandwidth_hz,
            if_center_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Half-wavelength spaced array with a zero-IF downconverter.
    pub fn critical(n_elements: usize, carrier_hz: T, bandwidth_hz: T) -> Result<Self> {
        let spacing = cst::<T>(SPEED_OF_LIGHT) / (cst::<T>(2.0) * carrier_hz);
        Self::new(n_elements, spacing, carrier_hz, bandwidth_hz, T::zero())
    }

    /// 4 elements, 28 GHz carrier, 800 MHz bandwidth, λ/2 spacing.
    pub fn prototype() -> Self {
        Self::critical(4, cst(28e9), cst(800e6)).expect("prototype configuration is valid")
    }

    pub fn with_elements(mut self, n_elements: usize) -> Result<Self> {
        self.n_elements = n_elements;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 1 {
            return Err(Error::Config("n_elements must be at least 1".into()));
        }
        let positive = |v: T, name: &str| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and positive, got {v}")))
            }
        };
        positive(self.spacing_m, "spacing_m")?;
        positive(self.carrier_hz, "carrier_hz")?;
        positive(self.bandwidth_hz, "bandwidth_hz")?;
        if !self.if_center_hz.is_finite() {
            return Err(Error::Config("if_center_hz must be finite".into()));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> T {
        cst::<T>(SPEED_OF_LIGHT) / self.carrier_hz
    }

    pub fn critically_spaced(&self) -> bool {
        let half = self.wavelength_m() / cst(2.0);
        let rel = ((self.spacing_m - half) / self.spacing_m).abs();
        crate::num::to_f64(rel) < 1e-9
    }

    /// Local oscillator frequency of the downconverter.
    pub fn lo_hz(&self) -> T {
        self.carrier_hz - self.if_center_hz
    }

    /// Baseband frequency at which a tap delay acts for RF frequency `f`.
    pub fn baseband_hz(&self, rf_hz: T) -> T {
        rf_hz - self.lo_hz()
    }

    pub fn rf_hz(&self, baseband_hz: T) -> T {
        baseband_hz + self.lo_hz()
    }

    /// Delay between adjacent elements for a plane wave from `theta`:
    /// `d sinθ / c`. Reduces to `sinθ / (2 f_c)` at critical spacing.
    pub fn element_delay_s(&self, theta: T) -> T {
        self.spacing_m * theta.sin() / cst(SPEED_OF_LIGHT)
    }

    /// `true` if `rf_hz` lies within `[f_c - BW/2, f_c + BW/2]` (1 ppm slack).
    pub fn in_band(&self, rf_hz: T) -> bool {
        let half = self.bandwidth_hz / cst(2.0);
        let slack = self.bandwidth_hz * cst(1e-6);
        (rf_hz - self.carrier_hz).abs() <= half + slack
    }

    /// Lower and upper RF band edges.
    pub fn band_edges_hz(&self) -> (T, T) {
        let half = self.bandwidth_hz / cst(2.0);
        (self.carrier_hz - half, self.carrier_hz + half)
    }
}

/// Complex array or frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexResponse<T> {
    pub values: Vec<Complex<T>>,
    /// Frequency grid when the response is indexed by frequency.
    pub frequency_hz: Option<Vec<T>>,
}

impl<T: Real> ComplexResponse<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Inter-element delay of a critically spaced array: `sinθ / (2 f_c)`.
pub fn inter_element_delay<T: Real>(theta: T, carrier_hz: T) -> T {
    theta.sin() / (cst::<T>(2.0) * carrier_hz)
}

/// Per-element plane-wave response `a(θ, f)`.
pub fn steering_vector<T: Real>(cfg: &ArrayConfig<T>, theta: T, freq_hz: T) -> ComplexResponse<T> {
    let step = cfg.element_delay_s(theta);
    let values = (0..cfg.n_elements)
        .map(|n| cis(-T::TAU() * idx::<T>(n) * step * freq_hz))
        .collect();
    ComplexResponse {
        values,
        frequency_hz: None,
    }
}

/// `Σ_n conj(w_n(f)) a_n(θ, f)` at one RF frequency.
pub fn array_factor<T: Real>(cfg: &ArrayConfig<T>, taps: &TapSet<T>, theta: T, freq_hz: T) -> Complex<T> {
    let step = cfg.element_delay_s(theta);
    let f_bb = cfg.baseband_hz(freq_hz);
    (0..cfg.n_elements).fold(Complex::new(T::zero(), T::zero()), |acc, n| {
        let steer = -T::TAU() * idx::<T>(n) * step * freq_hz;
        acc + cis(steer) * taps.weight(n, f_bb).conj()
    })
}

fn check_dims<T: Real>(cfg: &ArrayConfig<T>, taps: &TapSet<T>) -> Result<()> {
    if taps.n_elements() != cfg.n_elements {
        return Err(Error::Config(format!(
            "tap set sized for {} elements, array has {}",
            taps.n_elements(),
            cfg.n_elements
        )));
    }
    Ok(())
}

/// Linear power gain `|W^H(f) a(θ, f)|^2` over an RF frequency grid.
pub fn system_response<T: Real>(cfg: &ArrayConfig<T>, taps: &TapSet<T>, theta: T, freq_grid: &[T]) -> Result<Vec<T>> {
    check_dims(cfg, taps)?;
    if let Some(f) = freq_grid.iter().find(|&&f| !cfg.in_band(f)) {
        return Err(Error::Config(format!(
            "frequency {f} Hz outside the band {:?}",
            cfg.band_edges_hz()
        )));
    }
    Ok(freq_grid
        .iter()
        .map(|&f| array_factor(cfg, taps, theta, f).norm_sqr())
        .collect())
}

/// System response across angles at a fixed RF frequency.
pub fn beam_pattern<T: Real>(cfg: &ArrayConfig<T>, taps: &TapSet<T>, freq_hz: T, theta_grid: &[T]) -> Result<Vec<T>> {
    check_dims(cfg, taps)?;
    Ok(theta_grid
        .iter()
        .map(|&theta| array_factor(cfg, taps, theta, freq_hz).norm_sqr())
        .collect())
}

/// Bisection tolerance used by [`hpbw`], radians.
pub const HPBW_TOLERANCE_RAD: f64 = 1e-6;

/// Half-power beamwidth of the broadside matched beam at `freq_hz`.
///
/// The mainlobe is the lobe holding the global maximum of the pattern; each
/// −3 dB crossing is bracketed by walking outward from the peak and then
/// bisected. A side that never drops below half power is clamped at ±π/2.
pub fn hpbw<T: Real>(cfg: &ArrayConfig<T>, freq_hz: T) -> Result<T> {
    if cfg.n_elements < 2 {
        return Err(Error::Config("hpbw needs at least two elements".into()));
    }
    let taps = TapSet::broadside(cfg.n_elements);
    let pattern = |theta: T| array_factor(cfg, &taps, theta, freq_hz).norm_sqr();
    let half_pi = T::FRAC_PI_2();

    // Coarse scan for the global peak, ties resolved toward broadside.
    let scan = 4001;
    let mut peak = T::zero();
    let mut peak_val = pattern(T::zero());
    for i in 0..scan {
        let theta = -half_pi + T::PI() * idx::<T>(i) / idx::<T>(scan - 1);
        let v = pattern(theta);
        if v > peak_val * (T::one() + cst(1e-12)) {
            peak = theta;
            peak_val = v;
        }
    }
    let half = peak_val / cst(2.0);
    let step = T::PI() / idx::<T>(scan - 1) / cst(4.0);
    let tol = cst::<T>(HPBW_TOLERANCE_RAD);

    let crossing = |direction: T| -> T {
        let mut inside = peak;
        let mut outside = loop {
            let next = inside + direction * step;
            if next.abs() > half_pi {
                let edge = direction * half_pi;
                if pattern(edge) >= half {
                    return edge;
                }
                break edge;
            }
            if pattern(next) < half {
                break next;
            }
            inside = next;
        };
        while (outside - inside).abs() > tol {
            let mid = (inside + outside) / cst(2.0);
            if pattern(mid) >= half {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        (inside + outside) / cst(2.0)
    };

    let upper = crossing(T::one());
    let lower = crossing(-T::one());
    Ok(upper - lower)
}

/// Band-edge loss of a narrowband phase-shifter beamformer, in dB.
///
/// The phases are matched to `θ` at the carrier only; the loss is measured
/// against the ideal coherent gain `N^2`.
pub fn squint_loss<T: Real>(cfg: &ArrayConfig<T>, n_elements: usize, theta: T, freq_hz: T) -> T {
    let step = cfg.element_delay_s(theta);
    let sum = (0..n_elements).fold(Complex::new(T::zero(), T::zero()), |acc, n| {
        let n = idx::<T>(n);
        let weight_phase = T::TAU() * n * step * cfg.carrier_hz;
        let steer_phase = -T::TAU() * n * step * freq_hz;
        acc + cis(weight_phase + steer_phase)
    });
    let ideal = idx::<T>(n_elements * n_elements);
    -db(sum.norm_sqr() / ideal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{beamforming_taps, training_taps};
    use approx::assert_relative_eq;

    #[test]
    fn broadside_delay_is_zero_and_odd() {
        assert_eq!(inter_element_delay(0.0, 28e9), 0.0);
        let t = inter_element_delay(std::f64::consts::FRAC_PI_2, 28e9);
        assert_relative_eq!(t, 1.0 / (2.0 * 28e9), max_relative = 1e-15);
        assert_relative_eq!(t * 1e12, 17.857142857, epsilon = 1e-6);
        for &th in &[0.1, 0.7, 1.3] {
            assert_eq!(inter_element_delay(-th, 28e9), -inter_element_delay(th, 28e9));
        }
    }

    #[test]
    fn critical_spacing_matches_general_delay() {
        let cfg = ArrayConfig::<f64>::prototype();
        assert!(cfg.critically_spaced());
        for &th in &[-1.2, -0.3, 0.4, 1.5] {
            assert_relative_eq!(
                cfg.element_delay_s(th),
                inter_element_delay(th, cfg.carrier_hz),
                max_relative = 1e-12
            );
        }
        let off = ArrayConfig::new(4, cfg.spacing_m * 1.01, 28e9, 800e6, 0.0).unwrap();
        assert!(!off.critically_spaced());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ArrayConfig::new(0, 0.005, 28e9, 800e6, 0.0).is_err());
        assert!(ArrayConfig::new(4, -0.005, 28e9, 800e6, 0.0).is_err());
        assert!(ArrayConfig::new(4, 0.005, 0.0, 800e6, 0.0).is_err());
        assert!(ArrayConfig::new(4, 0.005, 28e9, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn steering_vector_broadside_is_ones() {
        let cfg = ArrayConfig::<f64>::prototype();
        let a = steering_vector(&cfg, 0.0, 28.3e9);
        assert_eq!(a.len(), 4);
        for v in &a.values {
            assert_relative_eq!(v.re, 1.0);
            assert_relative_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn steering_vector_endfire_half_wave() {
        let cfg = ArrayConfig::<f64>::critical(2, 28e9, 800e6).unwrap();
        let a = steering_vector(&cfg, std::f64::consts::FRAC_PI_2, 28e9);
        assert!((a.values[0] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a.values[1] - Complex::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_vector_matches_scalar_recomputation() {
        let cfg = ArrayConfig::<f64>::prototype();
        let theta = 30f64.to_radians();
        let f = 28.4e9;
        let a = steering_vector(&cfg, theta, f);
        for (n, v) in a.values.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * n as f64 * cfg.spacing_m * f * theta.sin() / SPEED_OF_LIGHT;
            let expect = Complex::new(phase.cos(), phase.sin());
            assert!((v - expect).norm() < 1e-12, "element {n}");
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_element_has_unit_response() {
        let cfg = ArrayConfig::<f64>::critical(1, 28e9, 800e6).unwrap();
        let taps = training_taps(&cfg, 1);
        let grid = crate::num::linspace(27.6e9, 28.4e9, 17);
        for &th in &[-1.2, 0.0, 0.9] {
            for g in system_response(&cfg, &taps, th, &grid).unwrap() {
                assert_relative_eq!(g, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn matched_beamforming_is_coherent() {
        let cfg = ArrayConfig::<f64>::prototype();
        let grid = crate::num::linspace(27.6e9, 28.4e9, 33);
        for &deg in &[-70.0f64, -20.0, 0.0, 35.0, 80.0] {
            let th = deg.to_radians();
            let taps = beamforming_taps(&cfg, th);
            for g in system_response(&cfg, &taps, th, &grid).unwrap() {
                assert_relative_eq!(g, 16.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn training_peak_matches_dense_search() {
        let cfg = ArrayConfig::<f64>::prototype();
        let taps = training_taps(&cfg, 1);
        let th = 40f64.to_radians();
        // Oracle: direct double sum on a 10 kHz grid.
        let n_pts = 80_001;
        let grid = crate::num::linspace(27.6e9, 28.4e9, n_pts);
        let mut best = (0.0, f64::MIN);
        for &f in &grid {
            let mut re = 0.0;
            let mut im = 0.0;
            for n in 0..4 {
                let tau = n as f64 / 800e6;
                let fbb = f - 28e9;
                let ph = 2.0 * std::f64::consts::PI * fbb * tau
                    - 2.0 * std::f64::consts::PI * n as f64 * cfg.spacing_m * f * th.sin() / SPEED_OF_LIGHT;
                re += ph.cos();
                im += ph.sin();
            }
            let g = re * re + im * im;
            if g > best.1 {
                best = (f, g);
            }
        }
        let resp = system_response(&cfg, &taps, th, &grid).unwrap();
        let (imax, _) = resp
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((grid[imax] - best.0).abs() <= 10e3 + 1.0);
        assert_relative_eq!(resp[imax], best.1, max_relative = 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let cfg = ArrayConfig::<f64>::prototype();
        let taps = training_taps(&cfg.with_elements(8).unwrap(), 1);
        assert!(matches!(
            system_response(&cfg, &taps, 0.0, &[28e9]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_of_band_frequency_rejected() {
        let cfg = ArrayConfig::<f64>::prototype();
        let taps = training_taps(&cfg, 1);
        assert!(system_response(&cfg, &taps, 0.0, &[29e9]).is_err());
    }

    #[test]
    fn pattern_peaks_at_steer_angle() {
        let cfg = ArrayConfig::<f64>::critical(8, 28e9, 800e6).unwrap();
        let grid = crate::num::degree_grid::<f64>(-90.0, 90.0, 0.5);
        for &deg in &[-45.0f64, 0.0, 20.0, 60.0] {
            let taps = beamforming_taps(&cfg, deg.to_radians());
            let p = beam_pattern(&cfg, &taps, 28.2e9, &grid).unwrap();
            let imax = p
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
                .0;
            assert!((grid[imax].to_degrees() - deg).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn broadside_pattern_is_even() {
        let cfg = ArrayConfig::<f64>::critical(6, 28e9, 800e6).unwrap();
        let taps = beamforming_taps(&cfg, 0.0);
        let grid = crate::num::degree_grid::<f64>(0.0, 90.0, 1.0);
        let neg: Vec<f64> = grid.iter().map(|t| -t).collect();
        let p = beam_pattern(&cfg, &taps, 28e9, &grid).unwrap();
        let q = beam_pattern(&cfg, &taps, 28e9, &neg).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn eight_element_nulls_match_direct_sum() {
        // At f_c with λ/2 spacing the broadside pattern of N=8 vanishes where
        // sinθ = 2k/8.
        let cfg = ArrayConfig::<f64>::critical(8, 28e9, 800e6).unwrap();
        let taps = beamforming_taps(&cfg, 0.0);
        for k in 1..=3 {
            let th = (2.0 * k as f64 / 8.0).asin();
            let direct: Complex<f64> = (0..8)
                .map(|n| {
                    let ph = -std::f64::consts::PI * n as f64 * th.sin();
                    Complex::new(ph.cos(), ph.sin())
                })
                .sum();
            let p = beam_pattern(&cfg, &taps, 28e9, &[th]).unwrap()[0];
            assert!(direct.norm_sqr() < 1e-20);
            assert!(p < 1e-20, "null {k}: {p}");
        }
    }

    #[test]
    fn hpbw_two_elements_matches_closed_form() {
        // Oracle: bisection on |cos(π sinθ / 2)|^2 = 1/2.
        let f = |t: f64| (std::f64::consts::PI * t.sin() / 2.0).cos().powi(2);
        let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = lo + hi;
        let cfg = ArrayConfig::<f64>::critical(2, 28e9, 800e6).unwrap();
        let w = hpbw(&cfg, 28e9).unwrap();
        assert!((w - oracle).abs() < 2e-6, "{w} vs {oracle}");
        assert_relative_eq!(w, std::f64::consts::PI / 3.0, epsilon = 2e-6);
    }

    #[test]
    fn hpbw_four_elements_matches_grid_search() {
        let cfg = ArrayConfig::<f64>::critical(4, 28e9, 800e6).unwrap();
        let p = |t: f64| {
            let s: Complex<f64> = (0..4)
                .map(|n| {
                    let ph = -std::f64::consts::PI * n as f64 * t.sin();
                    Complex::new(ph.cos(), ph.sin())
                })
                .sum();
            s.norm_sqr()
        };
        let mut t = 0.0;
        while p(t) >= 8.0 {
            t += 1e-4;
        }
        let grid_width = 2.0 * t;
        let w = hpbw(&cfg, 28e9).unwrap();
        assert!((w - grid_width).abs() < 2e-4, "{w} vs {grid_width}");
        let w8 = hpbw(&cfg.with_elements(8).unwrap(), 28e9).unwrap();
        assert!(w8 < w);
    }

    #[test]
    fn hpbw_requires_two_elements() {
        let cfg = ArrayConfig::<f64>::critical(1, 28e9, 800e6).unwrap();
        assert!(hpbw(&cfg, 28e9).is_err());
    }

    #[test]
    fn squint_loss_trivial_cases() {
        let cfg = ArrayConfig::<f64>::prototype();
        assert!(squint_loss(&cfg, 16, 1.0, 28e9).abs() < 1e-12);
        for &f in &[27.6e9, 28.1e9, 28.4e9] {
            assert!(squint_loss(&cfg, 16, 0.0, f).abs() < 1e-12);
        }
    }

    #[test]
    fn squint_loss_matches_direct_summation() {
        let cfg = ArrayConfig::<f64>::prototype();
        let th = 60f64.to_radians();
        let f = 28.4e9;
        let dphi = |n: usize| {
            2.0 * std::f64::consts::PI * n as f64 * cfg.spacing_m * th.sin() * (cfg.carrier_hz - f) / SPEED_OF_LIGHT
        };
        let s: Complex<f64> = (0..16).map(|n| Complex::new(dphi(n).cos(), dphi(n).sin())).sum();
        let oracle = -10.0 * (s.norm_sqr() / 256.0).log10();
        assert_relative_eq!(squint_loss(&cfg, 16, th, f), oracle, epsilon = 1e-10);
        assert!(oracle > 0.1);
    }

    #[test]
    fn f32_steering_is_unit_modulus() {
        let cfg = ArrayConfig::<f32>::prototype();
        let a = steering_vector(&cfg, 0.6f32, 28.2e9);
        for v in a.values {
            assert!((v.norm() - 1.0).abs() < 1e-5);
        }
    }
}
