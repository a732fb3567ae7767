//! Tap synthesis for the two processor modes, delay quantization, and
//! interleave sizing.
//!
//! Training ("rainbow") taps spread the subcarriers of one OFDM symbol over
//! the whole angular range: `τ_n = R·n/BW` (0-based `n`). Beamforming taps
//! undo the plane-wave delay so every subcarrier adds coherently.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::error::{Error, Result};
use crate::num::{cis, cst, idx, to_f64, wrap_phase, Real};

/// Delay resolution of the prototype delay line, seconds.
pub const DEFAULT_RESOLUTION_S: f64 = 5e-12;
/// Delay range of the prototype delay line, seconds.
pub const DEFAULT_RANGE_S: f64 = 3.8e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SspMode {
    Training,
    Beamforming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization<T> {
    pub resolution_s: T,
    pub range_s: T,
}

impl<T: Real> Default for Quantization<T> {
    fn default() -> Self {
        Self {
            resolution_s: cst(DEFAULT_RESOLUTION_S),
            range_s: cst(DEFAULT_RANGE_S),
        }
    }
}

/// Per-element delay and phase weights for one processor mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet<T> {
    delays_s: Vec<T>,
    phases_rad: Vec<T>,
    mode: SspMode,
    diversity_order: u32,
    steer_rad: Option<T>,
    quantization: Option<Quantization<T>>,
}

impl<T: Real> TapSet<T> {
    /// Arbitrary tap set. Delays must be finite and non-negative.
    pub fn custom(delays_s: Vec<T>, phases_rad: Vec<T>, mode: SspMode) -> Result<Self> {
        if delays_s.len() != phases_rad.len() {
            return Err(Error::Config(format!(
                "{} delays but {} phases",
                delays_s.len(),
                phases_rad.len()
            )));
        }
        if delays_s.is_empty() {
            return Err(Error::Config("tap set needs at least one element".into()));
        }
        if let Some((n, d)) = delays_s
            .iter()
            .enumerate()
            .find(|(_, d)| !d.is_finite() || **d < T::zero())
        {
            return Err(Error::Config(format!(
                "delay of element {n} is {d}; must be finite and >= 0"
            )));
        }
        if phases_rad.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("phases must be finite".into()));
        }
        Ok(Self {
            delays_s,
            phases_rad,
            mode,
            diversity_order: 1,
            steer_rad: None,
            quantization: None,
        })
    }

    /// All-zero taps: the matched broadside beam.
    pub fn broadside(n_elements: usize) -> Self {
        Self {
            delays_s: vec![T::zero(); n_elements],
            phases_rad: vec![T::zero(); n_elements],
            mode: SspMode::Beamforming,
            diversity_order: 1,
            steer_rad: Some(T::zero()),
            quantization: None,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.delays_s.len()
    }

    pub fn delays_s(&self) -> &[T] {
        &self.delays_s
    }

    pub fn phases_rad(&self) -> &[T] {
        &self.phases_rad
    }

    pub fn mode(&self) -> SspMode {
        self.mode
    }

    pub fn diversity_order(&self) -> u32 {
        self.diversity_order
    }

    /// Steering angle for beamforming taps.
    pub fn steer_rad(&self) -> Option<T> {
        self.steer_rad
    }

    pub fn quantization(&self) -> Option<Quantization<T>> {
        self.quantization
    }

    pub fn max_delay_s(&self) -> T {
        self.delays_s.iter().fold(T::zero(), |m, &d| m.max(d))
    }

    /// Weight `exp(-j(2π f_bb τ_n + φ_n))` of element `n` at baseband frequency `f_bb`.
    pub fn weight(&self, n: usize, baseband_hz: T) -> Complex<T> {
        cis(-(T::TAU() * baseband_hz * self.delays_s[n] + self.phases_rad[n]))
    }
}

/// Rainbow training taps `τ_n = R·n/BW`, zero phase.
pub fn training_taps<T: Real>(cfg: &ArrayConfig<T>, diversity_order: u32) -> TapSet<T> {
    let r = diversity_order.max(1);
    let unit = T::from_u32(r).expect("diversity order fits scalar") / cfg.bandwidth_hz;
    TapSet {
        delays_s: (0..cfg.n_elements).map(|n| unit * idx::<T>(n)).collect(),
        phases_rad: vec![T::zero(); cfg.n_elements],
        mode: SspMode::Training,
        diversity_order: r,
        steer_rad: None,
        quantization: None,
    }
}

/// Matched taps for a plane wave from `theta`.
///
/// For `θ ≥ 0` element `n` gets `n·|Δ|` and for `θ < 0` it gets
/// `(N-1-n)·|Δ|`, with `Δ = d sinθ / c`, so all delays stay non-negative.
/// The phase restores the carrier term a baseband delay cannot produce:
/// `φ_n = 2π (f_c n Δ - f_if τ_n) mod 2π`, which makes the weight equal the
/// steering vector at the carrier up to a common factor.
pub fn beamforming_taps<T: Real>(cfg: &ArrayConfig<T>, theta: T) -> TapSet<T> {
    let step = cfg.element_delay_s(theta);
    let n_el = cfg.n_elements;
    let delays_s: Vec<T> = (0..n_el)
        .map(|n| {
            let slots = if step >= T::zero() { n } else { n_el - 1 - n };
            idx::<T>(slots) * step.abs()
        })
        .collect();
    let phases_rad = delays_s
        .iter()
        .enumerate()
        .map(|(n, &tau)| wrap_phase(T::TAU() * (cfg.carrier_hz * idx::<T>(n) * step - cfg.if_center_hz * tau)))
        .collect();
    TapSet {
        delays_s,
        phases_rad,
        mode: SspMode::Beamforming,
        diversity_order: 1,
        steer_rad: Some(theta),
        quantization: None,
    }
}

/// Round every delay to the nearest multiple of `resolution_s`.
///
/// Fails with a sizing error naming the first element whose rounded delay
/// exceeds `range_s`.
pub fn quantize<T: Real>(taps: &TapSet<T>, resolution_s: T, range_s: T) -> Result<TapSet<T>> {
    if !(resolution_s > T::zero()) || !resolution_s.is_finite() {
        return Err(Error::Config(format!(
            "delay resolution must be positive, got {resolution_s}"
        )));
    }
    let mut delays_s = Vec::with_capacity(taps.n_elements());
    for (n, &d) in taps.delays_s.iter().enumerate() {
        let q = (d / resolution_s).round() * resolution_s;
        // Half a femtosecond of slack for representation error in the range.
        if q > range_s + resolution_s * cst(1e-4) {
            return Err(Error::Sizing {
                element: n,
                delay_ps: to_f64(q) * 1e12,
                limit_ps: to_f64(range_s) * 1e12,
                what: "delay range",
            });
        }
        delays_s.push(q);
    }
    Ok(TapSet {
        delays_s,
        quantization: Some(Quantization { resolution_s, range_s }),
        ..taps.clone()
    })
}

/// Quantize with the prototype hardware values (5 ps, 3.8 ns).
pub fn quantize_default<T: Real>(taps: &TapSet<T>) -> Result<TapSet<T>> {
    let q = Quantization::default();
    quantize(taps, q.resolution_s, q.range_s)
}

/// Interleaved sampler sizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterleavePlan<T> {
    pub levels: usize,
    pub sample_rate_hz: T,
}

impl<T: Real> InterleavePlan<T> {
    pub fn new(levels: usize, sample_rate_hz: T) -> Result<Self> {
        if levels < 1 {
            return Err(Error::Config("interleave levels must be at least 1".into()));
        }
        if !(sample_rate_hz > T::zero()) || !sample_rate_hz.is_finite() {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self { levels, sample_rate_hz })
    }

    /// Conversion rate of each interleaved level.
    pub fn per_level_rate_hz(&self) -> T {
        self.sample_rate_hz / idx(self.levels)
    }

    /// Longest delay the interleave depth can span: `(M-1)/f_s`.
    pub fn span_s(&self) -> T {
        idx::<T>(self.levels - 1) / self.sample_rate_hz
    }
}

/// Closed-form minimum interleave depth for a given field of view:
/// `M = 1 + floor((d/λ_c) · sin(FoV/2) · (N-1) · BW/f_c)`.
///
/// `sin(60°) = √3/2` for the usual 120° field of view.
pub fn min_interleave_levels<T: Real>(cfg: &ArrayConfig<T>, fov_deg: T) -> usize {
    let bracket = interleave_bracket(cfg, fov_deg);
    // Guard against 5.999999... when the bracket is an exact integer.
    1 + (to_f64(bracket) + 1e-9).floor().max(0.0) as usize
}

/// The bracketed term of [`min_interleave_levels`] before flooring.
pub fn interleave_bracket<T: Real>(cfg: &ArrayConfig<T>, fov_deg: T) -> T {
    let half_fov = (fov_deg / cst(2.0)).to_radians();
    (cfg.spacing_m / cfg.wavelength_m())
        * half_fov.sin()
        * idx::<T>(cfg.n_elements.saturating_sub(1))
        * (cfg.bandwidth_hz / cfg.carrier_hz)
}

/// Smallest interleave depth whose span `(M-1)/f_s` covers the training
/// delay range `(N-1)/BW`.
pub fn training_interleave_levels<T: Real>(cfg: &ArrayConfig<T>, sample_rate_hz: T) -> Result<usize> {
    if sample_rate_hz < cfg.bandwidth_hz {
        return Err(Error::Config(format!(
            "sample rate {sample_rate_hz} Hz below bandwidth {} Hz",
            cfg.bandwidth_hz
        )));
    }
    let needed = to_f64(idx::<T>(cfg.n_elements - 1) * sample_rate_hz / cfg.bandwidth_hz);
    Ok(1 + (needed - 1e-9).ceil().max(0.0) as usize)
}

/// JSON form of a [`TapSet`]: delays in picoseconds, phases in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSetDoc {
    pub mode: SspMode,
    pub n_elements: usize,
    pub diversity_order: u32,
    pub steer_deg: Option<f64>,
    pub delays_ps: Vec<f64>,
    pub phases_deg: Vec<f64>,
    pub quantization: Option<QuantizationDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationDoc {
    pub resolution_ps: f64,
    pub range_ps: f64,
}

impl<T: Real> From<&TapSet<T>> for TapSetDoc {
    fn from(t: &TapSet<T>) -> Self {
        Self {
            mode: t.mode,
            n_elements: t.n_elements(),
            diversity_order: t.diversity_order,
            steer_deg: t.steer_rad.map(|s| to_f64(s).to_degrees()),
            delays_ps: t.delays_s.iter().map(|&d| to_f64(d) * 1e12).collect(),
            phases_deg: t.phases_rad.iter().map(|&p| to_f64(p).to_degrees()).collect(),
            quantization: t.quantization.map(|q| QuantizationDoc {
                resolution_ps: to_f64(q.resolution_s) * 1e12,
                range_ps: to_f64(q.range_s) * 1e12,
            }),
        }
    }
}

impl TapSetDoc {
    pub fn to_taps<T: Real>(&self) -> Result<TapSet<T>> {
        if self.delays_ps.len() != self.n_elements {
            return Err(Error::Config(format!(
                "n_elements is {} but {} delays given",
                self.n_elements,
                self.delays_ps.len()
            )));
        }
        let mut taps = TapSet::custom(
            self.delays_ps.iter().map(|&d| cst::<T>(d * 1e-12)).collect(),
            self.phases_deg.iter().map(|&p| cst::<T>(p.to_radians())).collect(),
            self.mode,
        )?;
        taps.diversity_order = self.diversity_order.max(1);
        taps.steer_rad = self.steer_deg.map(|s| cst(s.to_radians()));
        taps.quantization = self.quantization.map(|q| Quantization {
            resolution_s: cst(q.resolution_ps * 1e-12),
            range_s: cst(q.range_ps * 1e-12),
        });
        Ok(taps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{system_response, SPEED_OF_LIGHT};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn proto() -> ArrayConfig<f64> {
        ArrayConfig::prototype()
    }

    #[test]
    fn training_taps_prototype() {
        let t = training_taps(&proto(), 1);
        let expect = [0.0, 1.25e-9, 2.5e-9, 3.75e-9];
        for (d, e) in t.delays_s().iter().zip(expect) {
            assert_relative_eq!(*d, e, epsilon = 1e-21);
        }
        assert!(t.phases_rad().iter().all(|&p| p == 0.0));
        assert_eq!(t.mode(), SspMode::Training);
        assert!(t.max_delay_s() < DEFAULT_RANGE_S);
    }

    #[test]
    fn training_taps_single_element() {
        let cfg = ArrayConfig::<f64>::critical(1, 28e9, 800e6).unwrap();
        assert_eq!(training_taps(&cfg, 1).delays_s(), &[0.0]);
    }

    #[test]
    fn training_taps_scale_with_diversity() {
        let one = training_taps(&proto(), 1);
        let two = training_taps(&proto(), 2);
        assert_eq!(two.diversity_order(), 2);
        for (a, b) in one.delays_s().iter().zip(two.delays_s()) {
            assert_relative_eq!(2.0 * a, *b, epsilon = 1e-21);
        }
    }

    #[test]
    fn beamforming_taps_broadside_zero() {
        let t = beamforming_taps(&proto(), 0.0);
        assert!(t.delays_s().iter().all(|&d| d == 0.0));
        assert!(t.phases_rad().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn beamforming_delay_step_at_thirty_degrees() {
        let cfg = proto();
        let t = beamforming_taps(&cfg, 30f64.to_radians());
        let step = cfg.spacing_m * 0.5 / SPEED_OF_LIGHT;
        assert_relative_eq!(step * 1e12, 8.928571428, epsilon = 1e-6);
        for (n, d) in t.delays_s().iter().enumerate() {
            assert_relative_eq!(*d, n as f64 * step, max_relative = 1e-12);
        }
    }

    #[test]
    fn negative_angle_delays_reference_earliest_element() {
        let cfg = proto();
        let t = beamforming_taps(&cfg, -30f64.to_radians());
        let step = cfg.spacing_m * 0.5 / SPEED_OF_LIGHT;
        for (n, d) in t.delays_s().iter().enumerate() {
            assert!(*d >= 0.0);
            assert_relative_eq!(*d, (3 - n) as f64 * step, max_relative = 1e-12);
        }
    }

    #[test]
    fn quantize_fixed_point_and_rounding() {
        let t = TapSet::custom(vec![0.0, 5e-12, 1.25e-9, 3.75e-9], vec![0.0; 4], SspMode::Training).unwrap();
        let q = quantize_default(&t).unwrap();
        for (a, b) in t.delays_s().iter().zip(q.delays_s()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-22);
        }
        let t = TapSet::custom(vec![3.752e-9], vec![0.0], SspMode::Training).unwrap();
        let q = quantize_default(&t).unwrap();
        assert_relative_eq!(q.delays_s()[0], 3.750e-9, epsilon = 1e-21);
        assert_eq!(q.quantization(), Some(Quantization::default()));
    }

    #[test]
    fn quantize_out_of_range_names_element() {
        let t = TapSet::custom(vec![0.0, 1e-9, 4.0e-9], vec![0.0; 3], SspMode::Training).unwrap();
        match quantize_default(&t) {
            Err(Error::Sizing { element, .. }) => assert_eq!(element, 2),
            other => panic!("expected sizing error, got {other:?}"),
        }
    }

    #[test]
    fn quantize_rejects_zero_resolution() {
        let t = training_taps(&proto(), 1);
        assert!(quantize(&t, 0.0, 1e-9).is_err());
    }

    #[test]
    fn quantized_beamforming_ripple_under_half_db() {
        // Oracle: brute-force response over the band with the rounded taps.
        let cfg = proto();
        let grid = crate::num::linspace(27.6e9, 28.4e9, 401);
        for deg in (-85..=85).step_by(5) {
            let th = (deg as f64).to_radians();
            let q = quantize_default(&beamforming_taps(&cfg, th)).unwrap();
            let g = system_response(&cfg, &q, th, &grid).unwrap();
            let (lo, hi) = g.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(10.0 * (hi / lo).log10() < 0.5, "{deg} deg");
        }
    }

    #[test]
    fn interleave_closed_form() {
        let cfg = ArrayConfig::<f64>::critical(1, 28e9, 800e6).unwrap();
        assert_eq!(min_interleave_levels(&cfg, 120.0), 1);
        // Bracket = 0.5 · √3/2 · 3 · BW/f_c = 6 when BW/f_c = 8/√3.
        let ratio = 8.0 / 3f64.sqrt();
        let cfg = ArrayConfig::<f64>::critical(4, 1e9, ratio * 1e9).unwrap();
        assert_relative_eq!(interleave_bracket(&cfg, 120.0), 6.0, epsilon = 1e-12);
        assert_eq!(min_interleave_levels(&cfg, 120.0), 7);
        let narrow = ArrayConfig::<f64>::critical(4, 28e9, 1.0).unwrap();
        assert_eq!(min_interleave_levels(&narrow, 120.0), 1);
    }

    #[test]
    fn interleave_from_delay_range() {
        assert_eq!(training_interleave_levels(&proto(), 1.6e9).unwrap(), 7);
        let one = ArrayConfig::<f64>::critical(1, 28e9, 800e6).unwrap();
        assert_eq!(training_interleave_levels(&one, 1.6e9).unwrap(), 1);
        let two = ArrayConfig::<f64>::critical(2, 28e9, 800e6).unwrap();
        assert_eq!(training_interleave_levels(&two, 800e6).unwrap(), 2);
        assert!(training_interleave_levels(&two, 700e6).is_err());
        let plan = InterleavePlan::new(7, 1.6e9).unwrap();
        assert_relative_eq!(plan.per_level_rate_hz(), 1.6e9 / 7.0);
        assert_relative_eq!(plan.span_s(), 3.75e-9, epsilon = 1e-21);
    }

    #[test]
    fn doc_round_trip() {
        let t = quantize_default(&beamforming_taps(&proto(), 0.3)).unwrap();
        let doc = TapSetDoc::from(&t);
        let json = serde_json::to_string(&doc).unwrap();
        let back: TapSet<f64> = serde_json::from_str::<TapSetDoc>(&json).unwrap().to_taps().unwrap();
        assert_eq!(back.mode(), t.mode());
        for (a, b) in back.delays_s().iter().zip(t.delays_s()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-24);
        }
        for (a, b) in back.phases_rad().iter().zip(t.phases_rad()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn quantization_error_bounded_and_idempotent(
            delays in proptest::collection::vec(0.0f64..3.7e-9, 1..16),
            res_ps in 1.0f64..20.0,
        ) {
            let res = res_ps * 1e-12;
            let n = delays.len();
            let t = TapSet::custom(delays.clone(), vec![0.0; n], SspMode::Training).unwrap();
            let q = quantize(&t, res, 4e-9).unwrap();
            for (d, qd) in delays.iter().zip(q.delays_s()) {
                prop_assert!((d - qd).abs() <= res / 2.0 + 1e-24);
                let k = qd / res;
                prop_assert!((k - k.round()).abs() < 1e-6);
            }
            let qq = quantize(&q, res, 4e-9).unwrap();
            prop_assert_eq!(qq.delays_s(), q.delays_s());
        }

        #[test]
        fn training_delays_strictly_increase(n in 2usize..32, r in 1u32..5) {
            let cfg = ArrayConfig::<f64>::critical(n, 28e9, 800e6).unwrap();
            let t = training_taps(&cfg, r);
            prop_assert!(t.delays_s().windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn beamforming_taps_reach_full_gain(deg in -90.0f64..90.0, n in 1usize..12, f_off in -0.4e9f64..0.4e9) {
            let cfg = ArrayConfig::<f64>::critical(n, 28e9, 800e6).unwrap();
            let th = deg.to_radians();
            let t = beamforming_taps(&cfg, th);
            prop_assert!(t.delays_s().iter().all(|&d| d >= 0.0));
            let g = system_response(&cfg, &t, th, &[28e9 + f_off]).unwrap()[0];
            let full = (n * n) as f64;
            prop_assert!((g - full).abs() <= 1e-6 * full);
        }
    }
}
