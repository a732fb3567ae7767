//! Behavioral model of the discrete-time delay-and-combine datapath.
//!
//! Each element stream is re-timed by its quantized tap, rotated by the tap
//! phase, optionally distorted, and accumulated without `1/N` scaling. The
//! interleaved sampler is not emulated switch by switch; its depth `M` and
//! rate only bound which delays are representable. Whole-sample parts of a
//! tap are realized by indexing, fractional parts by a spectral phase ramp.
//!
//! A tap value `τ_n` is the compensation the combiner applies to element `n`:
//! the output at index `m` reads element `n` at input index `m + τ_n f_s`, so
//! relative to the reported latency `max_n floor(τ_n f_s)` element `n` is held
//! for `latency - τ_n f_s` samples. This is the time-domain form of the
//! `conj(w_n(f))` weighting used by [`crate::array::system_response`].

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::codebook::{
    quantize, training_interleave_levels, InterleavePlan, TapSet, DEFAULT_RANGE_S, DEFAULT_RESOLUTION_S,
};
use crate::error::{Error, Result};
use crate::num::{cis, cst, db, from_db, idx, mean_power, to_f64, Real};
use crate::spectral::{spectral_delay_with, spectral_derivative, FftPair};
use crate::waveform::{MultichannelSignal, SignalMeta};

/// Impedance at which a unit-power stream reads 0 dBm.
pub const REFERENCE_OHM: f64 = 50.0;

/// Power of a stream in dBm: mean `|x|^2` of 1 is 0 dBm into 50 Ω, and the
/// sample scale is held fixed as the impedance changes.
pub fn power_dbm<T: Real>(stream: &[Complex<T>], impedance_ohm: T) -> T {
    db(mean_power(stream) * cst::<T>(REFERENCE_OHM) / impedance_ohm)
}

/// Mean `|x|^2` corresponding to `dbm` into `impedance_ohm`.
pub fn dbm_to_mean_power<T: Real>(dbm: T, impedance_ohm: T) -> T {
    from_db(dbm) * impedance_ohm / cst(REFERENCE_OHM)
}

/// Rescale a stream so its mean power reads `dbm`.
pub fn scale_to_dbm<T: Real>(stream: &[Complex<T>], dbm: T, impedance_ohm: T) -> Vec<Complex<T>> {
    let p = mean_power(stream);
    if p <= T::zero() {
        return stream.to_vec();
    }
    let g = (dbm_to_mean_power(dbm, impedance_ohm) / p).sqrt();
    stream.iter().map(|v| v * g).collect()
}

/// Sampler and combiner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig<T> {
    pub plan: InterleavePlan<T>,
    /// Delay grid; zero disables quantization.
    pub delay_resolution_s: T,
    pub delay_range_s: T,
    /// RMS sampling-instant jitter; zero is ideal.
    pub jitter_rms_s: T,
    /// Input-referred third-order intercept; `None` is linear.
    pub iip3_dbm: Option<T>,
    pub reference_impedance_ohm: T,
    /// Seed of the jitter process.
    pub seed: u64,
}

impl<T: Real> SamplerConfig<T> {
    /// 7 levels at 1.6 GS/s, 5 ps resolution, 3.8 ns range, linear, no jitter.
    pub fn prototype() -> Self {
        Self {
            plan: InterleavePlan::new(7, cst(1.6e9)).expect("valid plan"),
            delay_resolution_s: cst(DEFAULT_RESOLUTION_S),
            delay_range_s: cst(DEFAULT_RANGE_S),
            jitter_rms_s: T::zero(),
            iip3_dbm: None,
            reference_impedance_ohm: cst(REFERENCE_OHM),
            seed: 0,
        }
    }

    /// Prototype delay line retimed to `sample_rate_hz`, with the interleave
    /// depth sized to cover the array's training delay range.
    pub fn for_rate(cfg: &ArrayConfig<T>, sample_rate_hz: T) -> Result<Self> {
        let levels = training_interleave_levels(cfg, sample_rate_hz)?;
        Ok(Self {
            plan: InterleavePlan::new(levels, sample_rate_hz)?,
            ..Self::prototype()
        })
    }

    /// Same as [`for_rate`](Self::for_rate) with quantization disabled.
    pub fn ideal(cfg: &ArrayConfig<T>, sample_rate_hz: T) -> Result<Self> {
        Ok(Self {
            delay_resolution_s: T::zero(),
            ..Self::for_rate(cfg, sample_rate_hz)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        InterleavePlan::new(self.plan.levels, self.plan.sample_rate_hz)?;
        if !(self.delay_resolution_s >= T::zero()) || !(self.delay_range_s > T::zero()) {
            return Err(Error::Config("delay resolution must be >= 0 and range > 0".into()));
        }
        if !(self.jitter_rms_s >= T::zero()) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        if let Some(iip3) = self.iip3_dbm {
            if !iip3.is_finite() {
                return Err(Error::Config("iip3_dbm must be finite".into()));
            }
        }
        if !(self.reference_impedance_ohm > T::zero()) {
            return Err(Error::Config("reference impedance must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> T {
        self.plan.sample_rate_hz
    }

    /// Quantize `taps` and check them against range and interleave span.
    pub fn realize(&self, taps: &TapSet<T>) -> Result<TapSet<T>> {
        let applied = if self.delay_resolution_s > T::zero() {
            quantize(taps, self.delay_resolution_s, self.delay_range_s)?
        } else {
            check_limit(taps, self.delay_range_s, "delay range")?;
            taps.clone()
        };
        // Allow the span to be met up to one resolution step of rounding.
        let slack = self.delay_resolution_s.max(self.plan.span_s() * cst(1e-9));
        check_limit(&applied, self.plan.span_s() + slack, "interleave span")?;
        Ok(applied)
    }
}

fn check_limit<T: Real>(taps: &TapSet<T>, limit: T, what: &'static str) -> Result<()> {
    match taps
        .delays_s()
        .iter()
        .enumerate()
        .find(|(_, &d)| d > limit * cst(1.0 + 1e-12))
    {
        Some((element, &d)) => Err(Error::Sizing {
            element,
            delay_ps: to_f64(d) * 1e12,
            limit_ps: to_f64(limit) * 1e12,
            what,
        }),
        None => Ok(()),
    }
}

/// Output of the multiply-and-accumulate combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSignal<T> {
    pub sample_rate_hz: T,
    pub samples: Vec<Complex<T>>,
    /// Taps after quantization.
    pub applied_taps: TapSet<T>,
    /// Largest whole-sample shift applied to any element.
    pub latency_samples: usize,
    pub meta: SignalMeta,
}

/// Memoryless cubic output and whether it was driven too hard.
#[derive(Debug, Clone, PartialEq)]
pub struct Distorted<T> {
    pub samples: Vec<Complex<T>>,
    /// Input within 10 dB of the intercept, outside the weakly nonlinear regime.
    pub overdriven: bool,
}

/// Third-order complex-envelope nonlinearity `y = x - x|x|^2 / A^2`.
///
/// `A^2` is the mean power of one tone at the intercept, so two equal tones of
/// power `P` produce third-order products at `3P - 2·IIP3` (dB). This is the
/// in-band part of the bandpass cubic `y = x - (4/3) x^3 / A_p^2`.
pub fn apply_nonlinearity<T: Real>(stream: &[Complex<T>], iip3_dbm: Option<T>, impedance_ohm: T) -> Distorted<T> {
    let Some(iip3) = iip3_dbm else {
        return Distorted {
            samples: stream.to_vec(),
            overdriven: false,
        };
    };
    let a2 = dbm_to_mean_power(iip3, impedance_ohm);
    let overdriven = power_dbm(stream, impedance_ohm) > iip3 - cst(10.0);
    Distorted {
        samples: stream.iter().map(|&x| x - x * (x.norm_sqr() / a2)).collect(),
        overdriven,
    }
}

/// Perturb every sampling instant by i.i.d. Gaussian timing error of RMS
/// `jitter_rms_s`, to first order: `x(t + δ) ≈ x(t) + δ x'(t)` with the
/// derivative taken spectrally over the block.
pub fn apply_jitter<T: Real>(stream: &[Complex<T>], sample_rate_hz: T, jitter_rms_s: T, seed: u64) -> Vec<Complex<T>> {
    if jitter_rms_s == T::zero() || stream.is_empty() {
        return stream.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    apply_jitter_with(stream, sample_rate_hz, jitter_rms_s, &mut rng)
}

fn apply_jitter_with<T: Real>(
    stream: &[Complex<T>],
    sample_rate_hz: T,
    jitter_rms_s: T,
    rng: &mut ChaCha8Rng,
) -> Vec<Complex<T>> {
    let deriv = spectral_derivative(stream, sample_rate_hz);
    stream
        .iter()
        .zip(deriv)
        .map(|(&x, dx)| x + dx * (T::standard_normal(rng) * jitter_rms_s))
        .collect()
}

/// Worst-case gain deficit (dB, positive) caused by rounding delays to
/// `resolution_s` for signals up to `max_baseband_hz`: every element off by
/// at most `π f_bb,max · resolution` radians.
pub fn quantization_loss_bound_db<T: Real>(max_baseband_hz: T, resolution_s: T) -> T {
    let eps = T::PI() * max_baseband_hz.abs() * resolution_s;
    -cst::<T>(20.0) * eps.cos().log10()
}

/// Delay, rotate, distort, and sum the element streams.
pub fn delay_and_combine<T: Real>(
    signal: &MultichannelSignal<T>,
    taps: &TapSet<T>,
    scfg: &SamplerConfig<T>,
) -> Result<CombinedSignal<T>> {
    scfg.validate()?;
    if taps.n_elements() != signal.n_channels() {
        return Err(Error::Config(format!(
            "tap set sized for {} elements, signal has {} channels",
            taps.n_elements(),
            signal.n_channels()
        )));
    }
    let fs = signal.sample_rate_hz;
    if to_f64(((fs - scfg.sample_rate_hz()) / fs).abs()) > 1e-9 {
        return Err(Error::Config(format!(
            "signal sampled at {fs} Hz but sampler runs at {} Hz",
            scfg.sample_rate_hz()
        )));
    }
    let applied = scfg.realize(taps)?;
    let len = signal.len();

    let split: Vec<(usize, T)> = applied
        .delays_s()
        .iter()
        .map(|&d| {
            let samples = d * fs;
            // Snap values a hair below an integer onto it.
            let whole = (samples + cst(1e-9)).floor();
            let mut frac = (samples - whole).max(T::zero());
            if frac < cst(1e-9) {
                frac = T::zero();
            }
            (whole.to_usize().unwrap_or(0), frac)
        })
        .collect();
    let latency = split.iter().map(|s| s.0).max().unwrap_or(0);
    if latency >= len && len > 0 {
        return Err(Error::Config(format!(
            "block of {len} samples shorter than the {latency}-sample latency"
        )));
    }
    let out_len = len.saturating_sub(latency);

    let fft = FftPair::new(len.max(1));
    let overdriven = std::sync::atomic::AtomicBool::new(false);
    let paths: Vec<Vec<Complex<T>>> = signal
        .channels
        .par_iter()
        .enumerate()
        .map(|(n, ch)| {
            let mut x = if scfg.jitter_rms_s > T::zero() {
                let mut rng = ChaCha8Rng::seed_from_u64(scfg.seed);
                rng.set_stream(n as u64);
                apply_jitter_with(ch, fs, scfg.jitter_rms_s, &mut rng)
            } else {
                ch.clone()
            };
            let (whole, frac) = split[n];
            if frac > T::zero() {
                spectral_delay_with(&fft, &mut x, -frac / fs, fs);
            }
            let rot = cis(applied.phases_rad()[n]);
            let aligned: Vec<Complex<T>> = x[whole..whole + out_len].iter().map(|v| v * rot).collect();
            let d = apply_nonlinearity(&aligned, scfg.iip3_dbm, scfg.reference_impedance_ohm);
            if d.overdriven {
                overdriven.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            d.samples
        })
        .collect();

    // Fixed accumulation order keeps the sum bit-reproducible.
    let mut samples = vec![Complex::new(T::zero(), T::zero()); out_len];
    for path in &paths {
        for (acc, v) in samples.iter_mut().zip(path) {
            *acc += v;
        }
    }

    let mut meta = signal.meta.clone();
    if overdriven.into_inner() {
        meta.warnings
            .push("nonlinearity driven within 10 dB of IIP3; cubic model inaccurate".into());
    }
    Ok(CombinedSignal {
        sample_rate_hz: fs,
        samples,
        applied_taps: applied,
        latency_samples: latency,
        meta,
    })
}

/// Coherent power gain expected from `n` perfectly aligned elements, dB.
pub fn coherent_gain_db<T: Real>(n: usize) -> T {
    db(idx::<T>(n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::system_response;
    use crate::codebook::{beamforming_taps, training_taps, SspMode};
    use crate::spectral::complex_tone;
    use crate::waveform::{apply_channel, gen_tone, gen_two_tone, ChannelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const FS: f64 = 1.6e9;

    fn scfg() -> SamplerConfig<f64> {
        SamplerConfig::prototype()
    }

    fn mc(channels: Vec<Vec<Complex<f64>>>) -> MultichannelSignal<f64> {
        MultichannelSignal::new(FS, channels, SignalMeta::default()).unwrap()
    }

    fn noise_block(n: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::waveform::awgn(n, 1.0, &mut rng)
    }

    #[test]
    fn single_element_zero_tap_is_identity() {
        let x = noise_block(256, 1);
        let out = delay_and_combine(&mc(vec![x.clone()]), &TapSet::broadside(1), &scfg()).unwrap();
        assert_eq!(out.latency_samples, 0);
        assert_eq!(out.samples, x);
    }

    #[test]
    fn equal_whole_sample_taps_shift_the_sum() {
        let x = noise_block(256, 2);
        let k = 3;
        let tau = k as f64 / FS;
        let taps = TapSet::custom(vec![tau; 4], vec![0.0; 4], SspMode::Beamforming).unwrap();
        let out = delay_and_combine(&mc(vec![x.clone(); 4]), &taps, &scfg()).unwrap();
        assert_eq!(out.latency_samples, k);
        assert_eq!(out.samples.len(), 256 - k);
        for (m, v) in out.samples.iter().enumerate() {
            assert!((v - x[m + k] * 4.0).norm() < 1e-9);
        }
    }

    #[test]
    fn latency_is_max_whole_shift() {
        let x = noise_block(128, 3);
        let taps = training_taps(&ArrayConfig::<f64>::prototype(), 1);
        let out = delay_and_combine(&mc(vec![x; 4]), &taps, &scfg()).unwrap();
        // 3.75 ns at 1.6 GS/s is exactly 6 samples.
        assert_eq!(out.latency_samples, 6);
        assert_eq!(out.samples.len(), 122);
    }

    #[test]
    fn matched_four_element_tone_gains_twelve_db() {
        let cfg = ArrayConfig::<f64>::prototype();
        let x = gen_tone(200e6, FS, 1600).unwrap();
        let th = 35f64.to_radians();
        let rx = apply_channel(&x, FS, &cfg, &ChannelSpec::noiseless(th)).unwrap();
        let taps = beamforming_taps(&cfg, th);
        let s = SamplerConfig {
            delay_resolution_s: 0.0,
            ..scfg()
        };
        let out = delay_and_combine(&rx, &taps, &s).unwrap();
        let gain = db(mean_power(&out.samples) / mean_power(&rx.channels[0]));
        assert_relative_eq!(gain, 20.0 * 4f64.log10(), epsilon = 1e-9);
        assert!((gain - 12.04).abs() < 0.01);
    }

    #[test]
    fn tone_gain_matches_analytic_response() {
        let cfg = ArrayConfig::<f64>::prototype();
        let taps = training_taps(&cfg, 1);
        for (f0, deg) in [(100e6, 20.0f64), (-250e6, -40.0), (390e6, 70.0)] {
            let x = gen_tone(f0, FS, 1600).unwrap();
            let th = deg.to_radians();
            let rx = apply_channel(&x, FS, &cfg, &ChannelSpec::noiseless(th)).unwrap();
            let out = delay_and_combine(&rx, &taps, &scfg()).unwrap();
            let gain = mean_power(&out.samples) / mean_power(&x);
            let expect = system_response(&cfg, &out.applied_taps, th, &[cfg.rf_hz(f0)]).unwrap()[0];
            assert!((db(gain) - db(expect)).abs() < 0.05, "{f0} {deg}: {gain} vs {expect}");
        }
    }

    #[test]
    fn out_of_range_tap_is_sizing_error() {
        let cfg = ArrayConfig::<f64>::critical(8, 28e9, 800e6).unwrap();
        let taps = training_taps(&cfg, 1);
        let sig = mc(vec![noise_block(64, 4); 8]);
        assert!(matches!(
            delay_and_combine(&sig, &taps, &scfg()),
            Err(Error::Sizing { element: 4, .. })
        ));
    }

    #[test]
    fn interleave_span_is_enforced() {
        let taps = training_taps(&ArrayConfig::<f64>::prototype(), 1);
        let shallow = SamplerConfig {
            plan: InterleavePlan::new(4, FS).unwrap(),
            ..scfg()
        };
        let sig = mc(vec![noise_block(64, 5); 4]);
        match delay_and_combine(&sig, &taps, &shallow) {
            Err(Error::Sizing { what, .. }) => assert_eq!(what, "interleave span"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rate_mismatch_is_config_error() {
        let sig = MultichannelSignal::new(1.0e9, vec![noise_block(64, 6)], SignalMeta::default()).unwrap();
        assert!(matches!(
            delay_and_combine(&sig, &TapSet::broadside(1), &scfg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nonlinearity_identity_and_im3_level() {
        let x = noise_block(32, 7);
        assert_eq!(apply_nonlinearity(&x, None, 50.0).samples, x);

        // Two tones at -20 dBm each, IIP3 14 dBm → IM3 at -88 dBm.
        let n = 1600;
        let x = gen_two_tone(766e6, 776e6, FS, n).unwrap();
        let x = scale_to_dbm(&x, -20.0 + 3.0103, 50.0);
        let y = apply_nonlinearity(&x, Some(14.0), 50.0);
        assert!(!y.overdriven);
        let spec = crate::spectral::centered_spectrum(&y.samples);
        let bin_dbm = |f_mhz: i64| {
            let v = spec[(f_mhz + 800) as usize] / n as f64;
            db(v.norm_sqr())
        };
        // Gain compression 1 - 3P/A^2 costs 0.01 dB at this level.
        assert!((bin_dbm(766) + 20.0104).abs() < 0.001, "{}", bin_dbm(766));
        assert!((bin_dbm(756) + 88.0).abs() < 0.01, "{}", bin_dbm(756));
        assert!((bin_dbm(786) + 88.0).abs() < 0.01);
    }

    #[test]
    fn overdrive_flagged() {
        let x = scale_to_dbm(&complex_tone(1e6, FS, 64), 8.0, 50.0);
        assert!(apply_nonlinearity(&x, Some(14.0), 50.0).overdriven);
        let mut s = scfg();
        s.iip3_dbm = Some(14.0);
        let out = delay_and_combine(&mc(vec![x]), &TapSet::broadside(1), &s).unwrap();
        assert_eq!(out.meta.warnings.len(), 1);
    }

    #[test]
    fn impedance_shifts_dbm_scale() {
        let x = complex_tone(0.0, 1.0, 8);
        assert_relative_eq!(power_dbm(&x, 50.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(power_dbm(&x, 100.0), -3.0103, epsilon = 1e-4);
        assert_relative_eq!(dbm_to_mean_power(0.0, 100.0), 2.0);
    }

    #[test]
    fn zero_jitter_is_identity() {
        let x = noise_block(64, 8);
        assert_eq!(apply_jitter(&x, FS, 0.0, 1), x);
    }

    fn jitter_snr_db(f0: f64, sigma: f64, seed: u64) -> f64 {
        let n = 16_000;
        let x = complex_tone(f0, FS, n);
        let y = apply_jitter(&x, FS, sigma, seed);
        let err: Vec<Complex<f64>> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        db(mean_power(&x) / mean_power(&err))
    }

    #[test]
    fn jitter_snr_follows_standard_relation() {
        let f0 = 400e6;
        let sigma = 1e-12;
        let expect = -20.0 * (std::f64::consts::TAU * f0 * sigma).log10();
        let snr = jitter_snr_db(f0, sigma, 21);
        assert!((snr - expect).abs() < 0.2, "{snr} vs {expect}");
        let slope = snr - jitter_snr_db(f0, 2.0 * sigma, 22);
        assert!((slope - 6.02).abs() < 0.3, "{slope}");
    }

    #[test]
    fn quantization_deficit_within_bound() {
        let cfg = ArrayConfig::<f64>::prototype();
        let grid = crate::num::linspace(27.6e9, 28.4e9, 81);
        let bound = quantization_loss_bound_db(400e6, 5e-12);
        for deg in (-80..=80).step_by(7) {
            let th = (deg as f64).to_radians();
            let ideal = beamforming_taps(&cfg, th);
            let q = quantize(&ideal, 5e-12, 3.8e-9).unwrap();
            for g in system_response(&cfg, &q, th, &grid).unwrap() {
                assert!(db(16.0 / g) <= bound + 1e-12, "{deg}: {}", db(16.0 / g));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn combiner_is_linear(
            seed in 0u64..1000,
            a_re in -2.0f64..2.0, a_im in -2.0f64..2.0,
            b_re in -2.0f64..2.0, b_im in -2.0f64..2.0,
            deg in -80.0f64..80.0,
        ) {
            let cfg = ArrayConfig::<f64>::prototype();
            let taps = beamforming_taps(&cfg, deg.to_radians());
            let x: Vec<Vec<Complex<f64>>> = (0..4).map(|n| noise_block(128, seed * 8 + n)).collect();
            let y: Vec<Vec<Complex<f64>>> = (0..4).map(|n| noise_block(128, seed * 8 + 4 + n)).collect();
            let a = Complex::new(a_re, a_im);
            let b = Complex::new(b_re, b_im);
            let mix: Vec<Vec<Complex<f64>>> = x.iter().zip(&y)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| a * u + b * v).collect())
                .collect();
            let s = scfg();
            let cx = delay_and_combine(&mc(x), &taps, &s).unwrap();
            let cy = delay_and_combine(&mc(y), &taps, &s).unwrap();
            let cm = delay_and_combine(&mc(mix), &taps, &s).unwrap();
            let scale = cm.samples.iter().map(|v| v.norm()).fold(1.0, f64::max);
            for ((m, u), v) in cm.samples.iter().zip(&cx.samples).zip(&cy.samples) {
                prop_assert!((m - (a * u + b * v)).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn output_power_bounded_by_coherent_sum(seed in 0u64..500, deg in -85.0f64..85.0) {
            let cfg = ArrayConfig::<f64>::prototype();
            let x = noise_block(256, seed);
            let rx = apply_channel(&x, FS, &cfg, &ChannelSpec::noiseless(deg.to_radians())).unwrap();
            let out = delay_and_combine(&rx, &training_taps(&cfg, 1), &scfg()).unwrap();
            let peak_in = rx.channels.iter().map(|c| mean_power(c)).fold(0.0, f64::max);
            prop_assert!(mean_power(&out.samples) <= 16.0 * peak_in * (1.0 + 1e-9));
        }
    }
}
