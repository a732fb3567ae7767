//! Stimulus generation and the plane-wave array channel.
//!
//! Everything here lives at complex baseband. The channel applies each
//! element's propagation delay as an exact spectral phase ramp plus the carrier
//! rotation a downconverter would leave behind, then adds element-referred
//! white Gaussian noise.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::error::{Error, Result};
use crate::num::{cis, cst, from_db, idx, mean_power, to_f64, Real};
use crate::spectral::{complex_tone, FftPair};

/// Subcarrier spacing of the prototype OFDM pilot, Hz.
pub const DEFAULT_SPACING_HZ: f64 = 960e3;

/// OFDM subcarrier grid, pilot allocation, and symbol framing.
///
/// Subcarriers are indexed in centered order: index `i` is the signed bin
/// `i - n/2` at frequency `(i - n/2)·Δf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmPlan<T> {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: T,
    pub active_mask: Vec<bool>,
    pub cp_len: usize,
    /// One unit-modulus value per active subcarrier, in index order.
    pub pilot_values: Vec<Complex<T>>,
}

impl<T: Real> OfdmPlan<T> {
    /// Build a plan with `n_active` contiguous subcarriers centred on DC and
    /// chirp-like unit-modulus pilots.
    pub fn centered(n_subcarriers: usize, spacing_hz: T, n_active: usize, cp_len: usize) -> Result<Self> {
        if n_active > n_subcarriers {
            return Err(Error::Config(format!(
                "{n_active} active subcarriers exceed FFT size {n_subcarriers}"
            )));
        }
        let half = n_subcarriers / 2;
        let lo = half - n_active / 2;
        let active_mask = (0..n_subcarriers).map(|i| i >= lo && i < lo + n_active).collect();
        let plan = Self {
            n_subcarriers,
            subcarrier_spacing_hz: spacing_hz,
            active_mask,
            cp_len,
            pilot_values: newman_pilots(n_active),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Data grid: 1024-point FFT at 960 kHz with the central 512 subcarriers
    /// active (491.52 MHz occupied) and a 1/8 cyclic prefix.
    pub fn data_default() -> Self {
        Self::centered(1024, cst(DEFAULT_SPACING_HZ), 512, 128).expect("default plan is valid")
    }

    /// Pilot grid for rainbow training: every 960 kHz subcarrier inside
    /// `±BW/2` is active, so the pilot spans the whole delay period `1/τ`.
    /// The pilot symbol is simply repeated, which makes a cyclic prefix
    /// redundant; without one the stream is exactly periodic in the FFT
    /// length and any fractional delay acts as a pure per-subcarrier phase.
    pub fn training(cfg: &ArrayConfig<T>) -> Result<Self> {
        let spacing: T = cst(DEFAULT_SPACING_HZ);
        let half_bins = (to_f64(cfg.bandwidth_hz / spacing) / 2.0 + 1e-9).floor() as usize;
        let n_active = 2 * half_bins + 1;
        let n_fft = n_active.next_power_of_two();
        let plan = Self::centered(n_fft, spacing, n_active, 0)?;
        plan.validate_for(cfg)?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_subcarriers.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_subcarriers must be a power of two, got {}",
                self.n_subcarriers
            )));
        }
        if self.active_mask.len() != self.n_subcarriers {
            return Err(Error::Config("active_mask length must equal n_subcarriers".into()));
        }
        if !(self.subcarrier_spacing_hz > T::zero()) {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        if self.pilot_values.len() != self.n_active() {
            return Err(Error::Config(format!(
                "{} pilot values for {} active subcarriers",
                self.pilot_values.len(),
                self.n_active()
            )));
        }
        if self.pilot_values.iter().any(|p| (to_f64(p.norm()) - 1.0).abs() > 1e-6) {
            return Err(Error::Config("pilot values must be unit modulus".into()));
        }
        Ok(())
    }

    /// Plan checks that depend on the array's bandwidth.
    pub fn validate_for(&self, cfg: &ArrayConfig<T>) -> Result<()> {
        self.validate()?;
        let occupied = to_f64(self.occupied_bandwidth_hz());
        // Bin-count rounding: 833 × 960 kHz = 799.68 MHz fits 800 MHz.
        if occupied > to_f64(cfg.bandwidth_hz) * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "occupied bandwidth {occupied} Hz exceeds array bandwidth {} Hz",
                cfg.bandwidth_hz
            )));
        }
        Ok(())
    }

    pub fn n_active(&self) -> usize {
        self.active_mask.iter().filter(|&&a| a).count()
    }

    pub fn occupied_bandwidth_hz(&self) -> T {
        idx::<T>(self.n_active()) * self.subcarrier_spacing_hz
    }

    pub fn sample_rate_hz(&self) -> T {
        idx::<T>(self.n_subcarriers) * self.subcarrier_spacing_hz
    }

    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    /// Signed bin of a centered index.
    pub fn bin_of_index(&self, i: usize) -> i64 {
        i as i64 - (self.n_subcarriers / 2) as i64
    }

    /// Baseband frequency of a centered index.
    pub fn index_frequency_hz(&self, i: usize) -> T {
        T::from_i64(self.bin_of_index(i)).expect("bin fits scalar") * self.subcarrier_spacing_hz
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.n_subcarriers).filter(|&i| self.active_mask[i]).collect()
    }

    /// Natural-order FFT position of a centered index.
    fn fft_position(&self, i: usize) -> usize {
        let n = self.n_subcarriers;
        (i + n - n / 2) % n
    }
}

/// Unit-modulus pilots with quadratic phase, which keeps the time-domain
/// crest factor low.
fn newman_pilots<T: Real>(n: usize) -> Vec<Complex<T>> {
    (0..n)
        .map(|k| {
            let ph = std::f64::consts::PI * (k * k) as f64 / n.max(1) as f64;
            cis(cst::<T>(ph % std::f64::consts::TAU))
        })
        .collect()
}

/// OFDM synthesis of explicit per-symbol subcarrier values (one row per
/// symbol, one entry per active subcarrier). The output has unit average
/// power when the subcarrier values do.
pub fn modulate_ofdm<T: Real>(plan: &OfdmPlan<T>, symbols: &[Vec<Complex<T>>]) -> Result<Vec<Complex<T>>> {
    plan.validate()?;
    let active = plan.active_indices();
    let fft = FftPair::new(plan.n_subcarriers);
    let scale = idx::<T>(plan.n_subcarriers) / idx::<T>(active.len().max(1)).sqrt();
    let mut out = Vec::with_capacity(symbols.len() * plan.symbol_len());
    let mut buf = vec![Complex::new(T::zero(), T::zero()); plan.n_subcarriers];
    for row in symbols {
        if row.len() != active.len() {
            return Err(Error::Config(format!(
                "symbol row has {} values for {} active subcarriers",
                row.len(),
                active.len()
            )));
        }
        buf.iter_mut().for_each(|v| *v = Complex::new(T::zero(), T::zero()));
        for (&i, &v) in active.iter().zip(row) {
            buf[plan.fft_position(i)] = v;
        }
        fft.inverse(&mut buf);
        let body: Vec<Complex<T>> = buf.iter().map(|v| v * scale).collect();
        out.extend_from_slice(&body[plan.n_subcarriers - plan.cp_len..]);
        out.extend_from_slice(&body);
    }
    Ok(out)
}

/// Inverse of [`modulate_ofdm`]: strip cyclic prefixes and return the active
/// subcarrier values of each symbol.
pub fn demodulate_ofdm<T: Real>(plan: &OfdmPlan<T>, stream: &[Complex<T>]) -> Vec<Vec<Complex<T>>> {
    let active = plan.active_indices();
    let fft = FftPair::new(plan.n_subcarriers);
    let scale = idx::<T>(active.len().max(1)).sqrt() / idx::<T>(plan.n_subcarriers);
    stream
        .chunks_exact(plan.symbol_len())
        .map(|sym| {
            let mut buf = sym[plan.cp_len..].to_vec();
            fft.forward(&mut buf);
            active.iter().map(|&i| buf[plan.fft_position(i)] * scale).collect()
        })
        .collect()
}

/// Repeated pilot symbol, unit average power.
pub fn gen_ofdm<T: Real>(plan: &OfdmPlan<T>, n_symbols: usize) -> Result<Vec<Complex<T>>> {
    let rows = vec![plan.pilot_values.clone(); n_symbols];
    modulate_ofdm(plan, &rows)
}

fn check_nyquist<T: Real>(freq_hz: T, sample_rate_hz: T) -> Result<()> {
    if freq_hz.abs() >= sample_rate_hz / cst(2.0) {
        return Err(Error::Config(format!(
            "frequency {freq_hz} Hz not below Nyquist for {sample_rate_hz} Hz"
        )));
    }
    Ok(())
}

/// Unit-power complex tone.
pub fn gen_tone<T: Real>(freq_hz: T, sample_rate_hz: T, n_samples: usize) -> Result<Vec<Complex<T>>> {
    check_nyquist(freq_hz, sample_rate_hz)?;
    Ok(complex_tone(freq_hz, sample_rate_hz, n_samples))
}

/// Equal-amplitude tone pair, unit total power.
pub fn gen_two_tone<T: Real>(f1: T, f2: T, sample_rate_hz: T, n_samples: usize) -> Result<Vec<Complex<T>>> {
    check_nyquist(f1, sample_rate_hz)?;
    check_nyquist(f2, sample_rate_hz)?;
    let a = complex_tone(f1, sample_rate_hz, n_samples);
    let b = complex_tone(f2, sample_rate_hz, n_samples);
    let s = T::FRAC_1_SQRT_2();
    Ok(a.iter().zip(&b).map(|(x, y)| (x + y) * s).collect())
}

/// Linear chirp sweeping `f_lo → f_hi` across the `n_samples` block.
pub fn gen_chirp<T: Real>(f_lo: T, f_hi: T, sample_rate_hz: T, n_samples: usize) -> Result<Vec<Complex<T>>> {
    check_nyquist(f_lo, sample_rate_hz)?;
    check_nyquist(f_hi, sample_rate_hz)?;
    let fs = to_f64(sample_rate_hz);
    let (lo, hi) = (to_f64(f_lo), to_f64(f_hi));
    let dur = n_samples.saturating_sub(1).max(1) as f64 / fs;
    let k = (hi - lo) / dur;
    Ok((0..n_samples)
        .map(|i| {
            let t = i as f64 / fs;
            let cycles = (lo * t + 0.5 * k * t * t).rem_euclid(1.0);
            cis(cst::<T>(std::f64::consts::TAU * cycles))
        })
        .collect())
}

/// Square QAM constellations with Gray mapping and unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Qam {
    Qam4,
    Qam16,
}

impl Qam {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            4 => Ok(Self::Qam4),
            16 => Ok(Self::Qam16),
            other => Err(Error::Config(format!("unsupported QAM order {other}; use 4 or 16"))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Self::Qam4 => 4,
            Self::Qam16 => 16,
        }
    }

    pub fn bits_per_symbol(self) -> u32 {
        self.order().trailing_zeros()
    }

    fn norm(self) -> f64 {
        match self {
            Self::Qam4 => 2f64.sqrt(),
            Self::Qam16 => 10f64.sqrt(),
        }
    }

    /// Gray code to axis amplitude: 2 levels {-1, 1}; 4 levels
    /// 00→-3, 01→-1, 11→+1, 10→+3.
    fn axis_level(self, gray: u32) -> f64 {
        match self {
            Self::Qam4 => {
                if gray == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            Self::Qam16 => match gray {
                0b00 => -3.0,
                0b01 => -1.0,
                0b11 => 1.0,
                _ => 3.0,
            },
        }
    }

    fn axis_gray(self, amplitude: f64) -> u32 {
        match self {
            Self::Qam4 => u32::from(amplitude >= 0.0),
            Self::Qam16 => {
                if amplitude < -2.0 {
                    0b00
                } else if amplitude < 0.0 {
                    0b01
                } else if amplitude < 2.0 {
                    0b11
                } else {
                    0b10
                }
            }
        }
    }

    /// Map a symbol index (`bits_per_symbol` bits, I bits high) to a point.
    pub fn map<T: Real>(self, word: u32) -> Complex<T> {
        let half = self.bits_per_symbol() / 2;
        let mask = (1 << half) - 1;
        let i = self.axis_level((word >> half) & mask);
        let q = self.axis_level(word & mask);
        Complex::new(cst(i / self.norm()), cst(q / self.norm()))
    }

    /// Nearest-point hard decision back to the symbol index.
    pub fn demap<T: Real>(self, point: Complex<T>) -> u32 {
        let half = self.bits_per_symbol() / 2;
        let i = self.axis_gray(to_f64(point.re) * self.norm());
        let q = self.axis_gray(to_f64(point.im) * self.norm());
        (i << half) | q
    }

    pub fn points<T: Real>(self) -> Vec<Complex<T>> {
        (0..self.order()).map(|w| self.map(w)).collect()
    }

    /// Snap to the nearest constellation point.
    pub fn decide<T: Real>(self, point: Complex<T>) -> Complex<T> {
        self.map(self.demap(point))
    }
}

/// QAM-on-OFDM burst and its reference symbols.
#[derive(Debug, Clone)]
pub struct QamBurst<T> {
    pub stream: Vec<Complex<T>>,
    /// Transmitted symbol indices, row per OFDM symbol.
    pub words: Vec<Vec<u32>>,
    /// Transmitted constellation points, row per OFDM symbol.
    pub reference: Vec<Vec<Complex<T>>>,
}

/// Random Gray-mapped QAM on every active subcarrier of `n_symbols` OFDM symbols.
pub fn gen_qam<T: Real>(qam: Qam, n_symbols: usize, plan: &OfdmPlan<T>, seed: u64) -> Result<QamBurst<T>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_active = plan.n_active();
    let words: Vec<Vec<u32>> = (0..n_symbols)
        .map(|_| (0..n_active).map(|_| rng.random_range(0..qam.order())).collect())
        .collect();
    let reference: Vec<Vec<Complex<T>>> = words
        .iter()
        .map(|row| row.iter().map(|&w| qam.map(w)).collect())
        .collect();
    let stream = modulate_ofdm(plan, &reference)?;
    Ok(QamBurst {
        stream,
        words,
        reference,
    })
}

/// Angle of arrival, noise level, and RNG seed of the array channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec<T> {
    pub theta: T,
    /// Per-element SNR; `None` is noiseless.
    pub snr_db: Option<T>,
    pub seed: u64,
}

impl<T: Real> ChannelSpec<T> {
    pub fn noiseless(theta: T) -> Self {
        Self {
            theta,
            snr_db: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.abs() <= T::FRAC_PI_2() * cst(1.0 + 1e-12)) {
            return Err(Error::Config(format!("angle {} rad outside ±π/2", self.theta)));
        }
        Ok(())
    }
}

/// Provenance carried with generated signals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub stimulus: String,
    pub theta_deg: Option<f64>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    /// Set when a nonlinearity was driven within 10 dB of its intercept.
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Per-element complex-baseband streams sharing one sample clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal<T> {
    pub sample_rate_hz: T,
    pub channels: Vec<Vec<Complex<T>>>,
    pub meta: SignalMeta,
}

impl<T: Real> MultichannelSignal<T> {
    pub fn new(sample_rate_hz: T, channels: Vec<Vec<Complex<T>>>, meta: SignalMeta) -> Result<Self> {
        let s = Self {
            sample_rate_hz,
            channels,
            meta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > T::zero()) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(first) = self.channels.first() {
            if self.channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Config("channels must have equal length".into()));
            }
        }
        if self
            .channels
            .iter()
            .flatten()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Config("non-finite sample in signal".into()));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Complex white Gaussian noise of the given mean power.
pub fn awgn<T: Real>(n: usize, power: T, rng: &mut ChaCha8Rng) -> Vec<Complex<T>> {
    let sigma = (power / cst(2.0)).sqrt();
    (0..n)
        .map(|_| Complex::new(T::standard_normal(rng) * sigma, T::standard_normal(rng) * sigma))
        .collect()
}

/// Receive `stimulus` on every element of the array from direction
/// `spec.theta`.
///
/// Element `n` sees the stimulus delayed by `n·Δ` (`Δ = d sinθ / c`, applied as
/// a spectral phase ramp over the block, so the block should hold whole
/// periods of the stimulus) and rotated by `exp(-j 2π f_LO n Δ)`. Noise is
/// added per element at `snr_db` relative to the stimulus power, drawn from a
/// ChaCha stream selected by `(seed, element)`.
pub fn apply_channel<T: Real>(
    stimulus: &[Complex<T>],
    sample_rate_hz: T,
    cfg: &ArrayConfig<T>,
    spec: &ChannelSpec<T>,
) -> Result<MultichannelSignal<T>> {
    cfg.validate()?;
    spec.validate()?;
    let step = cfg.element_delay_s(spec.theta);
    let fft = FftPair::new(stimulus.len());
    let signal_power = mean_power(stimulus);
    let channels: Vec<Vec<Complex<T>>> = (0..cfg.n_elements)
        .into_par_iter()
        .map(|n| {
            let delay = idx::<T>(n) * step;
            let mut ch = stimulus.to_vec();
            if delay != T::zero() && !ch.is_empty() {
                crate::spectral::spectral_delay_with(&fft, &mut ch, delay, sample_rate_hz);
            }
            let carrier = cis(-T::TAU() * cfg.lo_hz() * delay);
            ch.iter_mut().for_each(|v| *v *= carrier);
            if let Some(snr) = spec.snr_db {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(n as u64);
                let noise = awgn(ch.len(), signal_power / from_db(snr), &mut rng);
                ch.iter_mut().zip(noise).for_each(|(v, w)| *v += w);
            }
            ch
        })
        .collect();
    MultichannelSignal::new(
        sample_rate_hz,
        channels,
        SignalMeta {
            stimulus: String::new(),
            theta_deg: Some(to_f64(spec.theta).to_degrees()),
            snr_db: spec.snr_db.map(to_f64),
            seed: Some(spec.seed),
            warnings: Vec::new(),
        },
    )
}
