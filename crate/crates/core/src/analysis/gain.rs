//! Beamforming gain and measured patterns through the discrete-time datapath.
//!
//! Gains are ratios of combined-output power to the output power of a single
//! element pushed through the same sampler, so datapath effects common to
//! every element (nonlinearity, jitter) cancel to first order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::codebook::{beamforming_taps, TapSet};
use crate::dsp::{delay_and_combine, SamplerConfig};
use crate::error::{Error, Result};
use crate::num::{cst, db, mean_power, to_f64, Real};
use crate::waveform::{apply_channel, gen_chirp, gen_tone, ChannelSpec};

/// Tone frequency grid of the gain measurements.
pub const GAIN_BIN_HZ: f64 = 250e3;

/// Gain versus RF frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve<T> {
    /// RF frequencies actually measured, after snapping to the tone grid.
    pub freq_hz: Vec<T>,
    pub gain_db: Vec<T>,
}

impl<T: Real> GainCurve<T> {
    /// Peak-to-peak variation, dB.
    pub fn ripple_db(&self) -> T {
        let max = self.gain_db.iter().cloned().fold(T::neg_infinity(), T::max);
        let min = self.gain_db.iter().cloned().fold(T::infinity(), T::min);
        max - min
    }

    /// Largest deviation from `target_db`.
    pub fn max_deviation_db(&self, target_db: T) -> T {
        self.gain_db
            .iter()
            .fold(T::zero(), |a, &g| a.max((g - target_db).abs()))
    }
}

fn block_len<T: Real>(sample_rate_hz: T) -> usize {
    (to_f64(sample_rate_hz) / GAIN_BIN_HZ).round().max(1.0) as usize
}

/// Snap an RF frequency so its baseband image is a whole number of cycles
/// over `len` samples.
pub fn snap_to_grid<T: Real>(cfg: &ArrayConfig<T>, rf_hz: T, sample_rate_hz: T, len: usize) -> T {
    let bin = sample_rate_hz / cst(len as f64);
    cfg.rf_hz((cfg.baseband_hz(rf_hz) / bin).round() * bin)
}

fn single_element_power<T: Real>(
    stimulus: &[num_complex::Complex<T>],
    fs: T,
    cfg: &ArrayConfig<T>,
    scfg: &SamplerConfig<T>,
) -> Result<T> {
    let one = ArrayConfig { n_elements: 1, ..*cfg };
    let rx = apply_channel(stimulus, fs, &one, &ChannelSpec::noiseless(T::zero()))?;
    let out = delay_and_combine(&rx, &TapSet::broadside(1), scfg)?;
    Ok(mean_power(&out.samples))
}

/// End-to-end power gain (linear) of a single tone from `theta` through the
/// datapath with `taps`. Returns the snapped RF frequency and the gain.
pub fn tone_gain<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    theta: T,
    rf_hz: T,
    scfg: &SamplerConfig<T>,
) -> Result<(T, T)> {
    let fs = scfg.sample_rate_hz();
    let len = block_len(fs);
    let f = snap_to_grid(cfg, rf_hz, fs, len);
    let tone = gen_tone(cfg.baseband_hz(f), fs, len)?;
    let rx = apply_channel(&tone, fs, cfg, &ChannelSpec::noiseless(theta))?;
    let out = delay_and_combine(&rx, taps, scfg)?;
    let reference = single_element_power(&tone, fs, cfg, scfg)?;
    Ok((f, mean_power(&out.samples) / reference))
}

/// Gain of taps matched to `theta`, per RF frequency, in dB.
pub fn beamforming_gain<T: Real>(
    cfg: &ArrayConfig<T>,
    theta: T,
    freq_grid: &[T],
    scfg: &SamplerConfig<T>,
) -> Result<GainCurve<T>> {
    let taps = beamforming_taps(cfg, theta);
    let points = freq_grid
        .par_iter()
        .map(|&f| {
            if !cfg.in_band(f) {
                return Err(Error::Config(format!("frequency {f} Hz outside the band")));
            }
            tone_gain(cfg, &taps, theta, f, scfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainCurve {
        freq_hz: points.iter().map(|p| p.0).collect(),
        gain_db: points.iter().map(|p| db(p.1)).collect(),
    })
}

/// Tone gain of fixed `taps` across arrival angles, in dB.
pub fn measured_pattern<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    rf_hz: T,
    theta_grid: &[T],
    scfg: &SamplerConfig<T>,
) -> Result<Vec<T>> {
    theta_grid
        .par_iter()
        .map(|&theta| tone_gain(cfg, taps, theta, rf_hz, scfg).map(|(_, g)| db(g)))
        .collect()
}

/// Gain of matched taps for a linear chirp sweeping `fraction` of the band,
/// in dB.
pub fn chirp_gain<T: Real>(cfg: &ArrayConfig<T>, theta: T, fraction: T, scfg: &SamplerConfig<T>) -> Result<T> {
    let fs = scfg.sample_rate_hz();
    let len = block_len(fs);
    let half = cfg.bandwidth_hz * fraction / cst(2.0);
    let chirp = gen_chirp(cfg.if_center_hz - half, cfg.if_center_hz + half, fs, len)?;
    let rx = apply_channel(&chirp, fs, cfg, &ChannelSpec::noiseless(theta))?;
    let out = delay_and_combine(&rx, &beamforming_taps(cfg, theta), scfg)?;
    let reference = single_element_power(&chirp, fs, cfg, scfg)?;
    Ok(db(mean_power(&out.samples) / reference))
}
