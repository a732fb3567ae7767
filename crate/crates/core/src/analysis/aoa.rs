//! Rainbow-beam angle estimation: frequency-to-angle map, PSD peak inversion,
//! and the end-to-end heat map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::psd::{psd, Averaging};
use crate::array::{system_response, ArrayConfig};
use crate::codebook::{SspMode, TapSet};
use crate::dsp::{delay_and_combine, SamplerConfig};
use crate::error::{Error, Result};
use crate::num::{cst, db, idx, to_f64, Real};
use crate::waveform::{apply_channel, gen_ofdm, ChannelSpec, OfdmPlan};

/// Minimum peak-to-median ratio for a detection, dB.
pub const DETECTION_THRESHOLD_DB: f64 = 3.0;

/// OFDM symbols per end-to-end training capture.
pub const TRAINING_SYMBOLS: usize = 3;

/// Boxcar half-width, as a fraction of the active subcarriers, applied to
/// spectra before lobe extraction.
pub const SMOOTHING_FRACTION: f64 = 1.0 / 64.0;

fn smoothing_half_width(n_active: usize) -> usize {
    (n_active as f64 * SMOOTHING_FRACTION).round() as usize
}

/// Centered moving average; windows are truncated at the edges.
fn smooth<T: Real>(values: &[T], half_width: usize) -> Vec<T> {
    if half_width == 0 {
        return values.to_vec();
    }
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(T::zero());
    for &v in values {
        let last = *prefix.last().expect("non-empty");
        prefix.push(last + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / idx(hi - lo)
        })
        .collect()
}

/// Peak subcarrier of the analytic system response for every probe angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleFrequencyMap<T> {
    pub angles_rad: Vec<T>,
    /// Signed subcarrier bin of the response maximum, one per angle.
    pub peak_subcarrier_index: Vec<i64>,
    /// Sub-bin lobe centroid, in signed bins, computed the same way as for
    /// measured spectra.
    pub peak_position: Vec<T>,
    /// Linear gain at the peak subcarrier.
    pub peak_gain: Vec<T>,
    /// The `R` strongest lobes per angle, strongest first.
    pub peaks: Vec<Vec<i64>>,
    pub diversity_order: u32,
    pub n_elements: usize,
    pub plan: OfdmPlan<T>,
}

/// Single-capture AoA estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoaEstimate<T> {
    pub theta_rad: T,
    /// Signed subcarrier bin of the received PSD maximum.
    pub peak_bin: i64,
    /// Peak over median of the smoothed PSD across active subcarriers, dB.
    pub confidence_db: T,
}

/// Two grid angles whose ridge peaks fall on the same subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub theta_a_deg: f64,
    pub theta_b_deg: f64,
    pub bin: i64,
}

fn argmax<T: Real>(values: &[T]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
        .0
}

/// Argmax and half-power centroid of the lobe holding the maximum.
///
/// The lobe is the contiguous run around the maximum that stays above half
/// the peak; its samples are weighted by their excess over half power.
fn top_lobe<T: Real>(values: &[T]) -> (usize, T) {
    let (imax, peak) = values
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let half = peak / cst(2.0);
    let mut lo = imax;
    while lo > 0 && values[lo - 1] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < values.len() && values[hi + 1] > half {
        hi += 1;
    }
    let (mut num, mut den) = (T::zero(), T::zero());
    for (i, &v) in values.iter().enumerate().take(hi + 1).skip(lo) {
        let w = v - half;
        num += w * idx::<T>(i);
        den += w;
    }
    let centroid = if den > T::zero() { num / den } else { idx(imax) };
    (imax, centroid)
}

/// Indices of the `count` largest local maxima, strongest first.
fn strongest_lobes<T: Real>(values: &[T], count: usize) -> Vec<usize> {
    let n = values.len();
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == n || values[i] > values[i + 1];
            left && right
        })
        .collect();
    maxima.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    maxima.truncate(count);
    maxima
}

/// RF frequencies of the plan's active subcarriers for this array.
pub fn active_rf_grid<T: Real>(cfg: &ArrayConfig<T>, plan: &OfdmPlan<T>) -> Vec<T> {
    plan.active_indices()
        .into_iter()
        .map(|i| cfg.rf_hz(plan.index_frequency_hz(i)))
        .collect()
}

/// Tabulate the analytic peak subcarrier for each angle, without checking
/// injectivity.
pub fn build_map_unchecked<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    plan: &OfdmPlan<T>,
    theta_grid: &[T],
) -> Result<AngleFrequencyMap<T>> {
    if taps.mode() != SspMode::Training {
        return Err(Error::Config("frequency-to-angle map needs training taps".into()));
    }
    plan.validate_for(cfg)?;
    let active = plan.active_indices();
    let first_bin = plan.bin_of_index(active[0]);
    let grid = active_rf_grid(cfg, plan);
    let r = taps.diversity_order() as usize;
    let hw = smoothing_half_width(active.len());

    let rows: Vec<(i64, T, T, Vec<i64>)> = theta_grid
        .par_iter()
        .map(|&theta| {
            let g = system_response(cfg, taps, theta, &grid)?;
            let imax = argmax(&g);
            let (_, centroid) = top_lobe(&smooth(&g, hw));
            let peaks = strongest_lobes(&g, r)
                .into_iter()
                .map(|i| first_bin + i as i64)
                .collect();
            Ok((
                first_bin + imax as i64,
                centroid + cst(first_bin as f64),
                g[imax],
                peaks,
            ))
        })
        .collect::<Result<_>>()?;

    let mut map = AngleFrequencyMap {
        angles_rad: theta_grid.to_vec(),
        peak_subcarrier_index: Vec::with_capacity(rows.len()),
        peak_position: Vec::with_capacity(rows.len()),
        peak_gain: Vec::with_capacity(rows.len()),
        peaks: Vec::with_capacity(rows.len()),
        diversity_order: taps.diversity_order(),
        n_elements: cfg.n_elements,
        plan: plan.clone(),
    };
    for (bin, pos, gain, peaks) in rows {
        map.peak_subcarrier_index.push(bin);
        map.peak_position.push(pos);
        map.peak_gain.push(gain);
        map.peaks.push(peaks);
    }
    Ok(map)
}

/// Tabulate the map and require the `R = 1` ridge to be one-to-one.
pub fn build_map<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    plan: &OfdmPlan<T>,
    theta_grid: &[T],
) -> Result<AngleFrequencyMap<T>> {
    let map = build_map_unchecked(cfg, taps, plan, theta_grid)?;
    let collisions = map.collisions();
    if !collisions.is_empty() {
        return Err(Error::NonInjective {
            collisions: collisions
                .into_iter()
                .map(|c| (c.theta_a_deg, c.theta_b_deg, c.bin))
                .collect(),
        });
    }
    Ok(map)
}

impl<T: Real> AngleFrequencyMap<T> {
    pub fn len(&self) -> usize {
        self.angles_rad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_rad.is_empty()
    }

    /// Angles whose peak reaches at least half the coherent gain `N^2`.
    pub fn on_ridge(&self, i: usize) -> bool {
        let full = idx::<T>(self.n_elements * self.n_elements);
        self.peak_gain[i] >= full / cst(2.0)
    }

    /// Ridge angle pairs sharing a peak subcarrier. Empty for `R > 1`, where
    /// sharing is by construction.
    pub fn collisions(&self) -> Vec<Collision> {
        if self.diversity_order != 1 {
            return Vec::new();
        }
        let mut seen: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
        let mut out = Vec::new();
        for i in (0..self.len()).filter(|&i| self.on_ridge(i)) {
            let bin = self.peak_subcarrier_index[i];
            if let Some(&j) = seen.get(&bin) {
                out.push(Collision {
                    theta_a_deg: to_f64(self.angles_rad[j]).to_degrees(),
                    theta_b_deg: to_f64(self.angles_rad[i]).to_degrees(),
                    bin,
                });
            }
            seen.insert(bin, i);
        }
        out
    }

    /// Widest contiguous run of grid angles containing the angle closest to
    /// broadside over which the ridge peaks are all distinct, in degrees.
    pub fn injective_span_deg(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let centre = (0..self.len())
            .min_by(|&a, &b| {
                self.angles_rad[a]
                    .abs()
                    .partial_cmp(&self.angles_rad[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        let mut used = std::collections::BTreeSet::from([self.peak_subcarrier_index[centre]]);
        let (mut lo, mut hi) = (centre, centre);
        loop {
            let mut grew = false;
            if hi + 1 < self.len() && used.insert(self.peak_subcarrier_index[hi + 1]) {
                hi += 1;
                grew = true;
            }
            if lo > 0 && used.insert(self.peak_subcarrier_index[lo - 1]) {
                lo -= 1;
                grew = true;
            }
            if !grew {
                break;
            }
        }
        Some((
            to_f64(self.angles_rad[lo]).to_degrees(),
            to_f64(self.angles_rad[hi]).to_degrees(),
        ))
    }

    /// Invert a lobe centroid (signed bins) to an angle.
    ///
    /// The nearest tabulated centroid selects a grid angle; when the position
    /// lies between it and an adjacent entry on the same ridge segment the
    /// angle is interpolated linearly.
    pub fn lookup(&self, position: T) -> T {
        let dist = |i: usize| (self.peak_position[i] - position).abs();
        let j = (0..self.len())
            .min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("map is not empty");
        // Steps larger than this are wraps of the ridge, not neighbours.
        let max_step = idx::<T>(self.plan.n_active()) / cst(16.0);
        let pj = self.peak_position[j];
        for k in [j.wrapping_sub(1), j + 1] {
            if k >= self.len() {
                continue;
            }
            let pk = self.peak_position[k];
            let span = pk - pj;
            if span == T::zero() || span.abs() > max_step {
                continue;
            }
            let t = (position - pj) / span;
            if t >= T::zero() && t <= T::one() {
                return self.angles_rad[j] + t * (self.angles_rad[k] - self.angles_rad[j]);
            }
        }
        self.angles_rad[j]
    }
}

/// Estimate the angle of arrival from a centered PSD on the map's grid.
pub fn estimate_aoa<T: Real>(received_psd: &[T], map: &AngleFrequencyMap<T>) -> Result<AoaEstimate<T>> {
    if received_psd.len() != map.plan.n_subcarriers {
        return Err(Error::Config(format!(
            "PSD has {} bins, map grid has {}",
            received_psd.len(),
            map.plan.n_subcarriers
        )));
    }
    if map.is_empty() {
        return Err(Error::Config("empty frequency-to-angle map".into()));
    }
    let active = map.plan.active_indices();
    let first_bin = map.plan.bin_of_index(active[0]);
    let raw: Vec<T> = active.iter().map(|&i| received_psd[i]).collect();
    let values = smooth(&raw, smoothing_half_width(active.len()));
    let (imax, centroid) = top_lobe(&values);

    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = sorted[sorted.len() / 2];
    let confidence_db = if median > T::zero() {
        db(values[imax] / median)
    } else {
        T::infinity()
    };
    if !(confidence_db >= cst(DETECTION_THRESHOLD_DB)) {
        return Err(Error::NoDetection {
            peak_over_median_db: to_f64(confidence_db),
        });
    }
    let position = centroid + cst(first_bin as f64);
    Ok(AoaEstimate {
        theta_rad: map.lookup(position),
        peak_bin: first_bin + imax as i64,
        confidence_db,
    })
}

/// Segmenting used on OFDM captures: one rectangular window per symbol,
/// starting mid-prefix so small delays stay inside the cyclic extension.
pub fn ofdm_averaging<T: Real>(plan: &OfdmPlan<T>) -> Averaging {
    Averaging::symbol_aligned(plan.symbol_len(), plan.cp_len / 2)
}

/// Simulate one training capture and return the combined-output PSD.
pub fn receive_training<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    plan: &OfdmPlan<T>,
    channel: &ChannelSpec<T>,
    scfg: &SamplerConfig<T>,
    n_symbols: usize,
) -> Result<Vec<T>> {
    let stimulus = gen_ofdm(plan, n_symbols)?;
    let rx = apply_channel(&stimulus, plan.sample_rate_hz(), cfg, channel)?;
    let out = delay_and_combine(&rx, taps, scfg)?;
    psd(&out.samples, plan.n_subcarriers, &ofdm_averaging(plan))
}

/// End-to-end gain per angle and active subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap<T> {
    pub angles_rad: Vec<T>,
    /// Baseband frequency of each active subcarrier.
    pub freq_hz: Vec<T>,
    /// Signed bin of each active subcarrier.
    pub bins: Vec<i64>,
    /// `gain_db[angle][subcarrier]`.
    pub gain_db: Vec<Vec<T>>,
}

impl<T: Real> Heatmap<T> {
    /// Signed bin of the strongest cell in each row.
    pub fn row_argmax(&self) -> Vec<i64> {
        self.gain_db
            .iter()
            .map(|row| {
                let (i, _) = row
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
                self.bins[i]
            })
            .collect()
    }
}

/// Measure the training response through waveform, channel, datapath and PSD
/// for every angle. Cells hold output over input PSD on active subcarriers.
pub fn heatmap<T: Real>(
    cfg: &ArrayConfig<T>,
    taps: &TapSet<T>,
    plan: &OfdmPlan<T>,
    theta_grid: &[T],
    scfg: &SamplerConfig<T>,
) -> Result<Heatmap<T>> {
    plan.validate_for(cfg)?;
    let active = plan.active_indices();
    let stimulus = gen_ofdm(plan, TRAINING_SYMBOLS)?;
    let reference = psd(&stimulus, plan.n_subcarriers, &ofdm_averaging(plan))?;
    let gain_db = theta_grid
        .par_iter()
        .map(|&theta| {
            let rx = apply_channel(&stimulus, plan.sample_rate_hz(), cfg, &ChannelSpec::noiseless(theta))?;
            let out = delay_and_combine(&rx, taps, scfg)?;
            let p = psd(&out.samples, plan.n_subcarriers, &ofdm_averaging(plan))?;
            Ok(active.iter().map(|&i| db(p[i] / reference[i])).collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(Heatmap {
        angles_rad: theta_grid.to_vec(),
        freq_hz: active.iter().map(|&i| plan.index_frequency_hz(i)).collect(),
        bins: active.iter().map(|&i| plan.bin_of_index(i)).collect(),
        gain_db,
    })
}
