//! FFT plumbing shared by the waveform, datapath and analysis modules.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::num::{cis, cst, idx, Real};

/// Signed frequency of DFT bin `k` for an `n`-point transform at `fs`:
/// bins above `n/2` wrap to negative frequencies.
pub fn bin_frequency<T: Real>(k: usize, n: usize, sample_rate_hz: T) -> T {
    let signed = if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    };
    T::from_i64(signed).expect("bin index fits scalar") * sample_rate_hz / idx(n)
}

/// Forward/inverse transform pair of one length.
pub struct FftPair<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    len: usize,
}

impl<T: Real> FftPair<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
    }

    /// Inverse DFT in place, scaled by `1/n` so it undoes [`forward`](Self::forward).
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
        let scale = T::one() / idx(self.len);
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Delay a block by `delay_s` (negative advances) with a linear phase ramp
/// across its DFT. The block is treated as one period of a periodic,
/// band-limited signal, which makes the delay exact for such signals.
pub fn spectral_delay<T: Real>(block: &[Complex<T>], delay_s: T, sample_rate_hz: T) -> Vec<Complex<T>> {
    let mut buf = block.to_vec();
    if delay_s == T::zero() || buf.is_empty() {
        return buf;
    }
    let fft = FftPair::new(buf.len());
    spectral_delay_with(&fft, &mut buf, delay_s, sample_rate_hz);
    buf
}

/// In-place variant of [`spectral_delay`] with a caller-provided plan.
pub fn spectral_delay_with<T: Real>(fft: &FftPair<T>, buf: &mut [Complex<T>], delay_s: T, sample_rate_hz: T) {
    let n = buf.len();
    fft.forward(buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = bin_frequency(k, n, sample_rate_hz);
        *v *= cis(-T::TAU() * f * delay_s);
    }
    fft.inverse(buf);
}

/// Time derivative of a periodic band-limited block, computed spectrally.
pub fn spectral_derivative<T: Real>(block: &[Complex<T>], sample_rate_hz: T) -> Vec<Complex<T>> {
    let n = block.len();
    let mut buf = block.to_vec();
    if n == 0 {
        return buf;
    }
    let fft = FftPair::new(n);
    fft.forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let w = T::TAU() * bin_frequency(k, n, sample_rate_hz);
        *v *= Complex::new(T::zero(), w);
    }
    fft.inverse(&mut buf);
    buf
}

/// Frequency-domain window of the block (unnormalized DFT), shifted so that
/// index 0 holds the most negative frequency.
pub fn centered_spectrum<T: Real>(block: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = block.len();
    let mut buf = block.to_vec();
    FftPair::new(n).forward(&mut buf);
    buf.rotate_right(n / 2);
    buf
}

/// Complex exponential at `freq_hz` sampled at `sample_rate_hz`.
pub fn complex_tone<T: Real>(freq_hz: T, sample_rate_hz: T, n_samples: usize) -> Vec<Complex<T>> {
    // Phase accumulated in f64 keeps long f32 tones clean.
    let step = crate::num::to_f64(freq_hz) / crate::num::to_f64(sample_rate_hz);
    (0..n_samples)
        .map(|i| {
            let cycles = (step * i as f64).fract();
            cis(cst::<T>(std::f64::consts::TAU * cycles))
        })
        .collect()
}
