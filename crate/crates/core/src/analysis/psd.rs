//! Welch power spectral density.
//!
//! Bins are returned in centered order (index `i` is bin `i - nfft/2`) and are
//! scaled by `1/(Σw)^2`, so a unit-amplitude bin-centred tone reads exactly 1
//! (0 dB) in its bin regardless of window. Integrated power is the bin sum
//! divided by the window's equivalent noise bandwidth in bins.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cst, idx, Real};
use crate::spectral::FftPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); n],
            // Periodic Hann, which sums exactly to n/2.
            Window::Hann => (0..n)
                .map(|i| {
                    let x = T::TAU() * idx::<T>(i) / idx::<T>(n);
                    (T::one() - x.cos()) / cst(2.0)
                })
                .collect(),
        }
    }

    /// Equivalent noise bandwidth in bins: `n Σw² / (Σw)²`.
    pub fn enbw_bins<T: Real>(self, n: usize) -> T {
        let w = self.coefficients::<T>(n);
        let s1 = w.iter().fold(T::zero(), |a, &v| a + v);
        let s2 = w.iter().fold(T::zero(), |a, &v| a + v * v);
        idx::<T>(n) * s2 / (s1 * s1)
    }
}

/// Segmenting for Welch averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averaging {
    pub window: Window,
    /// Samples between segment starts.
    pub hop: usize,
    /// Index of the first segment start.
    pub offset: usize,
}

impl Averaging {
    /// Hann window with 50 % overlap.
    pub fn welch(nfft: usize) -> Self {
        Self {
            window: Window::Hann,
            hop: (nfft / 2).max(1),
            offset: 0,
        }
    }

    /// Rectangular segments, one per OFDM symbol, starting `offset` samples
    /// into the first symbol.
    pub fn symbol_aligned(symbol_len: usize, offset: usize) -> Self {
        Self {
            window: Window::Rectangular,
            hop: symbol_len,
            offset,
        }
    }
}

/// Averaged periodogram, centered bins, peak-calibrated.
pub fn psd<T: Real>(stream: &[Complex<T>], nfft: usize, averaging: &Averaging) -> Result<Vec<T>> {
    if nfft == 0 || averaging.hop == 0 {
        return Err(Error::Config("nfft and hop must be positive".into()));
    }
    if averaging.offset + nfft > stream.len() {
        return Err(Error::Config(format!(
            "stream of {} samples too short for a {nfft}-point segment at offset {}",
            stream.len(),
            averaging.offset
        )));
    }
    let w = averaging.window.coefficients::<T>(nfft);
    let sum_w = w.iter().fold(T::zero(), |a, &v| a + v);
    let norm = T::one() / (sum_w * sum_w);
    let fft = FftPair::new(nfft);
    let mut acc = vec![T::zero(); nfft];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); nfft];
    let mut segments = 0usize;
    let mut start = averaging.offset;
    while start + nfft <= stream.len() {
        for ((b, &x), &wi) in buf.iter_mut().zip(&stream[start..start + nfft]).zip(&w) {
            *b = x * wi;
        }
        fft.forward(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += averaging.hop;
    }
    let scale = norm / idx::<T>(segments);
    let mut out: Vec<T> = acc.into_iter().map(|v| v * scale).collect();
    out.rotate_right(nfft / 2);
    Ok(out)
}

/// Total power represented by a PSD from [`psd`].
pub fn integrated_power<T: Real>(psd: &[T], window: Window) -> T {
    let sum = psd.iter().fold(T::zero(), |a, &v| a + v);
    sum / window.enbw_bins::<T>(psd.len())
}

/// Centered bin index of frequency `freq_hz` (nearest bin).
pub fn bin_index<T: Real>(freq_hz: T, nfft: usize, sample_rate_hz: T) -> usize {
    let k = (freq_hz * idx::<T>(nfft) / sample_rate_hz).round();
    let k = k.to_i64().unwrap_or(0) + (nfft / 2) as i64;
    k.clamp(0, nfft as i64 - 1) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::db;
    use crate::spectral::complex_tone;
    use rand::SeedableRng;

    #[test]
    fn unit_tone_reads_zero_db_in_its_bin() {
        let nfft = 256;
        let fs = 256.0;
        for window in [Window::Rectangular, Window::Hann] {
            let x = complex_tone(37.0, fs, 4096);
            let p = psd(
                &x,
                nfft,
                &Averaging {
                    window,
                    hop: 128,
                    offset: 0,
                },
            )
            .unwrap();
            let k = bin_index(37.0, nfft, fs);
            assert_eq!(k, 128 + 37);
            let (imax, vmax) = p
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            assert_eq!(imax, k);
            assert!(db(vmax).abs() < 1e-9, "{window:?}: {}", db(vmax));
        }
    }

    #[test]
    fn white_noise_integrates_to_its_power() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p_in: f64 = 0.37;
        let x = crate::waveform::awgn(1 << 16, p_in, &mut rng);
        for window in [Window::Rectangular, Window::Hann] {
            let nfft = 512;
            let avg = Averaging {
                window,
                hop: 256,
                offset: 0,
            };
            let p = psd(&x, nfft, &avg).unwrap();
            let total = integrated_power(&p, window);
            assert!((db(total / p_in)).abs() < 0.2, "{window:?}");
            // Flat: every bin within a few dB of the mean after averaging 255 segments.
            let mean = p.iter().sum::<f64>() / nfft as f64;
            assert!(p.iter().all(|&v| db(v / mean).abs() < 3.0));
        }
    }

    #[test]
    fn two_tones_two_peaks() {
        let fs = 1.6e9;
        let x = crate::waveform::gen_two_tone(766e6, 776e6, fs, 16_000).unwrap();
        let p = psd(
            &x,
            1600,
            &Averaging {
                window: Window::Rectangular,
                hop: 1600,
                offset: 0,
            },
        )
        .unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap());
        let mut top = vec![order[0], order[1]];
        top.sort();
        assert_eq!(top, vec![bin_index(766e6, 1600, fs), bin_index(776e6, 1600, fs)]);
    }

    #[test]
    fn short_stream_rejected() {
        let x = complex_tone(0.0, 1.0, 10);
        assert!(psd(&x, 16, &Averaging::welch(16)).is_err());
    }
}
