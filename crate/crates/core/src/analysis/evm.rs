//! Error vector magnitude with single-tap least-squares equalization.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::codebook::beamforming_taps;
use crate::dsp::{delay_and_combine, SamplerConfig};
use crate::error::{Error, Result};
use crate::num::{cst, idx, Real};
use crate::waveform::{apply_channel, demodulate_ofdm, gen_qam, ChannelSpec, OfdmPlan, Qam};

/// Normalized correlation below which streams are considered misaligned.
pub const MIN_CORRELATION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvmReport<T> {
    pub evm_rms_pct: T,
    /// `|error|` of each symbol over the reference RMS amplitude.
    pub per_symbol_error: Vec<T>,
    /// Received symbols after equalization.
    pub constellation: Vec<Complex<T>>,
    /// The complex tap applied to the received symbols.
    pub gain: Complex<T>,
}

/// RMS EVM of `received` against `reference`, in percent of the reference
/// RMS amplitude, after scaling `received` by the least-squares tap
/// `g = r^H s / r^H r`.
pub fn evm<T: Real>(received: &[Complex<T>], reference: &[Complex<T>]) -> Result<EvmReport<T>> {
    if received.len() != reference.len() || received.is_empty() {
        return Err(Error::Alignment(format!(
            "{} received symbols against {} reference symbols",
            received.len(),
            reference.len()
        )));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let cross = received.iter().zip(reference).fold(zero, |a, (r, s)| a + r.conj() * s);
    let pr = received.iter().fold(T::zero(), |a, r| a + r.norm_sqr());
    let ps = reference.iter().fold(T::zero(), |a, s| a + s.norm_sqr());
    let rho = cross.norm() / (pr * ps).sqrt();
    if !(rho >= cst(MIN_CORRELATION)) {
        return Err(Error::Alignment(format!(
            "normalized correlation {rho} below {MIN_CORRELATION}"
        )));
    }
    let g = cross / pr;
    let rms = (ps / idx(reference.len())).sqrt();
    let constellation: Vec<Complex<T>> = received.iter().map(|r| r * g).collect();
    let per_symbol_error: Vec<T> = constellation
        .iter()
        .zip(reference)
        .map(|(y, s)| (y - s).norm() / rms)
        .collect();
    let err = per_symbol_error.iter().fold(T::zero(), |a, &e| a + e * e);
    Ok(EvmReport {
        evm_rms_pct: (err / idx(reference.len())).sqrt() * cst(100.0),
        per_symbol_error,
        constellation,
        gain: g,
    })
}

/// Send a QAM-on-OFDM burst from `channel.theta` through matched taps and
/// measure EVM over every recovered subcarrier symbol.
pub fn qam_link<T: Real>(
    cfg: &ArrayConfig<T>,
    plan: &OfdmPlan<T>,
    qam: Qam,
    n_symbols: usize,
    channel: &ChannelSpec<T>,
    scfg: &SamplerConfig<T>,
) -> Result<EvmReport<T>> {
    plan.validate_for(cfg)?;
    let burst = gen_qam(qam, n_symbols, plan, channel.seed)?;
    let rx = apply_channel(&burst.stream, plan.sample_rate_hz(), cfg, channel)?;
    let out = delay_and_combine(&rx, &beamforming_taps(cfg, channel.theta), scfg)?;
    let symbols = demodulate_ofdm(plan, &out.samples);
    let received: Vec<Complex<T>> = symbols.iter().flatten().copied().collect();
    let reference: Vec<Complex<T>> = burst.reference.iter().take(symbols.len()).flatten().copied().collect();
    evm(&received, &reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::awgn;
    use rand::SeedableRng;

    fn qam_symbols(qam: Qam, n: usize, seed: u64) -> Vec<Complex<f64>> {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| qam.map(rng.random_range(0..qam.order()))).collect()
    }

    #[test]
    fn identical_streams_have_zero_evm() {
        let s = qam_symbols(Qam::Qam16, 500, 1);
        let r = evm(&s, &s).unwrap();
        assert!(r.evm_rms_pct < 1e-12);
    }

    #[test]
    fn complex_gain_is_equalized() {
        let s = qam_symbols(Qam::Qam4, 200, 2);
        let g = Complex::new(0.3, -1.7);
        let r: Vec<_> = s.iter().map(|v| v * g).collect();
        let rep = evm(&r, &s).unwrap();
        assert!(rep.evm_rms_pct < 1e-10);
        assert!((rep.gain * g - Complex::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn awgn_at_20_db_gives_ten_percent() {
        let s = qam_symbols(Qam::Qam4, 20_000, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = awgn(s.len(), 0.01, &mut rng);
        let r: Vec<_> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
        let rep = evm(&r, &s).unwrap();
        assert!((rep.evm_rms_pct - 10.0).abs() < 1.0, "{}", rep.evm_rms_pct);
    }

    #[test]
    fn uncorrelated_streams_fail_alignment() {
        let s = qam_symbols(Qam::Qam4, 1000, 5);
        let r = qam_symbols(Qam::Qam4, 1000, 6);
        assert!(matches!(evm(&r, &s), Err(Error::Alignment(_))));
        assert!(matches!(evm(&r[..10], &s), Err(Error::Alignment(_))));
    }

    #[test]
    fn noiseless_sixteen_qam_link_is_clean() {
        let cfg = ArrayConfig::<f64>::prototype();
        let plan = OfdmPlan::data_default();
        let scfg = SamplerConfig::for_rate(&cfg, plan.sample_rate_hz()).unwrap();
        let ch = ChannelSpec::noiseless(f64::to_radians(30.0));
        let rep = qam_link(&cfg, &plan, Qam::Qam16, 8, &ch, &scfg).unwrap();
        assert!(rep.evm_rms_pct < 1.0, "{}", rep.evm_rms_pct);
    }
}
