//! Binary I/Q capture files.
//!
//! Samples are little-endian `f32` pairs `(I, Q)`, channel-major: all of
//! channel 0, then all of channel 1, and so on. A JSON sidecar next to the
//! `.iq` file records the layout.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cst, to_f64, Real};
use crate::waveform::SignalMeta;

pub const LAYOUT: &str = "interleaved_iq_f32le_channel_major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqSidecar {
    pub sample_rate_hz: f64,
    pub channel_count: usize,
    pub samples_per_channel: usize,
    pub layout: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub meta: SignalMeta,
    /// Free-form provenance such as a scenario hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
}

/// Path of the sidecar belonging to `iq_path`.
pub fn sidecar_path(iq_path: &Path) -> PathBuf {
    iq_path.with_extension("json")
}

/// Encode channels as interleaved little-endian `f32`.
pub fn encode<T: Real>(channels: &[Vec<Complex<T>>]) -> Vec<u8> {
    let total: usize = channels.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total * 8);
    for v in channels.iter().flatten() {
        out.extend_from_slice(&(to_f64(v.re) as f32).to_le_bytes());
        out.extend_from_slice(&(to_f64(v.im) as f32).to_le_bytes());
    }
    out
}

/// Decode `channel_count` equal-length channels.
pub fn decode<T: Real>(bytes: &[u8], channel_count: usize) -> Result<Vec<Vec<Complex<T>>>> {
    if channel_count == 0 || !bytes.len().is_multiple_of(8 * channel_count) {
        return Err(Error::Config(format!(
            "{} bytes is not a whole number of samples for {channel_count} channels",
            bytes.len()
        )));
    }
    let per = bytes.len() / 8 / channel_count;
    let samples: Vec<Complex<T>> = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex::new(cst(re as f64), cst(im as f64))
        })
        .collect();
    Ok(samples.chunks_exact(per).map(<[_]>::to_vec).collect())
}

/// Write `channels` to `path` and the sidecar next to it. Returns both paths.
pub fn write_iq<T: Real>(
    path: &Path,
    channels: &[Vec<Complex<T>>],
    sample_rate_hz: T,
    meta: &SignalMeta,
    scenario_hash: Option<&str>,
) -> Result<(PathBuf, PathBuf)> {
    let per = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != per) {
        return Err(Error::Config("channels must have equal length".into()));
    }
    fs::write(path, encode(channels))?;
    let sidecar = IqSidecar {
        sample_rate_hz: to_f64(sample_rate_hz),
        channel_count: channels.len(),
        samples_per_channel: per,
        layout: LAYOUT.into(),
        seed: meta.seed,
        meta: meta.clone(),
        scenario_hash: scenario_hash.map(str::to_owned),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?)?;
    Ok((path.to_path_buf(), side))
}

/// Read a capture and its sidecar.
pub fn read_iq<T: Real>(path: &Path) -> Result<(IqSidecar, Vec<Vec<Complex<T>>>)> {
    let sidecar: IqSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.layout != LAYOUT {
        return Err(Error::Config(format!("unsupported I/Q layout {}", sidecar.layout)));
    }
    let channels = decode(&fs::read(path)?, sidecar.channel_count)?;
    if channels.first().map_or(0, Vec::len) != sidecar.samples_per_channel {
        return Err(Error::Config("sidecar sample count does not match file size".into()));
    }
    Ok((sidecar, channels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let ch = vec![vec![Complex::new(1.0f64, -2.0)], vec![Complex::new(0.5, 0.25)]];
        let b = encode(&ch);
        assert_eq!(b.len(), 16);
        assert_eq!(&b[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&b[4..8], &(-2.0f32).to_le_bytes());
        assert_eq!(&b[8..12], &0.5f32.to_le_bytes());
        let back: Vec<Vec<Complex<f64>>> = decode(&b, 2).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn ragged_input_rejected() {
        assert!(decode::<f64>(&[0u8; 12], 1).is_err());
        assert!(decode::<f64>(&[0u8; 8], 2).is_err());
    }
}
