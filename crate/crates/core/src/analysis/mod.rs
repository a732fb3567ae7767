//! Measurement-side algorithms applied to simulated captures.

pub mod aoa;
pub mod evm;
pub mod export;
pub mod gain;
pub mod iip3;
pub mod psd;

pub use aoa::{
    build_map, build_map_unchecked, estimate_aoa, heatmap, receive_training, AngleFrequencyMap, AoaEstimate, Collision,
    Heatmap,
};
pub use evm::{evm, qam_link, EvmReport};
pub use gain::{beamforming_gain, chirp_gain, measured_pattern, tone_gain, GainCurve};
pub use iip3::{extract_iip3, iip3_sweep, measure_two_tone, run_two_tone, Iip3Report, TwoTone, TwoTonePoint};
pub use psd::{integrated_power, psd, Averaging, Window};
