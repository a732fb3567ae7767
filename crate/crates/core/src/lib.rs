//! Behavioral simulator for true-time-delay array spatial signal processing.
//!
//! The crate covers the two operating modes of a TTD spatial signal
//! processor: rainbow beam training, where per-element delays `n/BW` fan the
//! OFDM subcarriers out across angle so a single symbol probes every
//! direction, and wideband beamforming, where delays matched to the arrival
//! angle give squint-free gain across the band.
//!
//! Modules, bottom up:
//! - [`array`]: continuous-frequency array math and reference metrics
//! - [`codebook`]: tap synthesis, quantization and sampler sizing
//! - [`waveform`]: stimulus generation and the plane-wave channel
//! - [`dsp`]: the discrete-time delay-and-combine datapath with impairments
//! - [`analysis`]: PSD, AoA, gain, EVM and IIP3 measurements
//! - [`iq`]: binary capture files
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for callers that do not care.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod array;
pub mod codebook;
pub mod dsp;
pub mod error;
pub mod iq;
pub mod num;
pub mod spectral;
pub mod waveform;

pub use array::{
    beam_pattern, hpbw, inter_element_delay, squint_loss, steering_vector, system_response, ArrayConfig,
    ComplexResponse, SPEED_OF_LIGHT,
};
pub use codebook::{
    beamforming_taps, min_interleave_levels, quantize, training_interleave_levels, training_taps, InterleavePlan,
    Quantization, SspMode, TapSet, TapSetDoc,
};
pub use dsp::{apply_jitter, apply_nonlinearity, delay_and_combine, CombinedSignal, SamplerConfig};
pub use error::{Error, Result};
pub use num::Real;
pub use waveform::{
    apply_channel, gen_chirp, gen_ofdm, gen_qam, gen_tone, gen_two_tone, ChannelSpec, MultichannelSignal, OfdmPlan, Qam,
};

pub type ArrayConfig64 = ArrayConfig<f64>;
pub type TapSet64 = TapSet<f64>;
pub type OfdmPlan64 = OfdmPlan<f64>;
pub type ChannelSpec64 = ChannelSpec<f64>;
pub type SamplerConfig64 = SamplerConfig<f64>;
pub type MultichannelSignal64 = MultichannelSignal<f64>;
pub type CombinedSignal64 = CombinedSignal<f64>;
pub type AngleFrequencyMap64 = analysis::AngleFrequencyMap<f64>;

pub type ArrayConfig32 = ArrayConfig<f32>;
pub type TapSet32 = TapSet<f32>;
pub type OfdmPlan32 = OfdmPlan<f32>;
pub type ChannelSpec32 = ChannelSpec<f32>;
pub type SamplerConfig32 = SamplerConfig<f32>;
pub type MultichannelSignal32 = MultichannelSignal<f32>;
pub type CombinedSignal32 = CombinedSignal<f32>;
pub type AngleFrequencyMap32 = analysis::AngleFrequencyMap<f32>;
