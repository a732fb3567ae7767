//! Scenario files.
//!
//! A scenario is a TOML document with one table per sub-configuration. Every
//! physical quantity carries its unit in the key name. Missing keys take the
//! prototype defaults, unknown keys are rejected.
//!
//! ```toml
//! mode = "train"
//! seed = 0
//! output_dir = "out"
//!
//! [array]
//! elements = 4
//! carrier_ghz = 28.0
//! bandwidth_mhz = 800.0
//! # spacing_mm = 5.35   (omitted: half a carrier wavelength)
//! if_center_mhz = 0.0
//!
//! [channel]
//! theta_deg = 30.0
//! snr_db = 20.0         # omitted: noiseless
//! ```
//!
//! Power levels are in dBm with a unit-power stream reading 0 dBm into
//! `sampler.impedance_ohm`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ttdsim::analysis::TwoTone;
use ttdsim::codebook::{training_interleave_levels, InterleavePlan};
use ttdsim::dsp::SamplerConfig;
use ttdsim::waveform::{OfdmPlan, Qam};
use ttdsim::{ArrayConfig64, ChannelSpec64, OfdmPlan64, SamplerConfig64, SPEED_OF_LIGHT};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Beamform,
    Sweep,
    Squint,
    Evm,
    Iip3,
    Hpbw,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Train => "train",
            Mode::Beamform => "beamform",
            Mode::Sweep => "sweep",
            Mode::Squint => "squint",
            Mode::Evm => "evm",
            Mode::Iip3 => "iip3",
            Mode::Hpbw => "hpbw",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub array: ArraySection,
    pub channel: ChannelSection,
    pub sampler: SamplerSection,
    pub ofdm: OfdmSection,
    pub train: TrainSection,
    pub beamform: BeamformSection,
    pub sweep: SweepSection,
    pub squint: SquintSection,
    pub evm: EvmSection,
    pub iip3: Iip3Section,
    pub hpbw: HpbwSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            seed: 0,
            output_dir: PathBuf::from("out"),
            array: ArraySection::default(),
            channel: ChannelSection::default(),
            sampler: SamplerSection::default(),
            ofdm: OfdmSection::default(),
            train: TrainSection::default(),
            beamform: BeamformSection::default(),
            sweep: SweepSection::default(),
            squint: SquintSection::default(),
            evm: EvmSection::default(),
            iip3: Iip3Section::default(),
            hpbw: HpbwSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub elements: usize,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_mm: Option<f64>,
    pub if_center_mhz: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            elements: 4,
            carrier_ghz: 28.0,
            bandwidth_mhz: 800.0,
            spacing_mm: None,
            if_center_mhz: 0.0,
        }
    }
}

/// Optional keys default to absent so that omitting one round-trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub theta_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            theta_deg: 30.0,
            snr_db: None,
        }
    }
}

/// Delay line and sampler. OFDM modes run at the OFDM sample rate;
/// `sample_rate_mhz` applies to the tone-based modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub sample_rate_mhz: f64,
    /// Omitted: sized to cover the training delay range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interleave_levels: Option<usize>,
    /// Zero disables quantization.
    pub delay_resolution_ps: f64,
    pub delay_range_ns: f64,
    pub jitter_rms_fs: f64,
    /// Omitted: linear.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iip3_dbm: Option<f64>,
    pub impedance_ohm: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            sample_rate_mhz: 1600.0,
            interleave_levels: None,
            delay_resolution_ps: 5.0,
            delay_range_ns: 3.8,
            jitter_rms_fs: 0.0,
            iip3_dbm: None,
            impedance_ohm: 50.0,
        }
    }
}

/// Data grid used by `evm`. The training grid is derived from the array
/// bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmSection {
    pub fft_size: usize,
    pub subcarrier_spacing_khz: f64,
    pub active_subcarriers: usize,
    pub cp_len: usize,
}

impl Default for OfdmSection {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            subcarrier_spacing_khz: 960.0,
            active_subcarriers: 512,
            cp_len: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub diversity_order: u32,
    pub angle_start_deg: f64,
    pub angle_stop_deg: f64,
    pub angle_step_deg: f64,
    pub symbols: usize,
    /// Arrival angles estimated with the channel's SNR, one capture each.
    pub probe_deg: Vec<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            diversity_order: 1,
            angle_start_deg: -80.0,
            angle_stop_deg: 80.0,
            angle_step_deg: 1.0,
            symbols: 3,
            probe_deg: vec![-60.0, -30.0, 0.0, 30.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformSection {
    pub span_mhz: f64,
    pub points: usize,
}

impl Default for BeamformSection {
    fn default() -> Self {
        Self {
            span_mhz: 720.0,
            points: 37,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub angle_start_deg: f64,
    pub angle_stop_deg: f64,
    pub angle_step_deg: f64,
    /// Offsets from the carrier.
    pub offsets_mhz: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            angle_start_deg: -90.0,
            angle_stop_deg: 90.0,
            angle_step_deg: 1.0,
            offsets_mhz: vec![-360.0, 0.0, 360.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquintSection {
    pub elements: Vec<usize>,
    pub points: usize,
}

impl Default for SquintSection {
    fn default() -> Self {
        Self {
            elements: vec![4, 8, 16, 32],
            points: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvmSection {
    pub qam_order: u32,
    pub symbols: usize,
}

impl Default for EvmSection {
    fn default() -> Self {
        Self {
            qam_order: 16,
            symbols: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Iip3Section {
    /// Intercept of the device under test.
    pub model_iip3_dbm: f64,
    pub f1_mhz: f64,
    pub f2_mhz: f64,
    pub fft_size: usize,
    pub blocks: usize,
    /// Per-tone input levels.
    pub levels_dbm: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl Default for Iip3Section {
    fn default() -> Self {
        Self {
            model_iip3_dbm: 14.0,
            f1_mhz: 766.0,
            f2_mhz: 776.0,
            fft_size: 1600,
            blocks: 8,
            levels_dbm: vec![-30.0, -25.0, -20.0, -15.0, -10.0],
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpbwSection {
    pub elements: Vec<usize>,
}

impl Default for HpbwSection {
    fn default() -> Self {
        Self {
            elements: vec![2, 4, 8, 16, 32],
        }
    }
}

fn field<E: fmt::Display>(name: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Config(format!("{name}: {e}"))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name}: must be finite and positive, got {v}"
        )))
    }
}

/// Angle grid in radians.
fn grid(name: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    positive(&format!("{name}.angle_step_deg"), step)?;
    if start.is_nan() || start > stop || start < -90.0 || stop > 90.0 {
        return Err(CliError::Config(format!(
            "{name}: angle range [{start}, {stop}] must be ordered and within [-90, 90]"
        )));
    }
    Ok(ttdsim::num::degree_grid(start, stop, step))
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 over the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> Result<String, CliError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Check every sub-configuration, reporting the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        self.array_config()?;
        self.channel_spec()?;
        self.sampler_config(self.sampler.sample_rate_mhz * 1e6)?;
        self.data_plan()?;
        self.train_grid()?;
        self.sweep_grid()?;
        positive("beamform.span_mhz", self.beamform.span_mhz)?;
        if self.beamform.points < 2 {
            return Err(CliError::Config("beamform.points: need at least 2".into()));
        }
        if self.train.symbols == 0 {
            return Err(CliError::Config("train.symbols: must be at least 1".into()));
        }
        if self.train.diversity_order == 0 {
            return Err(CliError::Config("train.diversity_order: must be at least 1".into()));
        }
        if self.squint.points < 2 || self.squint.elements.iter().any(|&n| n < 1) {
            return Err(CliError::Config("squint: need points >= 2 and elements >= 1".into()));
        }
        if self.hpbw.elements.iter().any(|&n| n < 2) {
            return Err(CliError::Config("hpbw.elements: HPBW needs at least 2 elements".into()));
        }
        Qam::from_order(self.evm.qam_order).map_err(field("evm.qam_order"))?;
        if self.evm.symbols == 0 {
            return Err(CliError::Config("evm.symbols: must be at least 1".into()));
        }
        self.two_tone()?;
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig64, CliError> {
        let a = &self.array;
        let carrier = a.carrier_ghz * 1e9;
        let spacing = match a.spacing_mm {
            Some(mm) => mm * 1e-3,
            None => SPEED_OF_LIGHT / (2.0 * carrier),
        };
        ArrayConfig64::new(
            a.elements,
            spacing,
            carrier,
            a.bandwidth_mhz * 1e6,
            a.if_center_mhz * 1e6,
        )
        .map_err(field("array"))
    }

    pub fn channel_spec(&self) -> Result<ChannelSpec64, CliError> {
        let c = &self.channel;
        if !(-90.0..=90.0).contains(&c.theta_deg) {
            return Err(CliError::Config(format!(
                "channel.theta_deg: {} outside [-90, 90]",
                c.theta_deg
            )));
        }
        let spec = ChannelSpec64 {
            theta: c.theta_deg.to_radians(),
            snr_db: c.snr_db,
            seed: self.seed,
        };
        spec.validate().map_err(field("channel"))?;
        Ok(spec)
    }

    /// Sampler at `sample_rate_hz` with the configured delay line.
    pub fn sampler_config(&self, sample_rate_hz: f64) -> Result<SamplerConfig64, CliError> {
        let s = &self.sampler;
        positive("sampler.sample_rate_mhz", s.sample_rate_mhz)?;
        let cfg = self.array_config()?;
        let levels = match s.interleave_levels {
            Some(m) => m,
            None => training_interleave_levels(&cfg, sample_rate_hz).map_err(field("sampler.interleave_levels"))?,
        };
        let scfg = SamplerConfig {
            plan: InterleavePlan::new(levels, sample_rate_hz).map_err(field("sampler.interleave_levels"))?,
            delay_resolution_s: s.delay_resolution_ps * 1e-12,
            delay_range_s: s.delay_range_ns * 1e-9,
            jitter_rms_s: s.jitter_rms_fs * 1e-15,
            iip3_dbm: s.iip3_dbm,
            reference_impedance_ohm: s.impedance_ohm,
            seed: self.seed,
        };
        scfg.validate().map_err(field("sampler"))?;
        Ok(scfg)
    }

    pub fn data_plan(&self) -> Result<OfdmPlan64, CliError> {
        let o = &self.ofdm;
        positive("ofdm.subcarrier_spacing_khz", o.subcarrier_spacing_khz)?;
        let plan = OfdmPlan::centered(
            o.fft_size,
            o.subcarrier_spacing_khz * 1e3,
            o.active_subcarriers,
            o.cp_len,
        )
        .map_err(field("ofdm"))?;
        plan.validate_for(&self.array_config()?).map_err(field("ofdm"))?;
        Ok(plan)
    }

    pub fn training_plan(&self) -> Result<OfdmPlan64, CliError> {
        OfdmPlan::training(&self.array_config()?).map_err(field("array"))
    }

    /// Training and map angles, radians.
    pub fn train_grid(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.train;
        grid("train", t.angle_start_deg, t.angle_stop_deg, t.angle_step_deg)
    }

    /// Pattern angles, radians.
    pub fn sweep_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        grid("sweep", s.angle_start_deg, s.angle_stop_deg, s.angle_step_deg)
    }

    pub fn two_tone(&self) -> Result<TwoTone<f64>, CliError> {
        let i = &self.iip3;
        positive("iip3.f1_mhz", i.f1_mhz)?;
        positive("iip3.f2_mhz", i.f2_mhz)?;
        if i.fft_size == 0 || i.blocks == 0 {
            return Err(CliError::Config("iip3: fft_size and blocks must be positive".into()));
        }
        if i.levels_dbm.len() < 2 {
            return Err(CliError::Config("iip3.levels_dbm: need at least two levels".into()));
        }
        if !i.model_iip3_dbm.is_finite() {
            return Err(CliError::Config("iip3.model_iip3_dbm: must be finite".into()));
        }
        let fs = self.sampler.sample_rate_mhz * 1e6;
        let tt = TwoTone {
            f1_hz: i.f1_mhz * 1e6,
            f2_hz: i.f2_mhz * 1e6,
            sample_rate_hz: fs,
            nfft: i.fft_size,
            n_blocks: i.blocks,
        };
        let (lo, hi) = tt.im3_hz();
        if lo <= -fs / 2.0 || hi >= fs / 2.0 {
            return Err(CliError::Config(format!(
                "iip3: products at {:.1} and {:.1} MHz fall outside the {:.1} MHz Nyquist band",
                lo / 1e6,
                hi / 1e6,
                fs / 2e6
            )));
        }
        Ok(tt)
    }
}
