//! Scenario runner for the `ttdsim` simulator.
//!
//! `ttdsim <subcommand> [--config FILE] [--seed N] [--out DIR] [--elements N] [--dump-iq]`
//!
//! | subcommand  | artifacts                                       |
//! |-------------|-------------------------------------------------|
//! | `train`     | `heatmap.csv`, `map.csv`, `aoa_estimates.json`  |
//! | `beamform`  | `gain_vs_freq.csv`, `beamform.json`             |
//! | `sweep`     | `pattern.csv`, `sweep.json`                     |
//! | `squint`    | `squint.csv`, `squint.json`                     |
//! | `evm`       | `constellation.csv`, `evm.json`                 |
//! | `iip3`      | `iip3.csv`, `iip3.json`                         |
//! | `hpbw`      | `hpbw.csv`, `hpbw.json`                         |
//! | `dump-taps` | `taps.json`                                     |
//!
//! Every run also writes the effective `scenario.toml` and `manifest.json`.
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 sizing error,
//! 4 no detection.

pub mod artifacts;
pub mod error;
pub mod run;
pub mod scenario;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifacts::Artifacts;
use crate::error::{CliError, EXIT_OK};
use crate::run::Task;
use crate::scenario::{Mode, Scenario};

#[derive(Debug, Parser)]
#[command(name = "ttdsim", version, about = "True-time-delay array scenario runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Override the array size.
    #[arg(long, global = true)]
    pub elements: Option<usize>,

    /// Write the received multichannel capture as `capture.iq` plus sidecar.
    #[arg(long, global = true)]
    pub dump_iq: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Rainbow training: heat map, angle map and AoA estimates.
    Train,
    /// Matched-tap gain across the band.
    Beamform,
    /// Measured and analytic beam patterns.
    Sweep,
    /// Phase-shifter squint loss against TTD.
    Squint,
    /// QAM-over-OFDM link EVM.
    Evm,
    /// Two-tone intercept extraction.
    Iip3,
    /// Half-power beamwidth versus array size.
    Hpbw,
    /// Training and beamforming taps as JSON.
    DumpTaps,
}

impl Command {
    fn task(self) -> Task {
        match self {
            Command::Train => Task::Mode(Mode::Train),
            Command::Beamform => Task::Mode(Mode::Beamform),
            Command::Sweep => Task::Mode(Mode::Sweep),
            Command::Squint => Task::Mode(Mode::Squint),
            Command::Evm => Task::Mode(Mode::Evm),
            Command::Iip3 => Task::Mode(Mode::Iip3),
            Command::Hpbw => Task::Mode(Mode::Hpbw),
            Command::DumpTaps => Task::DumpTaps,
        }
    }
}

/// Scenario after command-line overrides.
pub fn resolve(cli: &Cli) -> Result<Scenario, CliError> {
    let mut sc = match &cli.config {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Task::Mode(m) = cli.command.task() {
        sc.mode = m;
    }
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    if let Some(out) = &cli.out {
        sc.output_dir = out.clone();
    }
    if let Some(n) = cli.elements {
        sc.array.elements = n;
    }
    sc.validate()?;
    Ok(sc)
}

/// Run one invocation, printing the summary, and return the exit code.
pub fn execute(cli: &Cli) -> u8 {
    match try_execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_execute(cli: &Cli) -> Result<u8, CliError> {
    let sc = resolve(cli)?;
    let hash = sc.hash()?;
    let task = cli.command.task();
    let mut out = Artifacts::create(&sc.output_dir, &hash, sc.seed, &task.name())?;
    out.write("scenario.toml", sc.to_toml()?.as_bytes())?;
    let report = run::run(&sc, task, cli.dump_iq, &mut out)?;
    let files = out.finish()?;
    for line in &report.lines {
        println!("{line}");
    }
    println!(
        "scenario {} seed {}: {} files in {}",
        &hash[..12],
        sc.seed,
        files.len() + 1,
        sc.output_dir.display()
    );
    Ok(if report.exit_code == 0 {
        EXIT_OK
    } else {
        report.exit_code
    })
}
