//! Experiments. Each writes its artifacts and returns summary lines for the
//! terminal.

use serde_json::{json, Value};

use ttdsim::analysis::export::{gain_csv, heatmap_csv, iq_csv, map_csv};
use ttdsim::analysis::gain::{snap_to_grid, GAIN_BIN_HZ};
use ttdsim::analysis::{
    beamforming_gain, build_map_unchecked, estimate_aoa, heatmap, iip3_sweep, measured_pattern, qam_link,
    receive_training,
};
use ttdsim::iq::write_iq;
use ttdsim::num::{db, linspace};
use ttdsim::{
    apply_channel, beam_pattern, beamforming_taps, gen_ofdm, gen_qam, gen_tone, hpbw, squint_loss, system_response,
    training_taps, ChannelSpec64, MultichannelSignal64, Qam, TapSetDoc,
};

use crate::artifacts::Artifacts;
use crate::error::{CliError, EXIT_NO_DETECTION};
use crate::scenario::{Mode, Scenario};

/// What a run produced.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub exit_code: u8,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

/// Which experiment to run: a scenario mode or the tap dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Mode(Mode),
    DumpTaps,
}

impl Task {
    pub fn name(self) -> String {
        match self {
            Task::Mode(m) => m.to_string(),
            Task::DumpTaps => "dump-taps".into(),
        }
    }
}

pub fn run(sc: &Scenario, task: Task, dump_iq: bool, out: &mut Artifacts) -> Result<Report, CliError> {
    let mut report = Report::default();
    let capture = match task {
        Task::Mode(Mode::Train) => train(sc, out, &mut report)?,
        Task::Mode(Mode::Beamform) => beamform(sc, out, &mut report)?,
        Task::Mode(Mode::Sweep) => sweep(sc, out, &mut report)?,
        Task::Mode(Mode::Squint) => squint(sc, out, &mut report)?,
        Task::Mode(Mode::Evm) => evm(sc, out, &mut report)?,
        Task::Mode(Mode::Iip3) => iip3(sc, out, &mut report)?,
        Task::Mode(Mode::Hpbw) => hpbw_table(sc, out, &mut report)?,
        Task::DumpTaps => dump_taps(sc, out, &mut report)?,
    };
    if dump_iq {
        match capture {
            Some(sig) => {
                let path = out.dir().join("capture.iq");
                let hash = out.scenario_hash().to_owned();
                let (iq, side) = write_iq(&path, &sig.channels, sig.sample_rate_hz, &sig.meta, Some(&hash))?;
                out.adopt(&iq)?;
                out.adopt(&side)?;
                report.line(format!(
                    "capture: {} channels x {} samples at {:.2} MS/s",
                    sig.n_channels(),
                    sig.len(),
                    sig.sample_rate_hz / 1e6
                ));
            }
            None => report.line(format!("capture: {} has no I/Q stimulus, nothing dumped", task.name())),
        }
    }
    Ok(report)
}

fn train(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let plan = sc.training_plan()?;
    let scfg = sc.sampler_config(plan.sample_rate_hz())?;
    let taps = scfg.realize(&training_taps(&cfg, sc.train.diversity_order))?;
    let grid = sc.train_grid()?;

    let map = build_map_unchecked(&cfg, &taps, &plan, &grid)?;
    let hm = heatmap(&cfg, &taps, &plan, &grid, &scfg)?;
    out.write("heatmap.csv", heatmap_csv(&hm).as_bytes())?;
    out.write("map.csv", map_csv(&map).as_bytes())?;

    let collisions = map.collisions();
    let mut estimates = Vec::new();
    let mut missed = 0;
    for (i, &deg) in sc.train.probe_deg.iter().enumerate() {
        let channel = ChannelSpec64 {
            theta: deg.to_radians(),
            snr_db: sc.channel.snr_db,
            seed: sc.seed.wrapping_add(i as u64),
        };
        let psd = receive_training(&cfg, &taps, &plan, &channel, &scfg, sc.train.symbols)?;
        match estimate_aoa(&psd, &map) {
            Ok(est) => {
                let got = est.theta_rad.to_degrees();
                report.line(format!(
                    "probe {deg:>7.2} deg -> {got:>7.2} deg (bin {}, {:.1} dB over median)",
                    est.peak_bin, est.confidence_db
                ));
                estimates.push(json!({
                    "theta_true_deg": deg,
                    "detected": true,
                    "theta_est_deg": got,
                    "error_deg": got - deg,
                    "peak_bin": est.peak_bin,
                    "confidence_db": est.confidence_db,
                }));
            }
            Err(ttdsim::Error::NoDetection { peak_over_median_db }) => {
                missed += 1;
                report.line(format!(
                    "probe {deg:>7.2} deg -> no detection ({peak_over_median_db:.2} dB over median)"
                ));
                estimates.push(json!({
                    "theta_true_deg": deg,
                    "detected": false,
                    "confidence_db": peak_over_median_db,
                }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let span = map.injective_span_deg();
    out.write_json(
        "aoa_estimates.json",
        json!({
            "snr_db": sc.channel.snr_db,
            "symbols": sc.train.symbols,
            "map": {
                "diversity_order": map.diversity_order,
                "angles": map.len(),
                "subcarriers": plan.n_active(),
                "subcarrier_spacing_hz": plan.subcarrier_spacing_hz,
                "injective_span_deg": span.map(|(a, b)| vec![a, b]),
                "collisions": collisions
                    .iter()
                    .map(|c| json!({"theta_a_deg": c.theta_a_deg, "theta_b_deg": c.theta_b_deg, "bin": c.bin}))
                    .collect::<Vec<_>>(),
            },
            "estimates": estimates,
        }),
    )?;
    report.line(format!(
        "map: {} angles over {} subcarriers, {} collisions",
        map.len(),
        plan.n_active(),
        collisions.len()
    ));
    if missed > 0 {
        report.exit_code = EXIT_NO_DETECTION;
    }

    let stimulus = gen_ofdm(&plan, sc.train.symbols)?;
    let channel = sc.channel_spec()?;
    Ok(Some(apply_channel(&stimulus, plan.sample_rate_hz(), &cfg, &channel)?))
}

fn tone_capture(sc: &Scenario, rf_hz: f64) -> Result<MultichannelSignal64, CliError> {
    let cfg = sc.array_config()?;
    let fs = sc.sampler.sample_rate_mhz * 1e6;
    let len = (fs / GAIN_BIN_HZ).round() as usize;
    let f = snap_to_grid(&cfg, rf_hz, fs, len);
    let tone = gen_tone(cfg.baseband_hz(f), fs, len)?;
    Ok(apply_channel(&tone, fs, &cfg, &sc.channel_spec()?)?)
}

fn beamform(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let scfg = sc.sampler_config(sc.sampler.sample_rate_mhz * 1e6)?;
    let theta = sc.channel_spec()?.theta;
    let half = sc.beamform.span_mhz * 1e6 / 2.0;
    let freqs = linspace(cfg.carrier_hz - half, cfg.carrier_hz + half, sc.beamform.points);
    let curve = beamforming_gain(&cfg, theta, &freqs, &scfg)?;
    out.write("gain_vs_freq.csv", gain_csv(&curve).as_bytes())?;
    let coherent = 20.0 * (cfg.n_elements as f64).log10();
    let mean = curve.gain_db.iter().sum::<f64>() / curve.gain_db.len() as f64;
    out.write_json(
        "beamform.json",
        json!({
            "theta_deg": sc.channel.theta_deg,
            "elements": cfg.n_elements,
            "coherent_gain_db": coherent,
            "mean_gain_db": mean,
            "ripple_db": curve.ripple_db(),
            "max_deviation_db": curve.max_deviation_db(coherent),
        }),
    )?;
    report.line(format!(
        "beamform {} elements at {:.1} deg: mean {mean:.3} dB (coherent {coherent:.3} dB), ripple {:.4} dB over {:.0} MHz",
        cfg.n_elements,
        sc.channel.theta_deg,
        curve.ripple_db(),
        sc.beamform.span_mhz
    ));
    Ok(Some(tone_capture(sc, cfg.carrier_hz)?))
}

fn sweep(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let fs = sc.sampler.sample_rate_mhz * 1e6;
    let scfg = sc.sampler_config(fs)?;
    let theta = sc.channel_spec()?.theta;
    let taps = scfg.realize(&beamforming_taps(&cfg, theta))?;
    let grid = sc.sweep_grid()?;
    let grid_deg: Vec<f64> = grid.iter().map(|r| r.to_degrees()).collect();
    let len = (fs / GAIN_BIN_HZ).round() as usize;
    let mut csv = String::from("angle_deg,freq_mhz,measured_db,analytic_db\n");
    let mut summary = Vec::new();
    for &off in &sc.sweep.offsets_mhz {
        let f = snap_to_grid(&cfg, cfg.carrier_hz + off * 1e6, fs, len);
        if !cfg.in_band(f) {
            return Err(CliError::Config(format!(
                "sweep.offsets_mhz: {off} MHz is outside the band"
            )));
        }
        let measured = measured_pattern(&cfg, &taps, f, &grid, &scfg)?;
        let analytic: Vec<f64> = beam_pattern(&cfg, &taps, f, &grid)?.into_iter().map(db).collect();
        for ((d, m), a) in grid_deg.iter().zip(&measured).zip(&analytic) {
            csv.push_str(&format!("{d:.4},{:.4},{m:.6},{a:.6}\n", f / 1e6));
        }
        let peak = |v: &[f64]| {
            let i = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            (grid_deg[i], v[i])
        };
        let (m_deg, m_db) = peak(&measured);
        let (a_deg, _) = peak(&analytic);
        let mainlobe_dev = measured
            .iter()
            .zip(&analytic)
            .filter(|(_, &a)| a >= m_db - 3.0)
            .fold(0.0f64, |acc, (m, a)| acc.max((m - a).abs()));
        report.line(format!(
            "sweep {:.2} MHz: measured peak {m_deg:.1} deg at {m_db:.3} dB, analytic peak {a_deg:.1} deg, mainlobe deviation {mainlobe_dev:.2e} dB",
            f / 1e6
        ));
        summary.push(json!({
            "freq_mhz": f / 1e6,
            "measured_peak_deg": m_deg,
            "measured_peak_db": m_db,
            "analytic_peak_deg": a_deg,
            "mainlobe_deviation_db": mainlobe_dev,
        }));
    }
    out.write("pattern.csv", csv.as_bytes())?;
    out.write_json(
        "sweep.json",
        json!({"steer_deg": sc.channel.theta_deg, "frequencies": summary}),
    )?;
    Ok(Some(tone_capture(sc, cfg.carrier_hz)?))
}

fn squint(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let theta = sc.channel_spec()?.theta;
    let (lo, hi) = cfg.band_edges_hz();
    let freqs = linspace(lo, hi, sc.squint.points);
    let mut csv = String::from("elements,freq_mhz,phase_shifter_loss_db,ttd_loss_db\n");
    let mut summary = Vec::new();
    for &n in &sc.squint.elements {
        let cfg_n = cfg.with_elements(n)?;
        let taps = beamforming_taps(&cfg_n, theta);
        let ttd = system_response(&cfg_n, &taps, theta, &freqs)?;
        let full = (n * n) as f64;
        let mut worst_ps = 0.0f64;
        let mut worst_ttd = 0.0f64;
        for (&f, &g) in freqs.iter().zip(&ttd) {
            let ps = squint_loss(&cfg, n, theta, f);
            let t = db(full / g);
            worst_ps = worst_ps.max(ps);
            worst_ttd = worst_ttd.max(t.abs());
            csv.push_str(&format!("{n},{:.4},{ps:.6},{t:.6}\n", f / 1e6));
        }
        report.line(format!(
            "squint N={n:>3}: phase-shifter band-edge loss {worst_ps:.3} dB, TTD loss {worst_ttd:.2e} dB"
        ));
        summary.push(json!({
            "elements": n,
            "phase_shifter_band_edge_loss_db": worst_ps,
            "ttd_max_loss_db": worst_ttd,
        }));
    }
    out.write("squint.csv", csv.as_bytes())?;
    out.write_json(
        "squint.json",
        json!({"theta_deg": sc.channel.theta_deg, "arrays": summary}),
    )?;
    Ok(None)
}

fn evm(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let plan = sc.data_plan()?;
    let scfg = sc.sampler_config(plan.sample_rate_hz())?;
    let qam = Qam::from_order(sc.evm.qam_order)?;
    let channel = sc.channel_spec()?;
    let rep = qam_link(&cfg, &plan, qam, sc.evm.symbols, &channel, &scfg)?;
    out.write("constellation.csv", iq_csv(&rep.constellation).as_bytes())?;
    // Noise fills the whole FFT band; the combiner adds N-fold SNR.
    let occupancy = plan.n_subcarriers as f64 / plan.n_active() as f64;
    let awgn = sc
        .channel
        .snr_db
        .map(|s| 100.0 * 10f64.powf(-(s + db(cfg.n_elements as f64 * occupancy)) / 20.0));
    out.write_json(
        "evm.json",
        json!({
            "qam_order": sc.evm.qam_order,
            "ofdm_symbols": sc.evm.symbols,
            "subcarrier_symbols": rep.constellation.len(),
            "theta_deg": sc.channel.theta_deg,
            "snr_db": sc.channel.snr_db,
            "evm_rms_pct": rep.evm_rms_pct,
            "awgn_expected_pct": awgn,
            "gain_re": rep.gain.re,
            "gain_im": rep.gain.im,
        }),
    )?;
    report.line(format!(
        "evm {}-QAM, {} symbols at {:.1} deg: {:.3} % rms{}",
        sc.evm.qam_order,
        rep.constellation.len(),
        sc.channel.theta_deg,
        rep.evm_rms_pct,
        awgn.map_or(String::new(), |a| format!(" (AWGN expectation {a:.3} %)"))
    ));
    let burst = gen_qam(qam, sc.evm.symbols, &plan, channel.seed)?;
    Ok(Some(apply_channel(
        &burst.stream,
        plan.sample_rate_hz(),
        &cfg,
        &channel,
    )?))
}

fn iip3(sc: &Scenario, out: &mut Artifacts, report: &mut Report) -> Result<Option<MultichannelSignal64>, CliError> {
    let tt = sc.two_tone()?;
    let mut scfg = sc.sampler_config(tt.sample_rate_hz)?;
    scfg.iip3_dbm = Some(sc.iip3.model_iip3_dbm);
    let rep = iip3_sweep(&tt, &scfg, &sc.iip3.levels_dbm, sc.iip3.snr_db, sc.seed)?;
    let mut csv = String::from("input_dbm,fundamental_dbm,im3_dbm,floor_dbm\n");
    for p in &rep.points {
        let im3 = p.im3_dbm.map_or(String::new(), |v| format!("{v:.6}"));
        csv.push_str(&format!(
            "{:.4},{:.6},{im3},{:.6}\n",
            p.input_dbm, p.fundamental_dbm, p.floor_dbm
        ));
    }
    out.write("iip3.csv", csv.as_bytes())?;
    let found = rep.iip3_dbm.is_finite();
    out.write_json(
        "iip3.json",
        json!({
            "model_iip3_dbm": sc.iip3.model_iip3_dbm,
            "f1_hz": tt.f1_hz,
            "f2_hz": tt.f2_hz,
            "im3_hz": [tt.im3_hz().0, tt.im3_hz().1],
            "iip3_dbm": if found { Value::from(rep.iip3_dbm) } else { Value::Null },
            "slope": rep.slope,
            "warnings": rep.warnings,
        }),
    )?;
    if found {
        report.line(format!(
            "iip3: extracted {:.3} dBm (model {:.3} dBm), IM3 slope {}",
            rep.iip3_dbm,
            sc.iip3.model_iip3_dbm,
            rep.slope.map_or("n/a".into(), |s| format!("{s:.3}"))
        ));
    } else {
        report.line("iip3: no third-order products above the floor");
    }
    for w in &rep.warnings {
        report.line(format!("warning: {w}"));
    }
    Ok(None)
}

fn hpbw_table(
    sc: &Scenario,
    out: &mut Artifacts,
    report: &mut Report,
) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let mut csv = String::from("elements,hpbw_rad,hpbw_deg\n");
    let mut rows = Vec::new();
    for &n in &sc.hpbw.elements {
        let w = hpbw(&cfg.with_elements(n)?, cfg.carrier_hz)?;
        csv.push_str(&format!("{n},{w:.9},{:.6}\n", w.to_degrees()));
        report.line(format!("hpbw N={n:>3}: {w:.6} rad ({:.3} deg)", w.to_degrees()));
        rows.push(json!({"elements": n, "hpbw_rad": w}));
    }
    out.write("hpbw.csv", csv.as_bytes())?;
    out.write_json("hpbw.json", json!({"freq_hz": cfg.carrier_hz, "arrays": rows}))?;
    Ok(None)
}

fn dump_taps(
    sc: &Scenario,
    out: &mut Artifacts,
    report: &mut Report,
) -> Result<Option<MultichannelSignal64>, CliError> {
    let cfg = sc.array_config()?;
    let scfg = sc.sampler_config(sc.sampler.sample_rate_mhz * 1e6)?;
    let theta = sc.channel_spec()?.theta;
    let training = training_taps(&cfg, sc.train.diversity_order);
    let steering = beamforming_taps(&cfg, theta);
    let training_real = scfg.realize(&training)?;
    let steering_real = scfg.realize(&steering)?;
    out.write_json(
        "taps.json",
        json!({
            "interleave_levels": scfg.plan.levels,
            "sample_rate_hz": scfg.plan.sample_rate_hz,
            "training": {"ideal": TapSetDoc::from(&training), "realized": TapSetDoc::from(&training_real)},
            "beamforming": {"ideal": TapSetDoc::from(&steering), "realized": TapSetDoc::from(&steering_real)},
        }),
    )?;
    let fmt = |t: &ttdsim::TapSet64| {
        t.delays_s()
            .iter()
            .map(|d| format!("{:.1}", d * 1e12))
            .collect::<Vec<_>>()
            .join(" ")
    };
    report.line(format!("training taps (ps): {}", fmt(&training_real)));
    report.line(format!(
        "beamforming taps at {:.1} deg (ps): {}",
        sc.channel.theta_deg,
        fmt(&steering_real)
    ));
    Ok(None)
}
