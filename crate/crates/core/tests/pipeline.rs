use num_complex::Complex;

use ttdsim::analysis::aoa::TRAINING_SYMBOLS;
use ttdsim::analysis::{build_map, build_map_unchecked, estimate_aoa, receive_training};
use ttdsim::iq::{read_iq, write_iq};
use ttdsim::num::degree_grid;
use ttdsim::*;

fn training_setup() -> (ArrayConfig64, TapSet64, OfdmPlan64, SamplerConfig64) {
    let cfg = ArrayConfig64::prototype();
    let taps = training_taps(&cfg, 1);
    let plan = OfdmPlan64::training(&cfg).unwrap();
    let scfg = SamplerConfig64::for_rate(&cfg, plan.sample_rate_hz()).unwrap();
    (cfg, taps, plan, scfg)
}

#[test]
fn monte_carlo_aoa_at_minus_sixty_degrees() {
    let (cfg, taps, plan, scfg) = training_setup();
    let map = build_map_unchecked(&cfg, &taps, &plan, &degree_grid(-85.0, 85.0, 1.0)).unwrap();
    let theta = (-60.0f64).to_radians();
    let trials = 100;
    let mut sq = 0.0;
    for seed in 0..trials {
        let ch = ChannelSpec {
            theta,
            snr_db: Some(10.0),
            seed,
        };
        let p = receive_training(&cfg, &taps, &plan, &ch, &scfg, TRAINING_SYMBOLS).unwrap();
        let est = estimate_aoa(&p, &map).unwrap();
        sq += (est.theta_rad - theta).to_degrees().powi(2);
    }
    let rms = (sq / trials as f64).sqrt();
    // Twice the 1° grid step.
    assert!(rms <= 2.0, "RMS error {rms} deg");
}

#[test]
fn ridge_is_injective_away_from_endfire() {
    let (cfg, taps, plan, _) = training_setup();
    let map = build_map(&cfg, &taps, &plan, &degree_grid(-80.0, 80.0, 1.0)).unwrap();
    assert_eq!(map.len(), 161);
    let full = build_map(&cfg, &taps, &plan, &degree_grid(-85.0, 85.0, 1.0));
    match full {
        Err(Error::NonInjective { collisions }) => {
            assert!(collisions.iter().all(|c| c.0.abs() > 80.0 || c.1.abs() > 80.0))
        }
        other => panic!("expected collisions near endfire, got {other:?}"),
    }
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let cfg32 = ArrayConfig32::prototype();
    let cfg64 = ArrayConfig64::prototype();
    let theta = 0.6;
    let f = 28.2e9;
    let s32 = SamplerConfig32::ideal(&cfg32, 1.6e9).unwrap();
    let s64 = SamplerConfig64::ideal(&cfg64, 1.6e9).unwrap();
    let (_, g32) =
        ttdsim::analysis::tone_gain(&cfg32, &training_taps(&cfg32, 1), theta as f32, f as f32, &s32).unwrap();
    let (_, g64) = ttdsim::analysis::tone_gain(&cfg64, &training_taps(&cfg64, 1), theta, f, &s64).unwrap();
    assert!((10.0 * (g32 as f64 / g64).log10()).abs() < 0.01, "{g32} vs {g64}");
}

#[test]
fn iq_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capture.iq");
    let cfg = ArrayConfig64::prototype();
    let x = gen_tone(10e6, 100e6, 64).unwrap();
    let sig = apply_channel(
        &x,
        100e6,
        &cfg,
        &ChannelSpec {
            theta: 0.4,
            snr_db: Some(20.0),
            seed: 3,
        },
    )
    .unwrap();
    let (_, side) = write_iq(&path, &sig.channels, sig.sample_rate_hz, &sig.meta, Some("abc")).unwrap();
    assert!(side.exists());
    let (meta, back) = read_iq::<f64>(&path).unwrap();
    assert_eq!(meta.channel_count, 4);
    assert_eq!(meta.samples_per_channel, 64);
    assert_eq!(meta.seed, Some(3));
    assert_eq!(meta.sample_rate_hz, 100e6);
    for (a, b) in back.iter().flatten().zip(sig.channels.iter().flatten()) {
        assert!((a - b).norm() < 1e-6 * (1.0 + b.norm()));
    }
    let _: Vec<Complex<f64>> = back.concat();
}
