use steer_core::pa::{cross_track_error, run_closed_loop, RunStatus, SimOutcome};
use steer_core::seed::rng;
use steer_core::synth::{generate_track, ImageConfig, TrackConfig};
use steer_core::*;

use rand::Rng;

fn camera() -> ImageConfig {
    ImageConfig {
        height: 17,
        width: 25,
        ..ImageConfig::default()
    }
}

fn net() -> Network {
    let cfg = NetworkConfig {
        input: [1, 17, 25],
        conv_channels: vec![3, 4],
        conv_strides: vec![2, 1],
        fc_widths: vec![8, 1],
        ..NetworkConfig::default()
    };
    Network::build(cfg, 1).unwrap()
}

fn go(net: &Network, track: &Track, human: HumanSource, gain: f64, ticks: u64) -> SimOutcome {
    let mc = McConfig {
        passes: 4,
        seed: 2,
        ..McConfig::default()
    };
    run_closed_loop(net, track, &human, FusionConfig::with_gain(gain), mc, SimConfig::default(), camera(), ticks).unwrap()
}

fn score(o: &SimOutcome) -> f64 {
    match o.status {
        RunStatus::LeftCorridor { .. } => f64::INFINITY,
        _ => o.mean_abs_cross_track(),
    }
}

#[test]
fn zero_gain_passes_network_through() {
    let net = net();
    let track = generate_track(3, &TrackConfig::default()).unwrap();
    let out = go(&net, &track, HumanSource::Scripted(ScriptedHuman::corrective()), 0.0, 60);
    assert!(!out.records.is_empty());
    for r in &out.records {
        assert_eq!(r.sigma, 0.0);
        assert_eq!(r.u_pa, r.u_n);
        assert!(r.u_h.is_some());
    }
}

#[test]
fn zero_ticks_empty_log() {
    let net = net();
    let track = generate_track(3, &TrackConfig::default()).unwrap();
    let out = go(&net, &track, HumanSource::None, 1.0, 0);
    assert!(out.records.is_empty());
    assert_eq!(out.status, RunStatus::Completed);
    assert_eq!(out.mean_abs_cross_track(), 0.0);
}

#[test]
fn records_blend_and_replay() {
    let net = net();
    let track = generate_track(4, &TrackConfig::default()).unwrap();
    let human = HumanSource::Scripted(ScriptedHuman::corrective());
    let a = go(&net, &track, human.clone(), 3.0, 80);
    let b = go(&net, &track, human, 3.0, 80);
    assert_eq!(a.records, b.records);
    assert_eq!(a.status, b.status);
    for (i, r) in a.records.iter().enumerate() {
        assert_eq!(r.tick, i as u64);
        assert!((0.0..=1.0).contains(&r.sigma));
        assert!(r.blend_residual() <= 1e-12);
    }
}

#[test]
fn perfect_human_no_worse_than_network() {
    let net = net();
    for seed in 0..3 {
        let track = generate_track(10 + seed, &TrackConfig::default()).unwrap();
        let alone = go(&net, &track, HumanSource::None, 1.0, 200);
        let fused = go(&net, &track, HumanSource::Scripted(ScriptedHuman::Perfect), 1e9, 200);
        assert!(fused.records.iter().all(|r| r.sigma == 1.0 || r.variance == 0.0));
        assert!(!matches!(fused.status, RunStatus::LeftCorridor { .. }));
        assert!(score(&fused) <= score(&alone), "seed {seed}: {} vs {}", score(&fused), score(&alone));
    }
}

#[test]
fn cross_track_is_continuous() {
    let track = generate_track(5, &TrackConfig::default()).unwrap();
    let mut r = rng(6);
    for _ in 0..200 {
        let s = r.random_range(20.0..track.length() - 20.0);
        let pose = track.pose_at(s);
        let off = r.random_range(-3.0..3.0);
        let base = VehicleState {
            x: pose.x - off * pose.heading.sin(),
            y: pose.y + off * pose.heading.cos(),
            ..VehicleState::at(pose, s, 5.0)
        };
        let e0 = cross_track_error(&base, &track);
        assert!((e0 - off).abs() < 0.05 * (1.0 + off.abs()), "on-normal offset {off} gave {e0}");
        for d in [1e-3, 1e-2, 1e-1] {
            let moved = VehicleState {
                x: base.x + d * r.random_range(-1.0..1.0),
                y: base.y + d * r.random_range(-1.0..1.0),
                ..base
            };
            let delta = (cross_track_error(&moved, &track) - e0).abs();
            assert!(delta <= 2.0 * d + 0.2 * d * d + 1e-6, "step {d}: jump {delta}");
        }
    }
}
