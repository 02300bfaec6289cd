//! Property tests against independent oracles.

use proptest::prelude::*;
use steer_core::dropout::bernoulli_draws;
use steer_core::mc::{predictive_mean, predictive_variance};
use steer_core::pa::{fuse, FusionConfig};
use steer_core::synth::{render_view, ImageConfig, Segment, Track};
use steer_core::tensor::{conv2d, mse};
use steer_core::*;

fn tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    use rand::Rng;
    let mut r = steer_core::seed::rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct nested-loop valid convolution.
fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> (Vec<usize>, Vec<f64>) {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for u in 0..kh {
                        for v in 0..kw {
                            let xv = x.data()[(c * h + i * stride + u) * w + j * stride + v];
                            let kv = k.data()[((o * ci + c) * kh + u) * kw + v];
                            acc += xv * kv;
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    (vec![co, oh, ow], out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_shape_and_values(
        ci in 1usize..3, co in 1usize..4, kh in 1usize..6, kw in 1usize..6,
        extra_h in 0usize..20, extra_w in 0usize..20, stride in 1usize..4, seed in any::<u64>(),
    ) {
        let (h, w) = (kh + extra_h, kw + extra_w);
        let x = tensor(vec![ci, h, w], seed);
        let k = tensor(vec![co, ci, kh, kw], seed ^ 1);
        let b = tensor(vec![co], seed ^ 2);
        let y = conv2d(&x, &k, &b, stride).unwrap();
        prop_assert_eq!(y.shape(), &[co, (h - kh) / stride + 1, (w - kw) / stride + 1][..]);
        let (shape, want) = conv_oracle(&x, &k, &b, stride);
        prop_assert_eq!(y.shape(), &shape[..]);
        for (a, e) in y.data().iter().zip(&want) {
            prop_assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn spatial_equals_tied_elementwise(
        maps in 1usize..8, h in 1usize..9, w in 1usize..9, p in 0.05f64..1.0, seed in any::<u64>(),
    ) {
        let x = tensor(vec![maps, h, w], seed);
        let spatial = apply_dropout(&x, &sample_spatial_mask(maps, &[h, w], p, seed).unwrap()).unwrap();
        // Element-wise dropout whose per-element decisions are copied from
        // one draw per map.
        let draws = bernoulli_draws(maps, p, seed).unwrap();
        for (i, (&xv, &sv)) in x.data().iter().zip(spatial.data()).enumerate() {
            let keep = draws[i / (h * w)];
            let want = if keep { xv / p } else { 0.0 };
            prop_assert!((sv - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn estimators_match_two_pass(samples in prop::collection::vec(-3.0f64..3.0, 2..64)) {
        let t = samples.len() as f64;
        let mean: f64 = samples.iter().sum::<f64>() / t;
        let var: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t;
        let m = predictive_mean(&samples).unwrap();
        let v = predictive_variance(&samples).unwrap();
        prop_assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((v - var).abs() <= 1e-12 * var.max(1e-3));
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn variance_is_shift_invariant_and_scales(
        samples in prop::collection::vec(-1.0f64..1.0, 2..32), shift in -2.0f64..2.0, scale in 0.1f64..3.0,
    ) {
        let v = predictive_variance(&samples).unwrap();
        let shifted: Vec<f64> = samples.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = samples.iter().map(|x| x * scale).collect();
        prop_assert!((predictive_variance(&shifted).unwrap() - v).abs() <= 1e-12 * 8.0);
        prop_assert!((predictive_variance(&scaled).unwrap() - scale * scale * v).abs() <= 1e-12 * 16.0);
        let c = vec![samples[0]; samples.len()];
        prop_assert_eq!(predictive_variance(&c).unwrap(), 0.0);
    }

    #[test]
    fn fusion_blends_and_clamps(
        u_n in -0.2f64..0.2, u_h in -0.2f64..0.2, var in 0.0f64..10.0, gain in 0.0f64..10.0,
    ) {
        let f = fuse(u_n, u_h, var, &FusionConfig::with_gain(gain)).unwrap();
        prop_assert!((0.0..=1.0).contains(&f.sigma));
        prop_assert_eq!(f.sigma, (gain * var).clamp(0.0, 1.0));
        prop_assert_eq!(f.u_pa, (1.0 - f.sigma) * u_n + f.sigma * u_h);
        prop_assert!(f.u_pa >= u_n.min(u_h) && f.u_pa <= u_n.max(u_h));
    }

    #[test]
    fn mse_nonnegative_zero_iff_equal(a in prop::collection::vec(-5.0f64..5.0, 1..16), d in -1.0f64..1.0, at in any::<prop::sample::Index>()) {
        let p = Tensor::from_vec(a.clone()).unwrap();
        prop_assert_eq!(mse(&p, &p).unwrap(), 0.0);
        let mut b = a.clone();
        let i = at.index(b.len());
        b[i] += d;
        let m = mse(&p, &Tensor::from_vec(b).unwrap()).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m == 0.0, d == 0.0);
    }
}

fn small_net(kind: DropoutKind) -> Network {
    let cfg = NetworkConfig {
        input: [1, 17, 25],
        conv_channels: vec![3, 4],
        conv_strides: vec![2, 1],
        fc_widths: vec![8, 1],
        conv_dropout: kind,
        ..NetworkConfig::default()
    };
    Network::build(cfg, 11).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let net = small_net(DropoutKind::Spatial);
        let x = tensor(vec![1, 17, 25], seed);
        let a = net.forward(&x, Mode::Deterministic).unwrap();
        prop_assert_eq!(a.to_bits(), net.forward(&x, Mode::Deterministic).unwrap().to_bits());
        let m = Mode::Stochastic { seed, pass: 3 };
        prop_assert_eq!(net.forward(&x, m).unwrap().to_bits(), net.forward(&x, m).unwrap().to_bits());
    }

    #[test]
    fn mirrored_track_mirrors_image(kappa in -0.15f64..0.15, s in 0.0f64..30.0) {
        let track = Track::from_segments(
            vec![Segment { length: 10.0, curvature: 0.0 }, Segment { length: 60.0, curvature: kappa }],
            1,
        ).unwrap();
        let cfg = ImageConfig { noise: 0.0, ..ImageConfig::default() };
        let a = render_view(&track, track.pose_at(s), s, &cfg).unwrap();
        let m = track.mirrored();
        let b = render_view(&m, m.pose_at(s), s, &cfg).unwrap();
        let w = cfg.width;
        for r in 0..cfg.height {
            for c in 0..w {
                let (x, y) = (a.data()[r * w + c], b.data()[r * w + (w - 1 - c)]);
                prop_assert!((x - y).abs() <= 1e-9, "row {} col {}: {} vs {}", r, c, x, y);
            }
        }
    }
}

#[test]
fn keep_all_stochastic_equals_deterministic() {
    let mut net = small_net(DropoutKind::ElementWise);
    net.config.conv_keep = 1.0;
    net.config.fc_keep = 1.0;
    let x = tensor(vec![1, 17, 25], 5);
    let d = net.forward(&x, Mode::Deterministic).unwrap();
    for pass in 0..5 {
        assert_eq!(net.forward(&x, Mode::Stochastic { seed: 1, pass }).unwrap(), d);
    }
}

#[test]
fn zero_image_zero_biases_gives_zero() {
    let net = small_net(DropoutKind::Spatial);
    let x = Tensor::zeros(&[1, 17, 25]).unwrap();
    assert_eq!(net.forward(&x, Mode::Deterministic).unwrap(), 0.0);
    assert_eq!(net.forward(&x, Mode::Stochastic { seed: 2, pass: 0 }).unwrap(), 0.0);
}
