use std::path::Path;

use epsdiag::mlpkit::*;
use epsdiag::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every training run here goes through this: accepted-step MSE must fall strictly.
fn train(net: &MlpNetwork, xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &TrainConfig) -> (MlpNetwork, TrainReport) {
    let (n, r) = lm_train(net, xs, ys, cfg).unwrap();
    for w in r.mse_history.windows(2) {
        assert!(w[1] < w[0], "accepted step did not reduce mse: {w:?}");
    }
    assert_eq!(*r.mse_history.last().unwrap(), r.final_mse);
    (n, r)
}

fn random_net(g: &mut ChaCha8Rng, n_in: usize, nh: usize, n_out: usize) -> MlpNetwork {
    let p = MlpNetwork::param_count_for(n_in, nh, n_out);
    MlpNetwork::from_params(n_in, nh, n_out, (0..p).map(|_| g.random_range(-1.5..1.5)).collect()).unwrap()
}

#[test]
fn forward_examples() {
    let z = MlpNetwork::zeros(3, 4, 2);
    assert_eq!(z.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    let c = MlpNetwork::from_params(2, 1, 1, vec![0.0, 0.0, 0.0, 1.0, 2.5]).unwrap();
    assert_eq!(c.forward(&[3.0, -9.0]).unwrap(), vec![2.5]);
    let odd = MlpNetwork::from_params(1, 1, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(odd.forward(&[0.0]).unwrap(), vec![0.0]);
    assert!((odd.forward(&[0.5]).unwrap()[0] - 0.5f64.tanh()).abs() < 1e-15);
    assert!(matches!(z.forward(&[1.0]), Err(Error::Shape { expected: 3, got: 1 })));
    assert!(MlpNetwork::from_params(1, 1, 1, vec![0.0; 3]).is_err());
    assert!(MlpNetwork::from_params(1, 1, 1, vec![f64::NAN, 0.0, 0.0, 0.0]).is_err());
}

#[test]
fn mse_examples() {
    let y = vec![vec![0.0], vec![2.0]];
    assert_eq!(mse(&y, &y).unwrap(), 0.0);
    assert_eq!(mse(&y, &[vec![1.0], vec![1.0]]).unwrap(), 1.0);
    assert!(matches!(mse(&[], &[]), Err(Error::Domain(_))));
}

#[test]
fn jacobian_output_bias_column() {
    let c = MlpNetwork::from_params(2, 1, 1, vec![0.0, 0.0, 0.0, 1.0, 2.5]).unwrap();
    let xs = vec![vec![0.1, 0.2], vec![-3.0, 4.0], vec![0.0, 0.0]];
    let j = jacobian(&c, &xs).unwrap();
    assert_eq!(j.len(), 3);
    for row in &j {
        assert_eq!(row[4], -1.0);
    }
}

#[test]
fn jacobian_zero_input_hidden_weights() {
    let mut g = ChaCha8Rng::seed_from_u64(5);
    let net = random_net(&mut g, 2, 3, 1);
    let j = jacobian(&net, &[vec![0.0, 0.0]]).unwrap();
    let w2 = 2 * 3 + 3;
    for h in 0..3 {
        assert!((j[0][w2 + h] + net.b1(h).tanh()).abs() < 1e-15);
    }
}

#[allow(clippy::needless_range_loop)]
fn fd_jacobian(net: &MlpNetwork, xs: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let [_, _, k] = net.layer_sizes();
    let p = net.params().len();
    let mut out = vec![vec![0.0; p]; xs.len() * k];
    for t in 0..p {
        let (mut a, mut b) = (net.clone(), net.clone());
        a.params_mut()[t] += h;
        b.params_mut()[t] -= h;
        for (s, x) in xs.iter().enumerate() {
            let (fa, fb) = (a.forward(x).unwrap(), b.forward(x).unwrap());
            for o in 0..k {
                // e = y − ŷ
                out[s * k + o][t] = -(fa[o] - fb[o]) / (2.0 * h);
            }
        }
    }
    out
}

#[test]
fn jacobian_matches_central_differences() {
    let mut g = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let (n_in, nh, n_out) = if case == 0 {
            (2, 3, 1)
        } else {
            (g.random_range(1..5), g.random_range(1..8), g.random_range(1..4))
        };
        let net = random_net(&mut g, n_in, nh, n_out);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..n_in).map(|_| g.random_range(-2.0..2.0)).collect()).collect();
        let j = jacobian(&net, &xs).unwrap();
        let fd = fd_jacobian(&net, &xs, 1e-6);
        let scale = fd.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = j
            .iter()
            .flatten()
            .zip(fd.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev / scale <= 1e-5, "case {case}: relative deviation {}", dev / scale);
    }
}

#[test]
fn normal_equations_match_explicit_jacobian() {
    let mut g = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let (n_in, nh, k) = (g.random_range(1..4), g.random_range(1..6), g.random_range(1..4));
        let net = random_net(&mut g, n_in, nh, k);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..n_in).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<Vec<f64>> = (0..30).map(|_| (0..k).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
        let j = jacobian(&net, &xs).unwrap();
        let e: Vec<f64> = ys
            .iter()
            .zip(net.predict(&xs).unwrap())
            .flat_map(|(y, p)| y.iter().zip(p).map(|(a, b)| a - b).collect::<Vec<_>>())
            .collect();
        let p = net.params().len();
        let (jtj, jte, sse) = normal_equations(&net, &xs, &ys).unwrap();
        for a in 0..p {
            let want: f64 = j.iter().zip(&e).map(|(r, ei)| r[a] * ei).sum();
            assert!((jte[a] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            for b in 0..p {
                let want: f64 = j.iter().map(|r| r[a] * r[b]).sum();
                assert!((jtj[a * p + b] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
        let want: f64 = e.iter().map(|v| v * v).sum();
        assert!((sse - want).abs() <= 1e-12 * (1.0 + want));
    }
}

#[test]
fn converged_start_runs_no_epochs() {
    let net = MlpNetwork::zeros(1, 3, 1);
    let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
    let ys = vec![vec![0.0]; 10];
    let (out, r) = train(&net, &xs, &ys, &TrainConfig::default());
    assert_eq!(r.epochs, 0);
    assert_eq!(r.final_mse, 0.0);
    assert_eq!(r.stop, StopReason::Goal);
    assert_eq!(out, net);
}

#[test]
fn learns_linear_target() {
    let xs: Vec<Vec<f64>> = (0..=40).map(|i| vec![-1.0 + i as f64 / 20.0]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0]]).collect();
    let cfg = TrainConfig {
        max_epochs: 200,
        goal_mse: 1e-10,
        ..TrainConfig::default()
    };
    let (_, r) = train(&MlpNetwork::init(1, 4, 1, 3), &xs, &ys, &cfg);
    assert!(r.final_mse <= 1e-8, "{}", r.final_mse);
    assert!(r.epochs <= 200);
}

#[test]
fn learns_sine() {
    let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![-1.0 + 2.0 * i as f64 / 199.0]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(3.0 * x[0]).sin()]).collect();
    let cfg = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let (_, r) = train(&MlpNetwork::init(1, 10, 1, 1), &xs, &ys, &cfg);
    assert!(r.final_mse <= 1e-5, "{}", r.final_mse);
    assert!(r.correlation_r.unwrap() > 0.999);
}

#[test]
fn training_is_reproducible() {
    let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0, (i as f64 * 0.37).cos()]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * x[1], x[0] - x[1]]).collect();
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let (a, _) = train(&MlpNetwork::init(2, 5, 2, 9), &xs, &ys, &cfg);
    let (b, _) = train(&MlpNetwork::init(2, 5, 2, 9), &xs, &ys, &cfg);
    assert_eq!(a.params(), b.params());
    assert_ne!(MlpNetwork::init(2, 5, 2, 9), MlpNetwork::init(2, 5, 2, 10));
}

#[test]
fn stops_on_epoch_limit_and_damping_cap() {
    let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 30.0]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(9.0 * x[0]).sin()]).collect();
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (_, r) = train(&MlpNetwork::init(1, 2, 1, 0), &xs, &ys, &cfg);
    assert_eq!((r.epochs, r.stop), (3, StopReason::MaxEpochs));
    let cfg = TrainConfig {
        max_mu: 1e-2,
        mu_init: 1e-3,
        max_epochs: 10_000,
        ..TrainConfig::default()
    };
    let (_, r) = train(&MlpNetwork::init(1, 2, 1, 0), &xs, &ys, &cfg);
    assert_eq!(r.stop, StopReason::MaxMu);
}

#[test]
fn train_config_validation() {
    let bad = [
        TrainConfig { mu_init: 0.0, ..TrainConfig::default() },
        TrainConfig { mu_inc: 1.0, ..TrainConfig::default() },
        TrainConfig { mu_dec: 1.0, ..TrainConfig::default() },
        TrainConfig { goal_mse: -1.0, ..TrainConfig::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
    let net = MlpNetwork::zeros(1, 1, 1);
    assert!(lm_train(&net, &[], &[], &TrainConfig::default()).is_err());
}

#[test]
fn normalizer_examples() {
    let n = Normalizer::fit(&[vec![0.0, 3.0], vec![10.0, 3.0]]).unwrap();
    assert_eq!(n.apply(&[5.0, 3.0]), vec![0.0, 0.0]);
    assert_eq!(n.apply(&[10.0, 3.0])[0], 1.0);
    assert_eq!(n.apply(&[0.0, 3.0])[0], -1.0);
    assert_eq!(n.scale[1], 1.0);
    assert!(Normalizer::fit(&[]).is_err());
}

proptest! {
    #[test]
    fn normalizer_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
        let n = Normalizer::fit(&rows).unwrap();
        for r in &rows {
            let z = n.apply(r);
            for (a, b) in n.invert(&z).iter().zip(r) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            prop_assert!(z.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        }
        // refitting on normalized data is (almost) the identity map
        let zs = n.apply_all(&rows);
        let m = Normalizer::fit(&zs).unwrap();
        for z in &zs {
            for (a, b) in m.apply(z).iter().zip(z) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_finite_for_large_inputs(x in prop::collection::vec(-1e3f64..1e3, 3), seed in 0u64..1000) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut g, 3, 6, 2);
        prop_assert!(net.forward(&x).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn text_format_is_bit_exact(seed in any::<u64>()) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut g, 2, 4, 3);
        let text = net.to_text();
        let back = MlpNetwork::from_text(&text, Path::new("m.mlp")).unwrap();
        prop_assert_eq!(back.params(), net.params());
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn corrupt_model_file_names_line() {
    let net = MlpNetwork::init(2, 3, 1, 0);
    let mut lines: Vec<String> = net.to_text().lines().map(String::from).collect();
    lines[5] = "garbage".into();
    match MlpNetwork::from_text(&lines.join("\n"), Path::new("bank/model_none.mlp")) {
        Err(e @ Error::Format { line: 6, .. }) => assert!(e.to_string().starts_with("bank/model_none.mlp:6:")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        MlpNetwork::from_text("mlp-v2\n1 1 1\n", Path::new("x")),
        Err(Error::Format { line: 1, .. })
    ));
    let short = net.to_text().lines().take(4).collect::<Vec<_>>().join("\n");
    assert!(matches!(MlpNetwork::from_text(&short, Path::new("x")), Err(Error::Format { .. })));
}

#[test]
fn error_stats_examples() {
    let y = [0.5, 1.5, -2.0];
    let s = error_stats(&y, &y).unwrap();
    assert_eq!((s.mean, s.std, s.rmse), (0.0, 0.0, 0.0));
    assert_eq!(s.correlation_r, Some(1.0));
    let r = error_stats(&[0.0, 1.0], &[1.0, 0.0]).unwrap().correlation_r.unwrap();
    assert!((r + 1.0).abs() < 1e-12);
    assert_eq!(error_stats(&[1.0, 1.0], &[0.0, 2.0]).unwrap().correlation_r, None);
    assert!(error_stats(&[1.0], &[1.0]).is_err());
}
