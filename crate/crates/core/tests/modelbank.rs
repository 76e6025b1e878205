use std::sync::OnceLock;

use epsdiag::config::RunConfig;
use epsdiag::envsim::SystemSample;
use epsdiag::faults::{FaultClass, Task};
use epsdiag::modelbank::*;
use epsdiag::pipeline::{bank_config, simulate_task};
use epsdiag::Error;
use proptest::prelude::*;

type Runs = Vec<(FaultClass, Vec<SystemSample>)>;

fn system_cfg(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        ..RunConfig::default()
    }
}

/// One bank fitted on seed-1 identification data, shared by the slow tests.
fn bank() -> &'static ModelBank {
    static B: OnceLock<ModelBank> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = system_cfg(1);
        let ident = simulate_task(&cfg, false).unwrap();
        fit_bank(Task::System5class, &ident, &bank_config(&cfg)).unwrap().0
    })
}

fn small(task: Task, n: usize) -> Runs {
    let mut cfg = RunConfig::default();
    cfg.simulate.task = task;
    cfg.simulate.sample_count = n;
    simulate_task(&cfg, false).unwrap()
}

fn quick() -> BankConfig {
    let mut c = BankConfig {
        hidden: 3,
        ..BankConfig::default()
    };
    c.lm.max_epochs = 5;
    c
}

#[test]
fn fit_bank_rejects_bad_datasets() {
    let runs = small(Task::System5class, 120);
    let mut dup = runs.clone();
    dup.push(runs[0].clone());
    assert!(matches!(fit_bank(Task::System5class, &dup, &quick()), Err(Error::Config(m)) if m.contains("duplicate")));
    let missing = runs[1..].to_vec();
    assert!(matches!(fit_bank(Task::System5class, &missing, &quick()), Err(Error::Config(m)) if m.contains("missing")));
    let short = small(Task::System5class, 99);
    assert!(matches!(fit_bank(Task::System5class, &short, &quick()), Err(Error::Config(m)) if m.contains("100")));
    let pv = small(Task::Pv3class, 120);
    assert!(matches!(fit_bank(Task::System5class, &pv, &quick()), Err(Error::Config(_))));
    let mut c = quick();
    c.hidden = 0;
    assert!(fit_bank(Task::System5class, &runs, &c).is_err());
}

#[test]
fn pv_bank_has_three_two_output_models() {
    let runs = small(Task::Pv3class, 150);
    let (b, reports) = fit_bank(Task::Pv3class, &runs, &quick()).unwrap();
    assert_eq!(b.models.len(), 3);
    assert_eq!(reports.len(), 3);
    assert_eq!(b.residual_len(), 6);
    for (m, c) in b.models.iter().zip(Task::Pv3class.classes()) {
        assert_eq!(m.class, *c);
        assert_eq!(m.net.layer_sizes(), [2, 3, 2]);
    }
    let p = b.predict(&[800.0, 30.0]).unwrap();
    let r = residuals(&b, &p[1], &[800.0, 30.0]).unwrap();
    assert_eq!(&r[2..4], &[0.0, 0.0]);
    let s = &runs[0].1[10];
    assert!(matches!(
        run_features(&b, std::slice::from_ref(s), FeatureKind::I2, 0),
        Err(Error::Config(_))
    ));
    assert_eq!(run_features(&b, std::slice::from_ref(s), FeatureKind::I1, 0).unwrap()[0].len(), 6);
}

#[test]
fn residual_of_a_models_own_prediction_is_zero() {
    let b = bank();
    let x = [900.0, 20.0];
    let p = b.predict(&x).unwrap();
    for (i, pi) in p.iter().enumerate() {
        let r = residuals(b, pi, &x).unwrap();
        assert_eq!(r[i], 0.0);
        for (j, pj) in p.iter().enumerate() {
            assert_eq!(r[j], pi[0] - pj[0]);
        }
    }
    assert!(matches!(residuals(b, &[1.0, 2.0], &x), Err(Error::Shape { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn residuals_shift_with_observation(y in -5.0f64..40.0, d in -10.0f64..10.0, irr in 200.0f64..1200.0, t in -20.0f64..80.0) {
        let b = bank();
        let r0 = residuals(b, &[y], &[irr, t]).unwrap();
        let r1 = residuals(b, &[y + d], &[irr, t]).unwrap();
        for (a, c) in r0.iter().zip(&r1) {
            prop_assert!((c - a - d).abs() <= 1e-9 * (1.0 + y.abs() + d.abs()));
        }
    }

    #[test]
    fn streaming_moment_equals_batch_mean(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let m = xs.iter().fold(RunningMoment::default(), |m, &x| update_moment(m, x));
        let batch = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert_eq!(m.count, xs.len() as u64);
        prop_assert!((m.mean - batch).abs() <= 1e-9 * (1.0 + batch.abs()));
    }
}

#[test]
fn moment_examples() {
    let m = [2.0, 4.0, 6.0].iter().fold(RunningMoment::default(), |m, &x| m.update(x));
    assert_eq!((m.count, m.mean), (3, 4.0));
    let mut t = MomentTracker::new(2);
    assert_eq!(t.values(), vec![0.0, 0.0]);
    t.update(10.0, &[10.0, 5.0]);
    t.update(20.0, &[10.0, 15.0]);
    assert_eq!(t.values(), vec![1.5, 1.5]);
    t.update(30.0, &[40.0, 0.0]);
    let v = t.values();
    assert_eq!(v[0], 1.0);
    assert!((v[1] - 3.0).abs() < 1e-12);
    t.reset();
    assert_eq!(t.values(), vec![0.0, 0.0]);
}

#[test]
fn build_features_examples() {
    let r = [0.1, -0.2, 0.3];
    assert_eq!(build_features(FeatureKind::I1, &r, None).unwrap(), r.to_vec());
    assert_eq!(
        build_features(FeatureKind::I2, &r, Some(&[1.0, 2.0, 3.0])).unwrap(),
        vec![0.1, 1.0, -0.2, 2.0, 0.3, 3.0]
    );
    assert!(matches!(build_features(FeatureKind::I2, &r, None), Err(Error::Config(_))));
    assert!(matches!(build_features(FeatureKind::I2, &r, Some(&[1.0])), Err(Error::Shape { .. })));
}

#[test]
fn healthy_residual_is_unbiased() {
    let b = bank();
    let runs = simulate_task(&system_cfg(1), true).unwrap();
    let healthy = &runs[0].1;
    let f = run_features(b, healthy, FeatureKind::I1, 0).unwrap();
    let r0: Vec<f64> = f.iter().map(|v| v[0]).collect();
    let n = r0.len() as f64;
    let mean = r0.iter().sum::<f64>() / n;
    let std = (r0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * std / n.sqrt(), "mean {mean}, std {std}");
}

#[test]
fn own_model_has_smallest_mean_residual() {
    let b = bank();
    let (mut hits, mut total) = (0, 0);
    for seed in 1..=10 {
        for (i, (c, run)) in simulate_task(&system_cfg(seed), true).unwrap().iter().enumerate() {
            let f = run_features(b, run, FeatureKind::I1, 0).unwrap();
            let n = f.len() as f64;
            let mad: Vec<f64> = (0..5).map(|j| f.iter().map(|v| v[j].abs()).sum::<f64>() / n).collect();
            let best = (0..5).min_by(|&a, &z| mad[a].total_cmp(&mad[z])).unwrap();
            if best == i {
                hits += 1;
            } else {
                eprintln!("seed {seed} {c}: {mad:?}");
            }
            total += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

#[test]
fn i2_features_have_ten_columns_and_ratio_one_on_own_class() {
    let b = bank();
    let ident = simulate_task(&system_cfg(1), false).unwrap();
    for (i, (_, run)) in ident.iter().enumerate() {
        let f = run_features(b, run, FeatureKind::I2, 0).unwrap();
        assert_eq!(f[0].len(), 10);
        let last = f.last().unwrap();
        assert!((last[2 * i + 1] - 1.0).abs() < 0.01, "{last:?}");
    }
}

#[test]
fn save_load_round_trip() {
    let b = bank();
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let back = ModelBank::load(dir.path()).unwrap();
    assert_eq!(&back, b);
    for x in [[200.0, -20.0], [1200.0, 80.0], [640.0, 12.5]] {
        assert_eq!(back.predict(&x).unwrap(), b.predict(&x).unwrap());
    }
    std::fs::remove_file(dir.path().join("model_reg_igbt_short.mlp")).unwrap();
    assert!(matches!(ModelBank::load(dir.path()), Err(Error::Io { .. })));
}
