use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::models::{ModelConfig, ModelKind};
use crate::signal::{generate_synthetic, SyntheticConfig, TrialSet};
use crate::tensor::NdArray;

fn one_param(v: f64) -> BTreeMap<String, NdArray<f64>> {
    BTreeMap::from([("w".to_string(), NdArray::new(&[1], vec![v]).unwrap())])
}

fn grad(g: f64) -> BTreeMap<String, Vec<f64>> {
    BTreeMap::from([("w".to_string(), vec![g])])
}

#[test]
fn adam_first_step_is_lr_sized() {
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    for g in [3.0, -0.01, 1e-3] {
        let mut p = one_param(0.5);
        let mut st = AdamState::new();
        adam_step(&mut p, &grad(g), &mut st, &cfg).unwrap();
        let delta = p["w"].data()[0] - 0.5;
        assert_eq!(delta.signum(), -g.signum());
        assert!((0.99 * cfg.lr..=cfg.lr).contains(&delta.abs()), "{delta}");
    }
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut p = one_param(0.7);
    let mut st = AdamState::new();
    for _ in 0..10 {
        adam_step(&mut p, &grad(0.0), &mut st, &cfg).unwrap();
    }
    assert_eq!(p["w"].data()[0], 0.7);
}

#[test]
fn adam_matches_scalar_recurrence_with_coupled_decay() {
    let cfg = TrainConfig {
        lr: 0.01,
        weight_decay: 0.1,
        ..TrainConfig::default()
    };
    let grads = [0.3, -1.2, 0.05, 2.0, 0.0];
    let mut p = one_param(1.5);
    let mut st = AdamState::new();
    let (mut w, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
    for (t, &g) in grads.iter().enumerate() {
        adam_step(&mut p, &grad(g), &mut st, &cfg).unwrap();
        let g = g + 0.1 * w;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
        let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
        w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        assert!((p["w"].data()[0] - w).abs() < 1e-14);
    }
    assert_eq!(st.step, 5);
}

#[test]
fn adam_rejects_non_finite_gradients_without_updating() {
    let mut p = one_param(1.0);
    let mut st = AdamState::new();
    let err = adam_step(&mut p, &grad(f64::NAN), &mut st, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Numeric { .. }));
    assert_eq!(p["w"].data()[0], 1.0);
    assert_eq!(st.step, 0);
}

#[test]
fn train_config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            patience_epochs: 10,
            max_epochs: 5,
            ..TrainConfig::default()
        },
        TrainConfig {
            adam_beta2: 1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
}

#[test]
fn early_stopping_patience_one_on_worsening_loss() {
    let mut es = EarlyStopping::new(1, 100);
    assert!(es.observe(1, 1.0));
    assert_eq!(es.check(1), None);
    assert!(!es.observe(2, 1.5));
    assert_eq!(es.check(2), Some(StopReason::Patience));
    assert_eq!(es.best_epoch(), 1);
    // equal loss is not an improvement
    let mut es = EarlyStopping::new(3, 3);
    es.observe(1, 2.0);
    assert!(!es.observe(2, 2.0));
    es.observe(3, 1.0);
    assert_eq!(es.check(3), Some(StopReason::MaxEpochs));
}

proptest! {
    #[test]
    fn early_stopping_never_misses_a_better_loss(
        losses in prop::collection::vec(0.0f64..10.0, 1..80),
        patience in 1usize..10,
    ) {
        let max = losses.len().max(patience);
        let mut es = EarlyStopping::new(patience, max);
        let mut stop = None;
        for (i, &l) in losses.iter().enumerate() {
            es.observe(i + 1, l);
            if let Some(r) = es.check(i + 1) {
                stop = Some((i + 1, r));
                break;
            }
        }
        let best = es.best_epoch();
        let seen = stop.map_or(losses.len(), |s| s.0);
        let min = losses[..seen].iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(losses[best - 1], min);
        prop_assert_eq!(losses[..best - 1].iter().position(|&l| l == min), None);
        if let Some((epoch, StopReason::Patience)) = stop {
            prop_assert_eq!(epoch - best, patience);
        }
    }
}

fn tiny_set(n: usize, effect: f64, seed: u64) -> TrialSet {
    generate_synthetic(&SyntheticConfig {
        n_trials: n,
        n_channels: 3,
        n_times: 200,
        sfreq: 250.0,
        n_classes: 2,
        effect_strength: effect,
        seed,
    })
    .unwrap()
}

fn tiny_model(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        n_kernels: 8,
        kernel_len: 13,
        pool_size: 35,
        pool_stride: Some(7),
        attn_heads: 2,
        ..ModelConfig::new(kind, 3, 200, 2)
    }
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 16,
        patience_epochs: 10,
        max_epochs: 40,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn scaled(set: &TrialSet) -> TrialSet {
    crate::signal::standard_scale(set).unwrap().apply(set).unwrap()
}

#[test]
fn training_is_deterministic_and_record_consistent() {
    let set = scaled(&tiny_set(40, 2.0, 1));
    let tr = Dataset::<f64>::from_trials(&set.subset(&(0..30).collect::<Vec<_>>()).unwrap());
    let va = Dataset::<f64>::from_trials(&set.subset(&(30..40).collect::<Vec<_>>()).unwrap());
    let cfg = TrainConfig {
        max_epochs: 6,
        patience_epochs: 6,
        ..quick_cfg()
    };
    let model = crate::models::build_model::<f64>(tiny_model(ModelKind::Conf1d), 4).unwrap();
    let (a, ra) = train(model.clone(), &tr, &va, &cfg).unwrap();
    let (b, rb) = train(model, &tr, &va, &cfg).unwrap();
    assert_eq!(a, b);
    let strip = |r: &TrainRecord| -> Vec<(f64, f64, f64)> {
        r.epochs.iter().map(|e| (e.train_loss, e.val_loss, e.val_accuracy)).collect()
    };
    assert_eq!(strip(&ra), strip(&rb));
    assert_eq!(ra.n_epochs(), 6);
    assert_eq!(ra.stopped_reason, StopReason::MaxEpochs);
    let min = ra.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(ra.best().val_loss, min);
    let sum: f64 = ra.epochs.iter().map(|e| e.epoch_seconds).sum();
    assert!(ra.total_time >= sum * 0.99);
    assert!(ra.epochs.iter().all(|e| e.train_seconds <= e.epoch_seconds));
    // the returned model is the best checkpoint
    let (loss, _) = evaluate(&a, &va).unwrap();
    assert!((loss - min).abs() < 1e-12);
}

#[test]
fn separable_task_is_learned_and_best_tracks_train_loss() {
    let set = scaled(&tiny_set(80, 4.0, 2));
    let data = Dataset::<f32>::from_trials(&set);
    let model = crate::models::build_model::<f32>(tiny_model(ModelKind::Cnn2d), 1).unwrap();
    let (best, rec) = train(model, &data, &data, &quick_cfg()).unwrap();
    assert!(rec.best().val_loss <= rec.epochs[0].val_loss);
    let (_, acc) = evaluate(&best, &data).unwrap();
    assert!(acc >= 0.9, "{acc}");
}

#[test]
fn empty_sets_are_rejected() {
    let set = tiny_set(10, 1.0, 0);
    let data = Dataset::<f32>::from_trials(&set);
    let empty = Dataset::<f32> {
        inputs: NdArray::zeros(&[1, 1, 3, 200]),
        labels: vec![],
    };
    let model = crate::models::build_model::<f32>(tiny_model(ModelKind::Cnn1d), 1).unwrap();
    assert!(matches!(train(model, &data, &empty, &quick_cfg()), Err(Error::Data(_))));
}

#[test]
fn experiment_bookkeeping_and_persistence() {
    let set = generate_synthetic(&SyntheticConfig {
        n_trials: 48,
        n_channels: 4,
        n_times: 200,
        sfreq: 250.0,
        n_classes: 4,
        effect_strength: 2.0,
        seed: 3,
    })
    .unwrap();
    let models: Vec<ModelConfig> = [ModelKind::Cnn1d, ModelKind::Cnn2d]
        .into_iter()
        .map(|k| ModelConfig {
            n_channels: 4,
            n_classes: 4,
            ..tiny_model(k)
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let opts = ExperimentOptions {
        k_folds: 3,
        seed: 5,
        train: TrainConfig {
            max_epochs: 3,
            patience_epochs: 3,
            ..quick_cfg()
        },
        jobs: 2,
        out_dir: Some(dir.path().to_path_buf()),
    };
    let report = run_experiment::<f32>(&set, &models, &opts).unwrap();
    assert_eq!(report.runs.len(), 6);
    assert_eq!(report.splits.len(), 3);
    for s in &report.splits {
        audit_split(s).unwrap();
    }
    let mut tests: Vec<usize> = report.splits.iter().flat_map(|s| s.test.clone()).collect();
    tests.sort();
    assert_eq!(tests, (0..48).collect::<Vec<_>>());
    for b in &report.baseline {
        assert!((b.accuracy - 0.25).abs() < 0.1, "{b:?}");
    }
    for r in &report.runs {
        assert_eq!(r.init_seed, init_seed(5, r.kind));
    }
    assert_eq!(
        std::fs::read_dir(dir.path().join("checkpoints")).unwrap().count(),
        6
    );
    assert_eq!(std::fs::read_dir(dir.path().join("records")).unwrap().count(), 6);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 + 3);

    // same seed, sequential: identical folds and accuracies
    let again = run_experiment::<f32>(
        &set,
        &models,
        &ExperimentOptions {
            jobs: 1,
            out_dir: None,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(again.splits, report.splits);
    let accs = |r: &ExperimentReport<f32>| r.runs.iter().map(|x| x.test_accuracy).collect::<Vec<_>>();
    assert_eq!(accs(&again), accs(&report));
}

#[test]
fn audit_catches_leaks() {
    let bad = FoldSplit {
        train: vec![0, 1],
        val: vec![2],
        test: vec![1, 3],
    };
    assert!(matches!(audit_split(&bad), Err(Error::Contract(_))));
}

#[test]
fn quantiles_interpolate() {
    let s = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(quantile(&s, 0.5), 3.0);
    assert_eq!(quantile(&s, 0.25), 2.0);
    assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
}

#[test]
fn benchmark_reports_requested_samples() {
    let cfg = tiny_model(ModelKind::Cnn1d);
    let opts = BenchOptions {
        n_trials: 16,
        batch_size: 8,
        n_epochs: 5,
        warmup: 3,
        seed: 0,
    };
    let r = benchmark_epoch::<f32>(&cfg, &opts).unwrap();
    assert_eq!(r.samples.len(), 5);
    assert!(r.q1 <= r.median && r.median <= r.q3);
    assert!(benchmark_epoch::<f32>(&cfg, &BenchOptions { warmup: 1, ..opts }).is_err());
}
