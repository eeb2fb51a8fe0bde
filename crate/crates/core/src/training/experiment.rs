//! Cross-validated comparison of several architectures on shared folds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::optim::TrainConfig;
use super::trainer::{predict, train, Dataset, TrainRecord};
use crate::error::{Error, Result};
use crate::models::{save_checkpoint, Model, ModelConfig, ModelKind};
use crate::signal::{holdout_split, standard_scale, stratified_kfold, Fold, Scaler, TrialSet};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub k_folds: usize,
    /// Drives fold assignment, validation holdouts, initialization, and
    /// shuffling.
    pub seed: u64,
    pub train: TrainConfig,
    /// Concurrent training runs. Timing numbers are only comparable with 1.
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            k_folds: 5,
            seed: 0,
            train: TrainConfig::default(),
            jobs: 1,
            out_dir: None,
        }
    }
}

/// Initialization seed for a model type: shared by all folds of that type so
/// fold-to-fold differences come from the data alone.
pub fn init_seed(seed: u64, kind: ModelKind) -> u64 {
    let idx = ModelKind::ALL.iter().position(|&k| k == kind).expect("known kind") as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx + 1)
}

pub fn model_id(kind: ModelKind, fold: usize) -> String {
    format!("{kind}_fold{fold}")
}

#[derive(Clone, Debug)]
pub struct RunResult<T> {
    pub kind: ModelKind,
    pub fold: usize,
    pub init_seed: u64,
    pub test_accuracy: f64,
    pub record: TrainRecord,
    pub scaler: Scaler,
    pub model: Model<T>,
}

impl<T> RunResult<T> {
    pub fn id(&self) -> String {
        model_id(self.kind, self.fold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub fold: usize,
    pub majority_class: usize,
    pub accuracy: f64,
}

/// One fold's index sets after the validation holdout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport<T> {
    pub splits: Vec<FoldSplit>,
    /// Ordered by model type, then fold.
    pub runs: Vec<RunResult<T>>,
    pub baseline: Vec<BaselineRow>,
}

impl<T> ExperimentReport<T> {
    pub fn run(&self, kind: ModelKind, fold: usize) -> Option<&RunResult<T>> {
        self.runs.iter().find(|r| r.kind == kind && r.fold == fold)
    }

    /// Mean test accuracy over folds for one model type.
    pub fn mean_accuracy(&self, kind: ModelKind) -> Option<f64> {
        let accs: Vec<f64> = self.runs.iter().filter(|r| r.kind == kind).map(|r| r.test_accuracy).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// One row per model type and fold, plus majority-class baseline rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,fold,test_accuracy,n_epochs,best_epoch,mean_epoch_s,total_s\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{:.6},{:.6}",
                r.kind,
                r.fold,
                r.test_accuracy,
                r.record.n_epochs(),
                r.record.best_epoch,
                r.record.mean_train_seconds(),
                r.record.total_time
            );
        }
        for b in &self.baseline {
            let _ = writeln!(out, "majority,{},{:.6},0,0,0,0", b.fold, b.accuracy);
        }
        out
    }
}

/// Checks that no test index reaches scaler fitting, training, or
/// validation.
pub fn audit_split(split: &FoldSplit) -> Result<()> {
    let mut seen = BTreeMap::new();
    for (name, set) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        for &i in set.iter() {
            if let Some(prev) = seen.insert(i, name) {
                return Err(Error::Contract(format!("trial {i} appears in both {prev} and {name}")));
            }
        }
    }
    Ok(())
}

fn majority(labels: &[usize], idx: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    idx.iter().for_each(|&i| counts[labels[i]] += 1);
    (0..n_classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b })
}

struct Job<'a> {
    kind: ModelKind,
    fold: usize,
    config: &'a ModelConfig,
}

/// Trains every model configuration on every fold. Folds, holdouts, and
/// scalers are computed once and shared across model types; the scaler is
/// fitted on the training part of each fold only.
pub fn run_experiment<T: Scalar>(
    trials: &TrialSet,
    models: &[ModelConfig],
    opts: &ExperimentOptions,
) -> Result<ExperimentReport<T>> {
    opts.train.validate()?;
    if models.is_empty() {
        return Err(Error::Config("no model configurations given".into()));
    }
    for m in models {
        m.validate()?;
        if m.n_channels != trials.n_channels() || m.n_times != trials.n_times() || m.n_classes != trials.n_classes() {
            return Err(Error::dim(
                "run_experiment",
                format!(
                    "{} expects [{}x{}] with {} classes, data is [{}x{}] with {} classes",
                    m.kind(),
                    m.n_channels,
                    m.n_times,
                    m.n_classes,
                    trials.n_channels(),
                    trials.n_times(),
                    trials.n_classes()
                ),
            ));
        }
    }
    let labels = trials.labels();
    let folds: Vec<Fold> = stratified_kfold(labels, opts.k_folds, opts.seed)?;
    let mut splits = Vec::with_capacity(folds.len());
    let mut scaled = Vec::with_capacity(folds.len());
    let mut baseline = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let (train_idx, val_idx) = holdout_split(&fold.train, labels, opts.train.val_fraction, opts.seed + f as u64)?;
        let split = FoldSplit {
            train: train_idx,
            val: val_idx,
            test: fold.test.clone(),
        };
        audit_split(&split)?;
        let scaler = standard_scale(&trials.subset(&split.train)?)?;
        let all = scaler.apply(trials)?;
        let sets = (
            Dataset::<T>::from_trials(&all.subset(&split.train)?),
            Dataset::<T>::from_trials(&all.subset(&split.val)?),
            Dataset::<T>::from_trials(&all.subset(&split.test)?),
        );
        let maj = majority(labels, &split.train, trials.n_classes());
        let acc = split.test.iter().filter(|&&i| labels[i] == maj).count() as f64 / split.test.len() as f64;
        baseline.push(BaselineRow {
            fold: f,
            majority_class: maj,
            accuracy: acc,
        });
        splits.push(split);
        scaled.push((scaler, sets));
    }

    let jobs: Vec<Job> = models
        .iter()
        .flat_map(|config| {
            (0..folds.len()).map(move |fold| Job {
                kind: config.kind(),
                fold,
                config,
            })
        })
        .collect();
    let run_one = |job: &Job| -> Result<RunResult<T>> {
        let (scaler, (train_set, val_set, test_set)) = &scaled[job.fold];
        let seed = init_seed(opts.seed, job.kind);
        let model = Model::new(job.config.clone(), seed)?;
        let cfg = TrainConfig {
            seed: seed.wrapping_add(job.fold as u64),
            ..opts.train.clone()
        };
        let (best, record) = train(model, train_set, val_set, &cfg)?;
        let preds = predict(&best, &test_set.inputs)?;
        let correct = preds.iter().zip(&test_set.labels).filter(|(p, y)| p == y).count();
        Ok(RunResult {
            kind: job.kind,
            fold: job.fold,
            init_seed: seed,
            test_accuracy: correct as f64 / test_set.len() as f64,
            record,
            scaler: scaler.clone(),
            model: best,
        })
    };

    let n_workers = opts.jobs.max(1).min(jobs.len());
    let mut runs: Vec<RunResult<T>> = if n_workers == 1 {
        jobs.iter().map(run_one).collect::<Result<_>>()?
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<RunResult<T>>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..n_workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= jobs.len() {
                        break;
                    }
                    let out = run_one(&jobs[i]);
                    slots.lock().expect("worker panicked")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("worker panicked")
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect::<Result<_>>()?
    };
    runs.sort_by_key(|r| (models.iter().position(|m| m.kind() == r.kind), r.fold));

    let report = ExperimentReport { splits, runs, baseline };
    if let Some(dir) = &opts.out_dir {
        persist(&report, dir)?;
    }
    Ok(report)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `folds.json`, `records/<id>.json`, and
/// `checkpoints/<id>/`.
pub fn persist<T: Scalar>(report: &ExperimentReport<T>, dir: &Path) -> Result<()> {
    let records = dir.join("records");
    let ckpts = dir.join("checkpoints");
    for d in [&records, &ckpts] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    write(&dir.join("results.csv"), &report.to_csv())?;
    write(
        &dir.join("folds.json"),
        &serde_json::to_string_pretty(&report.splits).expect("splits serialize"),
    )?;
    for r in &report.runs {
        let id = r.id();
        write(
            &records.join(format!("{id}.json")),
            &serde_json::to_string_pretty(&r.record).expect("record serializes"),
        )?;
        let meta = BTreeMap::from([
            ("model_id".to_string(), id.clone()),
            ("fold".to_string(), r.fold.to_string()),
            ("init_seed".to_string(), r.init_seed.to_string()),
            ("test_accuracy".to_string(), format!("{:.6}", r.test_accuracy)),
            ("scaler".to_string(), serde_json::to_string(&r.scaler).expect("scaler serializes")),
        ]);
        save_checkpoint(&r.model, &ckpts.join(&id), &meta)?;
    }
    Ok(())
}
