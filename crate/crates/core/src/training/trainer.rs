use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, AdamState, EarlyStopping, StopReason, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{Mode, Model, Pass};
use crate::signal::TrialSet;
use crate::tensor::{NdArray, Scalar, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Training pass only.
    pub train_seconds: f64,
    /// Training pass plus validation and checkpointing.
    pub epoch_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_reason: StopReason,
    pub total_time: f64,
}

impl TrainRecord {
    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn mean_train_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.train_seconds).sum::<f64>() / self.epochs.len().max(1) as f64
    }

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// In-memory network inputs and labels.
pub struct Dataset<T> {
    pub inputs: NdArray<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_trials(set: &TrialSet) -> Self {
        Self {
            inputs: set.as_batch(),
            labels: set.labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean cross-entropy and accuracy of eval-mode predictions.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<(f64, f64)> {
    let logits = model.forward(&data.inputs)?;
    Ok(loss_and_accuracy(&logits, &data.labels))
}

pub fn predict<T: Scalar>(model: &Model<T>, inputs: &NdArray<T>) -> Result<Vec<usize>> {
    let logits = model.forward(inputs)?;
    let k = logits.shape()[1];
    Ok(logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

pub(crate) fn loss_and_accuracy<T: Scalar>(logits: &NdArray<T>, labels: &[usize]) -> (f64, f64) {
    let k = logits.shape()[1];
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &y) in logits.data().chunks(k).zip(labels) {
        let row: Vec<f64> = row.iter().map(|v| v.f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let argmax = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        correct += (argmax == y) as usize;
    }
    let n = labels.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Shuffles, then runs every mini-batch through forward, backward, and one
/// optimizer step. Returns the sample-weighted mean training loss.
pub(crate) fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    adam: &mut AdamState<T>,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    model.set_mode(Mode::Train);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(shuffle_rng);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let batch = data.inputs.select_rows(chunk)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let mut tape = Tape::new();
        let rec = model.record(&mut tape, batch, Pass::Train(dropout_rng))?;
        let loss = tape.softmax_cross_entropy(rec.logits, &labels)?;
        let loss_value = tape.value(loss).data()[0].f64();
        if !loss_value.is_finite() {
            return Err(Error::Numeric { layer: "loss".into() });
        }
        total += loss_value * chunk.len() as f64;
        tape.backward(loss)?;
        let mut grads = BTreeMap::new();
        for (name, var) in &rec.params {
            if let Some(g) = tape.take_grad(*var) {
                grads.insert(name.clone(), g);
            }
        }
        adam_step(model.params_mut(), &grads, adam, cfg)?;
        if let Some(stats) = &rec.bn_stats {
            model.update_running_stats(stats);
        }
    }
    model.set_mode(Mode::Eval);
    Ok(total / data.len() as f64)
}

/// Trains with early stopping on validation loss and returns the
/// best-validation checkpoint in eval mode.
pub fn train<T: Scalar>(
    model: Model<T>,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainRecord)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let mut model = model;
    let mut adam = AdamState::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut stopper = EarlyStopping::new(cfg.patience_epochs, cfg.max_epochs);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let stopped_reason = loop {
        let epoch = epochs.len() + 1;
        let t0 = Instant::now();
        let train_loss = train_epoch(&mut model, train_set, cfg, &mut adam, &mut shuffle_rng, &mut dropout_rng)?;
        let train_seconds = t0.elapsed().as_secs_f64();
        let (val_loss, val_accuracy) = evaluate(&model, val_set)?;
        if stopper.observe(epoch, val_loss) {
            best.clone_from(&model);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            train_seconds,
            epoch_seconds: t0.elapsed().as_secs_f64(),
        });
        if let Some(reason) = stopper.check(epoch) {
            break reason;
        }
    };
    best.set_mode(Mode::Eval);
    let record = TrainRecord {
        epochs,
        best_epoch: stopper.best_epoch().max(1),
        stopped_reason,
        total_time: start.elapsed().as_secs_f64(),
    };
    Ok((best, record))
}
