use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{NdArray, Scalar};

fn d_lr() -> f64 {
    1e-4
}
fn d_batch() -> usize {
    128
}
fn d_wd() -> f64 {
    1e-4
}
fn d_patience() -> usize {
    100
}
fn d_max_epochs() -> usize {
    3000
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}
fn d_val_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    /// Coupled L2 coefficient, added to the gradient before the moment update.
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_patience")]
    pub patience_epochs: usize,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_eps")]
    pub adam_eps: f64,
    /// Fraction of each training fold held out for early stopping.
    #[serde(default = "d_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: d_lr(),
            batch_size: d_batch(),
            weight_decay: d_wd(),
            patience_epochs: d_patience(),
            max_epochs: d_max_epochs(),
            adam_beta1: d_beta1(),
            adam_beta2: d_beta2(),
            adam_eps: d_eps(),
            val_fraction: d_val_fraction(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("batch_size", self.batch_size as f64),
            ("patience_epochs", self.patience_epochs as f64),
            ("max_epochs", self.max_epochs as f64),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.patience_epochs > self.max_epochs {
            return Err(Error::Config(format!(
                "patience_epochs {} exceeds max_epochs {}",
                self.patience_epochs, self.max_epochs
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must be in (0, 1), got {}", self.val_fraction)));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter, plus the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        Self {
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One bias-corrected ADAM update. Parameters without a gradient entry are
/// left untouched; a non-finite gradient aborts before anything changes.
pub fn adam_step<T: Scalar>(
    params: &mut BTreeMap<String, NdArray<T>>,
    grads: &BTreeMap<String, Vec<T>>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter {name}")))?;
        if p.len() != g.len() {
            return Err(Error::dim(
                "adam_step",
                format!("{name}: gradient length {} vs parameter length {}", g.len(), p.len()),
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: format!("gradient of {name}"),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::c(cfg.adam_beta1), T::c(cfg.adam_beta2));
    let (one, lr, eps, wd) = (T::one(), T::c(cfg.lr), T::c(cfg.adam_eps), T::c(cfg.weight_decay));
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = gi + wd * *w;
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

/// Best-so-far tracking on validation loss. Epochs are 1-based; an epoch
/// improves only on a strict decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    max_epochs: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        Self {
            patience,
            max_epochs,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Returns whether `val_loss` is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn check(&self, epoch: usize) -> Option<StopReason> {
        if epoch - self.best_epoch >= self.patience {
            Some(StopReason::Patience)
        } else if epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}
