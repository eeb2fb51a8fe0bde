use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::optim::{AdamState, TrainConfig};
use super::trainer::{train_epoch, Dataset};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};
use crate::tensor::{NdArray, Scalar};

pub const MIN_WARMUP: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub n_trials: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            n_trials: 128,
            batch_size: 128,
            n_epochs: 20,
            warmup: MIN_WARMUP,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: String,
    pub n_channels: usize,
    pub n_times: usize,
    pub n_trials: usize,
    pub batch_size: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Timed epochs, in order, seconds.
    pub samples: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times full training epochs (forward, backward, optimizer step) on random
/// data held in memory. Warm-up epochs are run but not reported.
pub fn benchmark_epoch<T: Scalar>(config: &ModelConfig, opts: &BenchOptions) -> Result<BenchResult> {
    if opts.n_epochs == 0 || opts.n_trials == 0 || opts.batch_size == 0 {
        return Err(Error::Parameter("benchmark needs positive epochs, trials, and batch size".into()));
    }
    if opts.warmup < MIN_WARMUP {
        return Err(Error::Parameter(format!("at least {MIN_WARMUP} warm-up epochs are required")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (c, t) = (config.n_channels, config.n_times);
    let inputs = NdArray::from_fn(&[opts.n_trials, 1, c, t], |_| T::c(rng.sample::<f64, _>(StandardNormal)));
    let labels = (0..opts.n_trials).map(|i| i % config.n_classes).collect();
    let data = Dataset { inputs, labels };
    let mut model: Model<T> = Model::new(config.clone(), opts.seed)?;
    let cfg = TrainConfig {
        batch_size: opts.batch_size,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new();
    let mut shuffle = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dropout = ChaCha8Rng::seed_from_u64(opts.seed ^ 1);
    let mut samples = Vec::with_capacity(opts.n_epochs);
    for i in 0..opts.warmup + opts.n_epochs {
        let t0 = Instant::now();
        train_epoch(&mut model, &data, &cfg, &mut adam, &mut shuffle, &mut dropout)?;
        if i >= opts.warmup {
            samples.push(t0.elapsed().as_secs_f64());
        }
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    Ok(BenchResult {
        model: config.kind().to_string(),
        n_channels: c,
        n_times: t,
        n_trials: opts.n_trials,
        batch_size: opts.batch_size,
        median,
        q1,
        q3,
        iqr: q3 - q1,
        samples,
    })
}
