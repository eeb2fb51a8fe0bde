//! Shared fixtures for the encoder benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stconv_core::models::Pass;
use stconv_core::{Model, ModelConfig, ModelKind, NdArray, Result, Tape};

/// Batch size used by every benchmark.
pub const BATCH: usize = 32;

/// A freshly initialised model with the default encoder (K=40, m=25) and a
/// random batch and labels that fit it.
pub struct Fixture {
    pub model: Model<f32>,
    pub batch: NdArray<f32>,
    pub labels: Vec<usize>,
}

impl Fixture {
    pub fn new(kind: ModelKind, n_channels: usize, n_times: usize) -> Self {
        let config = ModelConfig {
            pool_size: 75,
            pool_stride: Some(15),
            ..ModelConfig::new(kind, n_channels, n_times, 4)
        };
        let model = Model::new(config, 0).expect("valid benchmark config");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = NdArray::from_fn(&[BATCH, 1, n_channels, n_times], |_| rng.gen_range(-1.0f32..1.0));
        let labels = (0..BATCH).map(|i| i % 4).collect();
        Self { model, batch, labels }
    }

    /// One forward and backward pass in training mode; returns the loss.
    pub fn train_step(&self, rng: &mut ChaCha8Rng) -> Result<f32> {
        let mut tape = Tape::new();
        let rec = self.model.record(&mut tape, self.batch.clone(), Pass::Train(rng))?;
        let loss = tape.softmax_cross_entropy(rec.logits, &self.labels)?;
        tape.backward(loss)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Encoder output only, in training mode, without backward.
    pub fn encode(&self, rng: &mut ChaCha8Rng) -> Result<usize> {
        let mut tape = Tape::new();
        let rec = self.model.record(&mut tape, self.batch.clone(), Pass::Train(rng))?;
        Ok(tape.value(rec.encoder).len())
    }
}
