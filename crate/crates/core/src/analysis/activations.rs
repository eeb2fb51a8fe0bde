use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::models::Model;
use crate::signal::{load_trialset, save_trialset, TrialSet};
use crate::tensor::{NdArray, Scalar};

/// Pooled encoder activations of one model over a common trial set.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    pub model_id: String,
    /// `[N, K, T_pooled]`.
    activations: NdArray<f64>,
}

impl ActivationSet {
    pub fn new(model_id: impl Into<String>, activations: NdArray<f64>) -> Result<Self> {
        if activations.ndim() != 3 {
            return Err(Error::dim(
                "ActivationSet::new",
                format!("activations must be [N,K,T], got {:?}", activations.shape()),
            ));
        }
        if !activations.all_finite() {
            return Err(Error::Numeric {
                layer: "pool".into(),
            });
        }
        Ok(Self {
            model_id: model_id.into(),
            activations,
        })
    }

    /// Runs `trials` through the model's encoder in eval mode.
    pub fn extract<T: Scalar>(model_id: impl Into<String>, model: &Model<T>, trials: &NdArray<T>) -> Result<Self> {
        Self::new(model_id, model.extract_encoder_activations(trials)?.cast())
    }

    pub fn activations(&self) -> &NdArray<f64> {
        &self.activations
    }

    pub fn n_samples(&self) -> usize {
        self.activations.shape()[0]
    }

    pub fn n_kernels(&self) -> usize {
        self.activations.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.activations.len() / self.n_samples()
    }

    /// Flattened view, one `K * T_pooled` row per sample.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.activations.data().chunks_exact(self.width())
    }

    /// Per-sample temporal mean of each kernel: `[N][K]`.
    pub fn kernel_means(&self) -> Vec<Vec<f64>> {
        let tp = self.activations.shape()[2];
        self.rows()
            .map(|row| row.chunks_exact(tp).map(|k| k.iter().sum::<f64>() / tp as f64).collect())
            .collect()
    }
}

/// Stores activations in the trial-set container: kernels as channels,
/// pooled steps as time.
pub fn save_activations(set: &ActivationSet, dir: &Path) -> Result<()> {
    let shape = set.activations.shape();
    let data = NdArray::new(shape, set.activations.data().iter().map(|&v| v as f32).collect())?;
    let names = (0..shape[1]).map(|k| format!("kernel{k}")).collect();
    let mut ts = TrialSet::new(data, vec![0; shape[0]], 1.0, names, vec!["none".into()])?;
    ts.metadata.insert("model_id".into(), json!(set.model_id));
    save_trialset(&ts, dir)
}

pub fn load_activations(dir: &Path) -> Result<ActivationSet> {
    let ts = load_trialset(dir)?;
    let id = ts
        .metadata
        .get("model_id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::format(dir, "activation dump has no model_id"))?
        .to_string();
    ActivationSet::new(id, ts.data().cast())
}
