//! The JSON run configuration and its resolution against command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stconv_core::signal::{bandpass, generate_synthetic, import_csv, load_trialset, SyntheticConfig, PASSBAND};
use stconv_core::{DType, Error, ModelConfig, ModelKind, Result, TrainConfig, TrialSet};

/// Where the trials come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A TrialSet directory.
    Path(PathBuf),
    /// `file,label` index of per-trial CSV files.
    Csv {
        index: PathBuf,
        sfreq: f64,
        #[serde(default)]
        class_names: Option<Vec<String>>,
    },
    Synthetic(SyntheticConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<TrialSet> {
        match self {
            DataSource::Path(p) => load_trialset(p),
            DataSource::Csv {
                index,
                sfreq,
                class_names,
            } => import_csv(index, *sfreq, class_names.clone()),
            DataSource::Synthetic(cfg) => generate_synthetic(cfg),
        }
    }

    /// Files read when loading, for the run manifest.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            DataSource::Path(p) => vec![p.join("manifest.json"), p.join("data.bin")],
            DataSource::Csv { index, .. } => vec![index.clone()],
            DataSource::Synthetic(_) => Vec::new(),
        }
    }
}

/// Architecture hyperparameters; anything left out keeps the library default.
/// Shape fields come from the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub n_kernels: Option<usize>,
    pub kernel_len: Option<usize>,
    pub pool_size: Option<usize>,
    pub pool_stride: Option<usize>,
    pub dropout_p: Option<f64>,
    pub attn_heads: Option<usize>,
    pub attn_depth: Option<usize>,
    pub embed_dim: Option<usize>,
    pub positional_encoding: Option<bool>,
}

impl ModelOverrides {
    pub fn build(&self, kind: ModelKind, n_channels: usize, n_times: usize, n_classes: usize) -> ModelConfig {
        let mut c = ModelConfig::new(kind, n_channels, n_times, n_classes);
        if let Some(v) = self.n_kernels {
            c.n_kernels = v;
        }
        if let Some(v) = self.kernel_len {
            c.kernel_len = v;
        }
        if let Some(v) = self.pool_size {
            c.pool_size = v;
        }
        if self.pool_stride.is_some() {
            c.pool_stride = self.pool_stride;
        }
        if let Some(v) = self.dropout_p {
            c.dropout_p = v;
        }
        if let Some(v) = self.attn_heads {
            c.attn_heads = v;
        }
        if let Some(v) = self.attn_depth {
            c.attn_depth = v;
        }
        if self.embed_dim.is_some() {
            c.embed_dim = self.embed_dim;
        }
        if let Some(v) = self.positional_encoding {
            c.positional_encoding = v;
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl From<Precision> for DType {
    fn from(p: Precision) -> DType {
        match p {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

fn d_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}
fn d_folds() -> usize {
    5
}
fn d_jobs() -> usize {
    1
}
fn d_bandpass() -> Option<[f64; 2]> {
    Some([PASSBAND.0, PASSBAND.1])
}
fn d_precision() -> Precision {
    Precision::F32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default = "d_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default = "d_jobs")]
    pub jobs: usize,
    /// Zero-phase bandpass applied before scaling; `null` disables it.
    #[serde(default = "d_bandpass")]
    pub bandpass: Option<[f64; 2]>,
    #[serde(default = "d_precision")]
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_file)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("`models` is empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("`folds` must be at least 2, got {}", self.folds)));
        }
        if self.jobs == 0 {
            return Err(Error::Config("`jobs` must be at least 1".into()));
        }
        if let Some([lo, hi]) = self.bandpass {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!("bandpass edges must satisfy 0 < low < high, got [{lo}, {hi}]")));
            }
        }
        if self.data.is_none() {
            return Err(Error::Config("no data source (use --data or set `data`)".into()));
        }
        Ok(())
    }

    pub fn model_configs(&self, trials: &TrialSet) -> Result<Vec<ModelConfig>> {
        self.models
            .iter()
            .map(|&k| {
                let c = self.model.build(k, trials.n_channels(), trials.n_times(), trials.n_classes());
                c.validate()?;
                Ok(c)
            })
            .collect()
    }

    /// Loads the data and applies the configured bandpass.
    pub fn load_trials(&self) -> Result<TrialSet> {
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("no data source".into()))?
            .load()?;
        preprocess(&data, self.bandpass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

pub fn preprocess(trials: &TrialSet, band: Option<[f64; 2]>) -> Result<TrialSet> {
    match band {
        Some([lo, hi]) => bandpass(trials, lo, hi),
        None => Ok(trials.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_complete() {
        let c = RunConfig::default();
        assert_eq!(c.folds, 5);
        assert_eq!(c.models.len(), 4);
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.bandpass, Some([8.0, 32.0]));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"seeed": 1}"#,
            r#"{"model": {"kernels": 3}}"#,
            r#"{"train": {"learning_rate": 0.1}}"#,
            r#"{"data": {"synthetic": {"n_trials": 4, "n_channels": 3, "n_times": 100, "n_classes": 2, "effect_strength": 1, "seed": 0, "extra": 1}}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = RunConfig::default();
        c.data = Some(DataSource::Path("x".into()));
        c.model.n_kernels = Some(8);
        c.models = vec![ModelKind::Cnn1d];
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let m = back.model.build(ModelKind::Cnn1d, 3, 500, 2);
        assert_eq!(m.n_kernels, 8);
        assert_eq!(m.kernel_len, 25);
    }
}
