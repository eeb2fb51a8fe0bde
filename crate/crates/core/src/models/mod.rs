//! The four architectures ({dense CNN, conformer} x {separate 1D, fused 2D}),
//! exact weight fusion, cost model, and checkpoints.

mod checkpoint;
mod config;
mod fusion;
mod model;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, CheckpointManifest, TensorEntry, TensorKind, CHECKPOINT_FORMAT,
    MANIFEST_FILE, TENSORS_FILE,
};
pub use config::{count_macs, encoder_param_count, ConvMode, HeadKind, MacCounts, ModelConfig, ModelKind};
pub use fusion::fuse_1d_to_2d;
pub use model::{sinusoidal_encoding, Mode, Model, Pass, Recorded, BN_MOMENTUM, FFN_EXPANSION, HEAD_EXPANSION};

/// Builds a freshly initialized model.
pub fn build_model<T: crate::tensor::Scalar>(config: ModelConfig, seed: u64) -> crate::Result<Model<T>> {
    Model::new(config, seed)
}
