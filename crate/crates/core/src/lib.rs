//! Separate (1D temporal + 1D spatial) versus fused (2D spatiotemporal)
//! convolutional encoders for EEG classification.
//!
//! The crate covers the whole experimental loop: a small reverse-mode
//! autodiff engine ([`tensor`]), the four model variants and exact weight
//! fusion ([`models`]), trial storage, preprocessing and synthetic data
//! ([`signal`]), ADAM training with early stopping and timing benchmarks
//! ([`training`]), and representation analyses ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod models;
pub mod signal;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{finite_diff_check, DType, NdArray, Scalar, Tape, Var};
pub use models::{build_model, Model, ModelConfig, ModelKind};
pub use signal::TrialSet;
pub use training::TrainConfig;
