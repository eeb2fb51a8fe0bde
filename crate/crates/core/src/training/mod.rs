//! ADAM with coupled L2 weight decay, early stopping, the cross-validated
//! experiment runner, and per-epoch timing.

mod bench;
mod experiment;
mod optim;
mod trainer;

pub use bench::{benchmark_epoch, quantile, BenchOptions, BenchResult, MIN_WARMUP};
pub use experiment::{
    audit_split, init_seed, model_id, persist, run_experiment, BaselineRow, ExperimentOptions, ExperimentReport,
    FoldSplit, RunResult,
};
pub use optim::{adam_step, AdamState, EarlyStopping, StopReason, TrainConfig};
pub use trainer::{evaluate, predict, train, Dataset, EpochRecord, TrainRecord};

#[cfg(test)]
mod tests;
