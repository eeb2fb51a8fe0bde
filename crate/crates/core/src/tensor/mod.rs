//! Dense arrays, differentiable operations, and the reverse-mode tape.

mod array;
mod conv;
mod gradcheck;
mod scalar;
mod tape;

pub use array::NdArray;
pub use gradcheck::{finite_diff_check, FD_EPS, FD_FLOOR};
pub use scalar::{gemm, DType, Scalar};
pub use tape::{AttentionParams, BatchNormMode, BatchStats, Tape, Var, NORM_EPS};
