//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Provides exactly the operations the warp-prediction network needs:
//! fully connected layers, strided same-padded convolutions and their
//! transposes, ReLU, concat, reshape, affine sampling grids, bilinear
//! sampling, and a squared-error loss. Gradients flow through an
//! append-only tape; parameters live outside the tape in a [`ParamSet`]
//! tagged by update pathway, and [`Tape::backward`] can mask whole
//! pathways so only the winning hypothesis learns.

mod gradcheck;
mod ops;
mod param;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{
    grad_check, standard_suite, GradCheckReport, SuiteRow, DEFAULT_STEP, SAMPLING_TOLERANCE,
    SMOOTH_TOLERANCE,
};
pub use param::{GradTable, ParamId, ParamSet, Pathway};
pub use scalar::Scalar;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
