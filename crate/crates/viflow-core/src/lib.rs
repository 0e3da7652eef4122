//! Visual-inertial optical flow estimation.
//!
//! This crate implements a small, fully testable visual-inertial flow
//! pipeline: camera geometry and ground-truth flow projection, a minimal
//! reverse-mode differentiation engine, a two-pathway multi-hypothesis
//! network trained with a winner-take-all reconstruction loss, a synthetic
//! visual-inertial data generator, and an endpoint-error / anomaly
//! evaluation harness. The `viflow` binary exposes the pipeline as CLI
//! subcommands.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod training;

pub use error::{Error, Result};
