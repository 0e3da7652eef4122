//! The warp network: configuration, motion inputs, and the two-pathway
//! architecture producing per-hypothesis sample grids.

mod config;
mod motion;
mod net;

pub use config::{ModelConfig, MotionMode, IMU_CHANNELS, SFFMS_CLASSES};
pub use motion::{one_hot_code, MotionInput};
pub use net::{Hypothesis, HypothesisSet, Model};

pub(crate) use net::image_tensor;
