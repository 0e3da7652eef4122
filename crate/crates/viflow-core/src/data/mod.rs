//! Synthetic visual-inertial dataset generation.
//!
//! The generator renders fronto-parallel planar scenes along a simulated
//! camera trajectory, synthesizes IMU streams from the same poses, and packs
//! everything into fixed-shape exemplars with exact ground-truth flow. Every
//! artifact is reproducible from a single seed, and rendered pairs are gated
//! by a warp-consistency check before they enter a dataset.

pub mod codebook;
pub mod dataset;
pub mod files;
pub mod imu;
pub mod scene;
pub mod trajectory;

pub use codebook::{kmeans_fit, pose_delta, sffms_encode, SffmsCodebook};
pub use dataset::{
    build_dataset, load_dataset, Dataset, DatasetConfig, Exemplar, PixelBox, Split,
    WARP_CONSISTENCY_LIMIT,
};
pub use files::{
    read_flow_vift, read_image_vift, read_vift, read_window_vift, write_flow_vift,
    write_image_vift, write_imu_csv, write_pgm, write_vift, write_window_vift, VIFT_MAGIC,
    VIFT_VERSION,
};
pub use imu::{
    pack_imu_window, synthesize_imu, ImuNoiseConfig, ImuSample, WindowLayout, GRAVITY_MPS2,
};
pub use scene::{
    render_frame, warp_consistency_error, MovingPatch, PlanarLayer, Scene, SceneConfig,
};
pub use trajectory::{generate_trajectory, MotionRegime, Trajectory, TrajectoryConfig};
