//! Image warping geometry: grids, bilinear sampling, poses, and projective
//! ground-truth flow.

mod camera;
mod grid;
mod image;
pub(crate) mod kernel;
mod pose;
mod sample;

pub use camera::{ground_truth_flow, CameraIntrinsics};
pub use grid::{
    affine_grid, compose_shifts, flow_to_grid, grid_to_flow, make_base_grid, AffineParams,
    FlowField, SampleGrid, ShiftField,
};
pub use image::{center_crop, DepthMap, Image};
pub use pose::{relative_pose, rotation_z, so3_exp, so3_log, PoseSE3};
pub use sample::bilinear_sample;
