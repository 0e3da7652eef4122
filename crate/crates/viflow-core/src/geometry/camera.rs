//! Pinhole camera model and geometric flow from depth and poses.

use crate::error::{Error, Result};
use crate::geometry::grid::FlowField;
use crate::geometry::image::DepthMap;
use crate::geometry::pose::PoseSE3;

/// Pinhole intrinsics. Pixel x runs along columns, pixel y along rows, and
/// the camera looks down +z with y pointing down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Fails unless the focal lengths are finite and positive and the
    /// principal point is finite.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be finite and positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidParameter(
                "principal point must be finite".to_string(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Back-projects pixel (x, y) at `depth` into the camera frame.
    pub fn back_project(&self, x: f64, y: f64, depth: f64) -> [f64; 3] {
        [
            (x - self.cx) / self.fx * depth,
            (y - self.cy) / self.fy * depth,
            depth,
        ]
    }

    /// Projects a camera-frame point onto the image plane.
    /// Returns `None` when the point is at or behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }
}

/// Flow field induced by camera motion over a static scene.
///
/// Each valid depth pixel of the first frame is back-projected, carried from
/// the first camera frame into the second (poses are camera-to-world, so the
/// point transform is `pose_t1⁻¹ · pose_t0`), and re-projected. A pixel
/// becomes invalid when its depth was invalid, the moved point ends up at or
/// behind the second camera, or its re-projection lands outside the frame.
pub fn ground_truth_flow(
    intrinsics: &CameraIntrinsics,
    depth_t0: &DepthMap,
    pose_t0: &PoseSE3,
    pose_t1: &PoseSE3,
) -> FlowField {
    let (h, w) = (depth_t0.height(), depth_t0.width());
    if pose_t0 == pose_t1 {
        // No motion at all: the flow is identically zero, with validity
        // taken straight from the depth mask. Skipping the projection
        // round trip keeps the zeros exact.
        let vectors = vec![0.0; h * w * 2];
        return FlowField::new(h, w, vectors, depth_t0.valid().to_vec())
            .expect("zero flow is finite");
    }
    let cam0_to_cam1 = pose_t1.inverse().compose(pose_t0);
    let mut vectors = vec![0.0; h * w * 2];
    let mut valid = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let Some(depth) = depth_t0.at(r, c) else {
                continue;
            };
            let p0 = intrinsics.back_project(c as f64, r as f64, depth);
            let p1 = cam0_to_cam1.transform_point(p0);
            let Some((u1, v1)) = intrinsics.project(p1) else {
                continue;
            };
            if u1 < 0.0 || u1 > (w - 1) as f64 || v1 < 0.0 || v1 > (h - 1) as f64 {
                continue;
            }
            let i = r * w + c;
            vectors[2 * i] = u1 - c as f64;
            vectors[2 * i + 1] = v1 - r as f64;
            valid[i] = true;
        }
    }
    FlowField::new(h, w, vectors, valid).expect("projected flow is finite")
}
