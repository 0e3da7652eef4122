//! Rigid-body poses and rotation helpers.

use crate::error::{Error, Result};

/// Homogeneous 4x4 rigid transform, row-major.
///
/// Interpreted as camera-to-world: the columns of the rotation block are the
/// camera axes expressed in world coordinates and the translation column is
/// the camera position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    m: [f64; 16],
}

const ORTHO_TOL: f64 = 1e-9;

impl PoseSE3 {
    /// Validates and wraps a row-major 4x4 matrix.
    ///
    /// The bottom row must be exactly `[0, 0, 0, 1]`, the rotation block
    /// orthonormal (each entry of R'R within 1e-9 of the identity), and its
    /// determinant within 1e-9 of +1.
    pub fn new(m: [f64; 16]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("pose entries must be finite".to_string()));
        }
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(Error::InvalidPose(format!(
                "bottom row must be [0, 0, 0, 1], got [{}, {}, {}, {}]",
                m[12], m[13], m[14], m[15]
            )));
        }
        let r = rotation_block(&m);
        let rtr = mat3_mul(&mat3_transpose(&r), &r);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = rtr[i * 3 + j];
                if (got - want).abs() > ORTHO_TOL {
                    return Err(Error::InvalidPose(format!(
                        "rotation block is not orthonormal: (R'R)[{i}][{j}] = {got}"
                    )));
                }
            }
        }
        let det = mat3_det(&r);
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { m })
    }

    fn new_unchecked(m: [f64; 16]) -> Self {
        debug_assert!(Self::new(m).is_ok());
        Self { m }
    }

    /// The identity pose.
    pub fn identity() -> Self {
        let mut m = [0.0; 16];
        m[0] = 1.0;
        m[5] = 1.0;
        m[10] = 1.0;
        m[15] = 1.0;
        Self { m }
    }

    /// Pose from a 3x3 rotation (row-major) and a translation vector.
    pub fn from_rotation_translation(r: [f64; 9], t: [f64; 3]) -> Result<Self> {
        let mut m = [0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                m[i * 4 + j] = r[i * 3 + j];
            }
            m[i * 4 + 3] = t[i];
        }
        m[15] = 1.0;
        Self::new(m)
    }

    /// Pure translation.
    pub fn from_translation(t: [f64; 3]) -> Self {
        let mut p = Self::identity();
        p.m[3] = t[0];
        p.m[7] = t[1];
        p.m[11] = t[2];
        p
    }

    /// Row-major 4x4 entries.
    pub fn matrix(&self) -> &[f64; 16] {
        &self.m
    }

    /// Entry at (row, col).
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.m[row * 4 + col]
    }

    /// The 3x3 rotation block, row-major.
    pub fn rotation(&self) -> [f64; 9] {
        rotation_block(&self.m)
    }

    /// The translation column.
    pub fn translation(&self) -> [f64; 3] {
        [self.m[3], self.m[7], self.m[11]]
    }

    /// Matrix product `self * other` (apply `other` first).
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let a = &self.m;
        let b = &other.m;
        let mut m = [0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a[i * 4 + k] * b[k * 4 + j];
                }
                m[i * 4 + j] = acc;
            }
        }
        // Keep the bottom row bit-exact regardless of rounding.
        m[12] = 0.0;
        m[13] = 0.0;
        m[14] = 0.0;
        m[15] = 1.0;
        PoseSE3::new_unchecked(m)
    }

    /// Closed-form rigid inverse `[R', -R't; 0 1]`.
    pub fn inverse(&self) -> PoseSE3 {
        let r = self.rotation();
        let t = self.translation();
        let rt = mat3_transpose(&r);
        let nt = mat3_apply(&rt, &t);
        let mut m = [0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                m[i * 4 + j] = rt[i * 3 + j];
            }
            m[i * 4 + 3] = -nt[i];
        }
        m[15] = 1.0;
        PoseSE3::new_unchecked(m)
    }

    /// Transforms a 3-D point.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
            m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
            m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11],
        ]
    }
}

/// Motion of the second camera frame relative to the first:
/// `relative_pose(a, b) = a⁻¹ · b`.
pub fn relative_pose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.inverse().compose(b)
}

fn rotation_block(m: &[f64; 16]) -> [f64; 9] {
    [m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]]
}

pub(crate) fn mat3_transpose(r: &[f64; 9]) -> [f64; 9] {
    [r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]]
}

pub(crate) fn mat3_mul(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] =
                a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
        }
    }
    out
}

pub(crate) fn mat3_apply(r: &[f64; 9], v: &[f64; 3]) -> [f64; 3] {
    [
        r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
        r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
        r[6] * v[0] + r[7] * v[1] + r[8] * v[2],
    ]
}

fn mat3_det(r: &[f64; 9]) -> f64 {
    r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
        + r[2] * (r[3] * r[7] - r[4] * r[6])
}

/// Rotation matrix of an axis-angle vector (angle = vector norm, axis =
/// direction), via the exponential map.
pub fn so3_exp(w: [f64; 3]) -> [f64; 9] {
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    // sin(t)/t and (1-cos(t))/t^2 go through their series near zero.
    let (a, b) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let (wx, wy, wz) = (w[0], w[1], w[2]);
    [
        1.0 - b * (wy * wy + wz * wz),
        -a * wz + b * wx * wy,
        a * wy + b * wx * wz,
        a * wz + b * wx * wy,
        1.0 - b * (wx * wx + wz * wz),
        -a * wx + b * wy * wz,
        -a * wy + b * wx * wz,
        a * wx + b * wy * wz,
        1.0 - b * (wx * wx + wy * wy),
    ]
}

/// Axis-angle vector of a rotation matrix (inverse of [`so3_exp`] for
/// angles in [0, pi]).
pub fn so3_log(r: &[f64; 9]) -> [f64; 3] {
    let trace = r[0] + r[4] + r[8];
    let cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let skew = [r[7] - r[5], r[2] - r[6], r[3] - r[1]];
    if theta < 1e-7 {
        return [skew[0] / 2.0, skew[1] / 2.0, skew[2] / 2.0];
    }
    if theta < std::f64::consts::PI - 1e-6 {
        let s = theta / (2.0 * theta.sin());
        return [skew[0] * s, skew[1] * s, skew[2] * s];
    }
    // Near pi the skew part vanishes; recover the axis from the diagonal
    // and take signs from the symmetric part.
    let one_minus_cos = 1.0 - cos;
    let mut axis = [
        ((r[0] - cos) / one_minus_cos).max(0.0).sqrt(),
        ((r[4] - cos) / one_minus_cos).max(0.0).sqrt(),
        ((r[8] - cos) / one_minus_cos).max(0.0).sqrt(),
    ];
    // Pick the largest component as reference and sign the others by the
    // symmetric off-diagonal products.
    let k = if axis[0] >= axis[1] && axis[0] >= axis[2] {
        0
    } else if axis[1] >= axis[2] {
        1
    } else {
        2
    };
    let sym = |i: usize, j: usize| (r[i * 3 + j] + r[j * 3 + i]) / 2.0;
    for i in 0..3 {
        if i != k && sym(k, i) < 0.0 {
            axis[i] = -axis[i];
        }
    }
    if skew[k] < 0.0 {
        for a in &mut axis {
            *a = -*a;
        }
    }
    [axis[0] * theta, axis[1] * theta, axis[2] * theta]
}

/// Rotation about the camera z axis by `angle` radians.
pub fn rotation_z(angle: f64) -> [f64; 9] {
    let (s, c) = angle.sin_cos();
    [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]
}
