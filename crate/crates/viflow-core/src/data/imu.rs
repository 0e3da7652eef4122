//! Inertial measurement synthesis and window packing.
//!
//! Gyroscope readings come from central finite differences of the rotation
//! logs, accelerometer readings from second differences of the positions
//! plus gravity, both expressed in the body frame. Windows gather the
//! samples around an image pair into a fixed-row layout whose tail is zeroed
//! when the pair's lookahead does not fill the capacity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::so3_log;

/// Gravitational acceleration along world +y (the camera-down axis).
pub const GRAVITY_MPS2: f64 = 9.81;

/// One inertial sample: body-frame angular velocity and specific force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: [f64; 3],
    pub accel: [f64; 3],
}

/// Additive sensor corruption: white noise plus a constant per-stream bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoiseConfig {
    pub gyro_std: f64,
    pub accel_std: f64,
    pub gyro_bias_std: f64,
    pub accel_bias_std: f64,
    pub seed: u64,
}

impl Default for ImuNoiseConfig {
    fn default() -> Self {
        Self {
            gyro_std: 2e-3,
            accel_std: 2e-2,
            gyro_bias_std: 1e-3,
            accel_bias_std: 1e-2,
            seed: 0,
        }
    }
}

impl ImuNoiseConfig {
    /// Noise-free synthesis, for tests that compare against analytic values.
    pub fn clean() -> Self {
        Self {
            gyro_std: 0.0,
            accel_std: 0.0,
            gyro_bias_std: 0.0,
            accel_bias_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scales = [
            self.gyro_std,
            self.accel_std,
            self.gyro_bias_std,
            self.accel_bias_std,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(
                "noise scales must be finite and non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Synthesizes the inertial stream of a trajectory at `imu_rate_hz`.
///
/// The rate must equal the trajectory's pose rate so every reading sits on a
/// pose sample. The stream spans the interior samples only (the first and
/// last pose carry no central difference), so callers should keep a margin
/// of a few samples at both ends of the trajectory.
pub fn synthesize_imu(
    trajectory: &Trajectory,
    imu_rate_hz: f64,
    noise: &ImuNoiseConfig,
) -> Result<Vec<ImuSample>> {
    noise.validate()?;
    if imu_rate_hz < trajectory.image_rate_hz() {
        return Err(Error::Contract(format!(
            "imu rate {imu_rate_hz} is below the image rate {}",
            trajectory.image_rate_hz()
        )));
    }
    if (imu_rate_hz - trajectory.pose_rate_hz()).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "imu rate {imu_rate_hz} must match the pose sampling rate {}",
            trajectory.pose_rate_hz()
        )));
    }
    if trajectory.len() < 3 {
        return Err(Error::Contract(format!(
            "central differences need at least 3 poses, got {}",
            trajectory.len()
        )));
    }
    let dt = trajectory.pose_dt();
    let gravity = [0.0, GRAVITY_MPS2, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gyro_noise = Normal::new(0.0, noise.gyro_std).expect("validated std");
    let accel_noise = Normal::new(0.0, noise.accel_std).expect("validated std");
    let gyro_bias_dist = Normal::new(0.0, noise.gyro_bias_std).expect("validated std");
    let accel_bias_dist = Normal::new(0.0, noise.accel_bias_std).expect("validated std");
    let gyro_bias: [f64; 3] = [0; 3].map(|_| gyro_bias_dist.sample(&mut rng));
    let accel_bias: [f64; 3] = [0; 3].map(|_| accel_bias_dist.sample(&mut rng));

    let mut samples = Vec::with_capacity(trajectory.len() - 2);
    for k in 1..trajectory.len() - 1 {
        let prev = trajectory.pose(k - 1);
        let here = trajectory.pose(k);
        let next = trajectory.pose(k + 1);

        let twist = mat3_transpose_mul(&prev.rotation(), &next.rotation());
        let log = so3_log(&twist);
        let mut gyro = log.map(|w| w / (2.0 * dt));

        let (p0, p1, p2) = (prev.translation(), here.translation(), next.translation());
        let accel_world =
            [0, 1, 2].map(|i| (p2[i] - 2.0 * p1[i] + p0[i]) / (dt * dt));
        let body = transpose_rotate(&here.rotation(), [
            accel_world[0] - gravity[0],
            accel_world[1] - gravity[1],
            accel_world[2] - gravity[2],
        ]);
        let mut accel = body;

        for i in 0..3 {
            gyro[i] += gyro_bias[i] + gyro_noise.sample(&mut rng);
            accel[i] += accel_bias[i] + accel_noise.sample(&mut rng);
        }
        samples.push(ImuSample {
            t: trajectory.time(k),
            gyro,
            accel,
        });
    }
    Ok(samples)
}

/// Window shapes for the packed inertial input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum WindowLayout {
    /// 50 rows at 200 Hz around 50 ms frame intervals: rows 0 to 9 cover the
    /// 50 ms before the first capture, each further decade one interval
    /// after it, and rows beyond the pair's lookahead stay zero.
    Euroc50,
    /// 20 rows at 100 Hz: the 100 ms before and after a single-interval
    /// pair, fully populated.
    Kitti20,
    /// Free-form variant of the same scheme.
    Synth {
        rows: usize,
        imu_rate_hz: f64,
        frame_interval_s: f64,
    },
}

impl WindowLayout {
    pub fn rows(&self) -> usize {
        match self {
            WindowLayout::Euroc50 => 50,
            WindowLayout::Kitti20 => 20,
            WindowLayout::Synth { rows, .. } => *rows,
        }
    }

    fn imu_rate_hz(&self) -> f64 {
        match self {
            WindowLayout::Euroc50 => 200.0,
            WindowLayout::Kitti20 => 100.0,
            WindowLayout::Synth { imu_rate_hz, .. } => *imu_rate_hz,
        }
    }

    fn frame_interval_s(&self) -> f64 {
        match self {
            WindowLayout::Euroc50 => 0.05,
            WindowLayout::Kitti20 => 0.1,
            WindowLayout::Synth {
                frame_interval_s, ..
            } => *frame_interval_s,
        }
    }

    fn max_lookahead(&self) -> usize {
        match self {
            WindowLayout::Euroc50 => 4,
            WindowLayout::Kitti20 => 1,
            WindowLayout::Synth { .. } => usize::MAX,
        }
    }

    fn validate(&self) -> Result<()> {
        if let WindowLayout::Synth {
            rows,
            imu_rate_hz,
            frame_interval_s,
        } = self
        {
            if *rows == 0 {
                return Err(Error::Config("window needs at least one row".to_string()));
            }
            if !(*imu_rate_hz > 0.0 && *frame_interval_s > 0.0) {
                return Err(Error::Config(
                    "window rate and interval must be positive".to_string(),
                ));
            }
            let per_span = imu_rate_hz * frame_interval_s;
            if (per_span - per_span.round()).abs() > 1e-9 || per_span < 1.0 {
                return Err(Error::Config(format!(
                    "frame interval must hold a whole number of samples, got {per_span}"
                )));
            }
        }
        Ok(())
    }
}

/// Packs the inertial samples around an image pair into `layout.rows()` rows
/// of (gx, gy, gz, ax, ay, az).
///
/// The window starts one frame interval before the first capture at `t0` and
/// runs to the second capture at `t1`, so it holds `(1 + lookahead)` spans
/// of samples; remaining rows are zero. Missing samples anywhere in that
/// range are a contract error.
pub fn pack_imu_window(
    samples: &[ImuSample],
    t0: f64,
    t1: f64,
    layout: WindowLayout,
) -> Result<Vec<[f64; 6]>> {
    layout.validate()?;
    let interval = layout.frame_interval_s();
    let lookahead_exact = (t1 - t0) / interval;
    let lookahead = lookahead_exact.round();
    if (lookahead_exact - lookahead).abs() > 1e-6 || lookahead < 1.0 {
        return Err(Error::Contract(format!(
            "capture times must be a whole positive number of frame intervals apart, \
             got {lookahead_exact} intervals"
        )));
    }
    let lookahead = lookahead as usize;
    if lookahead > layout.max_lookahead() {
        return Err(Error::Contract(format!(
            "lookahead {lookahead} exceeds the layout's maximum {}",
            layout.max_lookahead()
        )));
    }
    let per_span = (layout.imu_rate_hz() * interval).round() as usize;
    let needed = per_span * (1 + lookahead);
    let capacity = layout.rows();
    if needed > capacity {
        return Err(Error::Contract(format!(
            "lookahead {lookahead} needs {needed} rows but the layout holds {capacity}"
        )));
    }
    let dt = 1.0 / layout.imu_rate_hz();
    let window_start = t0 - interval;
    // Boundaries are shifted half a sample period so that samples sitting
    // exactly on a frame time never flip sides under rounding.
    let first = samples
        .iter()
        .position(|s| s.t >= window_start - 0.5 * dt)
        .unwrap_or(samples.len());
    let selected = &samples[first..];
    let in_range = selected
        .iter()
        .take_while(|s| s.t < t0 + lookahead as f64 * interval - 0.5 * dt)
        .count();
    if in_range != needed {
        return Err(Error::Contract(format!(
            "window [{window_start}, {}) needs {needed} samples, found {in_range}",
            t0 + lookahead as f64 * interval
        )));
    }
    let mut rows = vec![[0.0f64; 6]; capacity];
    for (row, sample) in rows.iter_mut().zip(&selected[..needed]) {
        row[0] = sample.gyro[0];
        row[1] = sample.gyro[1];
        row[2] = sample.gyro[2];
        row[3] = sample.accel[0];
        row[4] = sample.accel[1];
        row[5] = sample.accel[2];
    }
    Ok(rows)
}

fn transpose_rotate(r: &[f64; 9], v: [f64; 3]) -> [f64; 3] {
    [
        r[0] * v[0] + r[3] * v[1] + r[6] * v[2],
        r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
        r[2] * v[0] + r[5] * v[1] + r[8] * v[2],
    ]
}

fn mat3_transpose_mul(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = a[i] * b[j] + a[3 + i] * b[3 + j] + a[6 + i] * b[6 + j];
        }
    }
    out
}
