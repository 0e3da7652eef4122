//! Camera trajectory synthesis.
//!
//! Trajectories are sampled at the pose rate (the IMU rate) by integrating a
//! velocity program: constant, band-limited random, or bimodal switching.
//! Image frames live on every `pose_rate / image_rate`-th sample, so frame
//! times coincide exactly with pose samples and no interpolation is needed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{so3_exp, PoseSE3};

/// Velocity program driving the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MotionRegime {
    /// Fixed world-frame linear velocity and body-frame angular velocity.
    Constant {
        linear_mps: [f64; 3],
        angular_rps: [f64; 3],
    },
    /// Band-limited random velocities: each axis is a small sum of sinusoids
    /// with frequencies below `bandwidth_hz`. The z (depth) axis runs at half
    /// the linear scale so the camera never reaches the scene planes.
    Smooth {
        linear_std_mps: f64,
        angular_std_rps: f64,
        bandwidth_hz: f64,
    },
    /// Alternates between two fixed velocities every `dwell_s` seconds, with
    /// small smooth jitter on top. The active regime index is recorded per
    /// pose sample, which lets tests check that the two motion modes are
    /// recoverable by clustering.
    Bimodal {
        first_mps: [f64; 3],
        second_mps: [f64; 3],
        dwell_s: f64,
        jitter_mps: f64,
    },
}

/// Trajectory generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub duration_s: f64,
    /// Pose sampling rate; doubles as the IMU rate.
    pub pose_rate_hz: f64,
    /// Image frame rate; must divide the pose rate evenly.
    pub image_rate_hz: f64,
    pub regime: MotionRegime,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            pose_rate_hz: 200.0,
            image_rate_hz: 20.0,
            regime: MotionRegime::Smooth {
                linear_std_mps: 0.5,
                angular_std_rps: 0.03,
                bandwidth_hz: 0.5,
            },
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.pose_rate_hz.is_finite() && self.pose_rate_hz > 0.0)
            || !(self.image_rate_hz.is_finite() && self.image_rate_hz > 0.0)
        {
            return Err(Error::Config("rates must be positive".to_string()));
        }
        if self.image_rate_hz > self.pose_rate_hz {
            return Err(Error::Config(format!(
                "image rate {} exceeds pose rate {}",
                self.image_rate_hz, self.pose_rate_hz
            )));
        }
        let ratio = self.pose_rate_hz / self.image_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "pose rate must be an integer multiple of the image rate, got ratio {ratio}"
            )));
        }
        match &self.regime {
            MotionRegime::Constant {
                linear_mps,
                angular_rps,
            } => {
                if !all_finite(linear_mps) || !all_finite(angular_rps) {
                    return Err(Error::Config("velocities must be finite".to_string()));
                }
            }
            MotionRegime::Smooth {
                linear_std_mps,
                angular_std_rps,
                bandwidth_hz,
            } => {
                if !(*linear_std_mps >= 0.0 && *angular_std_rps >= 0.0) {
                    return Err(Error::Config(
                        "velocity scales must be non-negative".to_string(),
                    ));
                }
                if !(*bandwidth_hz > 0.0 && *bandwidth_hz <= self.image_rate_hz / 2.0) {
                    return Err(Error::Config(format!(
                        "bandwidth must lie in (0, image rate / 2], got {bandwidth_hz}"
                    )));
                }
            }
            MotionRegime::Bimodal {
                first_mps,
                second_mps,
                dwell_s,
                jitter_mps,
            } => {
                if !all_finite(first_mps) || !all_finite(second_mps) {
                    return Err(Error::Config("velocities must be finite".to_string()));
                }
                if !(*dwell_s > 0.0) {
                    return Err(Error::Config("dwell must be positive".to_string()));
                }
                if !(*jitter_mps >= 0.0) {
                    return Err(Error::Config("jitter must be non-negative".to_string()));
                }
            }
        }
        Ok(())
    }
}

/// A camera path sampled on a uniform clock, camera-to-world.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, PoseSE3)>,
    pose_rate_hz: f64,
    image_rate_hz: f64,
    labels: Vec<usize>,
}

impl Trajectory {
    /// Wraps pre-built samples. Timestamps must be strictly increasing and
    /// `labels` must either be empty or match the sample count.
    pub fn new(
        samples: Vec<(f64, PoseSE3)>,
        pose_rate_hz: f64,
        image_rate_hz: f64,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract(
                "a trajectory needs at least one sample".to_string(),
            ));
        }
        for pair in samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Contract(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if !labels.is_empty() && labels.len() != samples.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.len()
            )));
        }
        let ratio = pose_rate_hz / image_rate_hz;
        if !(ratio.is_finite() && ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::Contract(format!(
                "pose rate must be an integer multiple of the image rate, got ratio {ratio}"
            )));
        }
        Ok(Self {
            samples,
            pose_rate_hz,
            image_rate_hz,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(f64, PoseSE3)] {
        &self.samples
    }

    pub fn time(&self, index: usize) -> f64 {
        self.samples[index].0
    }

    pub fn pose(&self, index: usize) -> &PoseSE3 {
        &self.samples[index].1
    }

    pub fn pose_rate_hz(&self) -> f64 {
        self.pose_rate_hz
    }

    pub fn image_rate_hz(&self) -> f64 {
        self.image_rate_hz
    }

    pub fn pose_dt(&self) -> f64 {
        1.0 / self.pose_rate_hz
    }

    /// Pose samples between consecutive image frames.
    pub fn image_stride(&self) -> usize {
        (self.pose_rate_hz / self.image_rate_hz).round() as usize
    }

    /// Number of image frames the sampled span covers.
    pub fn frame_count(&self) -> usize {
        (self.samples.len() - 1) / self.image_stride() + 1
    }

    /// Index of the pose sample that frame `frame` falls on.
    pub fn frame_pose_index(&self, frame: usize) -> Result<usize> {
        let index = frame * self.image_stride();
        if index >= self.samples.len() {
            return Err(Error::Contract(format!(
                "frame {frame} is outside the trajectory ({} frames)",
                self.frame_count()
            )));
        }
        Ok(index)
    }

    pub fn frame_time(&self, frame: usize) -> Result<f64> {
        Ok(self.time(self.frame_pose_index(frame)?))
    }

    pub fn frame_pose(&self, frame: usize) -> Result<&PoseSE3> {
        Ok(self.pose(self.frame_pose_index(frame)?))
    }

    /// Motion-regime index per pose sample; empty for unimodal programs.
    pub fn regime_labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Velocity program evaluated at arbitrary times.
struct VelocityProgram {
    linear: [AxisWave; 3],
    angular: [AxisWave; 3],
    bimodal: Option<BimodalSwitch>,
}

struct BimodalSwitch {
    first: [f64; 3],
    second: [f64; 3],
    dwell_s: f64,
}

/// Sum of sinusoids plus a constant, one motion axis.
struct AxisWave {
    constant: f64,
    waves: Vec<(f64, f64, f64)>,
}

impl AxisWave {
    fn constant(value: f64) -> Self {
        Self {
            constant: value,
            waves: Vec::new(),
        }
    }

    fn band_limited(rng: &mut ChaCha8Rng, std: f64, bandwidth_hz: f64) -> Self {
        const HARMONICS: usize = 4;
        let amplitude = std * (2.0 / HARMONICS as f64).sqrt();
        let waves = (0..HARMONICS)
            .map(|_| {
                let frequency = rng.random_range(0.15 * bandwidth_hz..=bandwidth_hz);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (amplitude, std::f64::consts::TAU * frequency, phase)
            })
            .collect();
        Self {
            constant: 0.0,
            waves,
        }
    }

    fn at(&self, t: f64) -> f64 {
        let mut v = self.constant;
        for &(a, omega, phase) in &self.waves {
            v += a * (omega * t + phase).sin();
        }
        v
    }
}

impl VelocityProgram {
    fn from_config(rng: &mut ChaCha8Rng, regime: &MotionRegime) -> Self {
        match regime {
            MotionRegime::Constant {
                linear_mps,
                angular_rps,
            } => Self {
                linear: linear_mps.map(AxisWave::constant),
                angular: angular_rps.map(AxisWave::constant),
                bimodal: None,
            },
            MotionRegime::Smooth {
                linear_std_mps,
                angular_std_rps,
                bandwidth_hz,
            } => {
                let linear_scale = [*linear_std_mps, *linear_std_mps, 0.5 * *linear_std_mps];
                let linear =
                    linear_scale.map(|std| AxisWave::band_limited(rng, std, *bandwidth_hz));
                let angular = [*angular_std_rps; 3]
                    .map(|std| AxisWave::band_limited(rng, std, *bandwidth_hz));
                Self {
                    linear,
                    angular,
                    bimodal: None,
                }
            }
            MotionRegime::Bimodal {
                first_mps,
                second_mps,
                dwell_s,
                jitter_mps,
            } => {
                let linear =
                    [0, 1, 2].map(|_| AxisWave::band_limited(rng, *jitter_mps, 0.5));
                Self {
                    linear,
                    angular: [0.0; 3].map(AxisWave::constant),
                    bimodal: Some(BimodalSwitch {
                        first: *first_mps,
                        second: *second_mps,
                        dwell_s: *dwell_s,
                    }),
                }
            }
        }
    }

    fn regime_index(&self, t: f64) -> usize {
        match &self.bimodal {
            Some(switch) => ((t / switch.dwell_s).floor() as usize) % 2,
            None => 0,
        }
    }

    fn linear_at(&self, t: f64) -> [f64; 3] {
        let mut v = [0, 1, 2].map(|i| self.linear[i].at(t));
        if let Some(switch) = &self.bimodal {
            let base = if self.regime_index(t) == 0 {
                switch.first
            } else {
                switch.second
            };
            for i in 0..3 {
                v[i] += base[i];
            }
        }
        v
    }

    fn angular_at(&self, t: f64) -> [f64; 3] {
        [0, 1, 2].map(|i| self.angular[i].at(t))
    }
}

/// Integrates the configured velocity program from the identity pose.
///
/// Linear velocity is applied in the world frame and angular velocity in the
/// body frame, so the synthesized gyroscope readings are plain body rates.
pub fn generate_trajectory(seed: u64, config: &TrajectoryConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let program = VelocityProgram::from_config(&mut rng, &config.regime);
    let dt = 1.0 / config.pose_rate_hz;
    let steps = (config.duration_s * config.pose_rate_hz).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut labels = Vec::new();
    let record_labels = matches!(config.regime, MotionRegime::Bimodal { .. });
    let mut position = [0.0f64; 3];
    let mut rotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    for k in 0..=steps {
        let t = k as f64 * dt;
        samples.push((
            t,
            PoseSE3::from_rotation_translation(rotation, position)?,
        ));
        if record_labels {
            labels.push(program.regime_index(t));
        }
        if k < steps {
            let v = program.linear_at(t);
            let w = program.angular_at(t);
            for i in 0..3 {
                position[i] += v[i] * dt;
            }
            rotation = mat3_mul(&rotation, &so3_exp([w[0] * dt, w[1] * dt, w[2] * dt]));
        }
    }
    Trajectory::new(samples, config.pose_rate_hz, config.image_rate_hz, labels)
}

fn mat3_mul(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] =
                a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
        }
    }
    out
}

fn all_finite(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}
