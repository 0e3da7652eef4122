//! Extra-visual motion input carried alongside each image pair.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, IMU_CHANNELS, SFFMS_CLASSES};

/// Motion evidence for one exemplar: an inertial window, a clustered motion
/// code, or both, depending on the model's motion mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionInput {
    imu_window: Option<Tensor<f32>>,
    sffms: Option<Tensor<f32>>,
}

impl MotionInput {
    /// Wraps a row-major `rows` x 6 inertial window (gyro xyz, accel xyz).
    pub fn from_imu(rows: usize, samples: &[f64]) -> Result<Self> {
        Ok(MotionInput { imu_window: Some(imu_tensor(rows, samples)?), sffms: None })
    }

    /// Wraps a one-hot motion-cluster code.
    pub fn from_sffms(code: &[f64]) -> Result<Self> {
        Ok(MotionInput { imu_window: None, sffms: Some(sffms_tensor(code)?) })
    }

    /// Wraps both signals.
    pub fn from_both(rows: usize, samples: &[f64], code: &[f64]) -> Result<Self> {
        Ok(MotionInput {
            imu_window: Some(imu_tensor(rows, samples)?),
            sffms: Some(sffms_tensor(code)?),
        })
    }

    /// An all-zero inertial window, the representation of "no motion".
    pub fn zero_imu(rows: usize) -> Self {
        MotionInput {
            imu_window: Some(Tensor::zeros(vec![rows, IMU_CHANNELS]).expect("static shape")),
            sffms: None,
        }
    }

    /// The inertial window, if present.
    pub fn imu_window(&self) -> Option<&Tensor<f32>> {
        self.imu_window.as_ref()
    }

    /// The one-hot motion code, if present.
    pub fn sffms(&self) -> Option<&Tensor<f32>> {
        self.sffms.as_ref()
    }

    /// Confirms this input carries what the model's motion mode consumes,
    /// with the configured window height.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        if config.motion_mode.uses_imu() {
            let window = self.imu_window.as_ref().ok_or_else(|| {
                Error::Contract("motion mode needs an inertial window, none provided".into())
            })?;
            if window.shape() != [config.imu_rows, IMU_CHANNELS] {
                return Err(Error::Shape(format!(
                    "inertial window is {:?}, model expects [{}, {}]",
                    window.shape(),
                    config.imu_rows,
                    IMU_CHANNELS
                )));
            }
        }
        if config.motion_mode.uses_sffms() && self.sffms.is_none() {
            return Err(Error::Contract("motion mode needs a motion code, none provided".into()));
        }
        Ok(())
    }
}

fn imu_tensor(rows: usize, samples: &[f64]) -> Result<Tensor<f32>> {
    if rows == 0 {
        return Err(Error::InvalidDimension("inertial window needs at least one row".into()));
    }
    if samples.len() != rows * IMU_CHANNELS {
        return Err(Error::Shape(format!(
            "inertial window of {rows} rows needs {} samples, got {}",
            rows * IMU_CHANNELS,
            samples.len()
        )));
    }
    let data: Vec<f32> = samples.iter().map(|&v| v as f32).collect();
    Tensor::new(vec![rows, IMU_CHANNELS], data)
}

fn sffms_tensor(code: &[f64]) -> Result<Tensor<f32>> {
    if code.len() != SFFMS_CLASSES {
        return Err(Error::Shape(format!(
            "motion code must have {SFFMS_CLASSES} entries, got {}",
            code.len()
        )));
    }
    let mut ones = 0usize;
    for &v in code {
        if v == 1.0 {
            ones += 1;
        } else if v != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "motion code entries must be exactly 0 or 1, got {v}"
            )));
        }
    }
    if ones != 1 {
        return Err(Error::InvalidParameter(format!(
            "motion code must contain exactly one 1, got {ones}"
        )));
    }
    let data: Vec<f32> = code.iter().map(|&v| v as f32).collect();
    Tensor::new(vec![SFFMS_CLASSES], data)
}

/// Builds the one-hot code for a cluster index.
pub fn one_hot_code(class: usize) -> Result<Vec<f64>> {
    if class >= SFFMS_CLASSES {
        return Err(Error::InvalidParameter(format!(
            "cluster index {class} out of range for {SFFMS_CLASSES} classes"
        )));
    }
    let mut code = vec![0.0; SFFMS_CLASSES];
    code[class] = 1.0;
    Ok(code)
}
