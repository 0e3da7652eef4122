//! Network architecture configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of classes in the clustered motion code.
pub const SFFMS_CLASSES: usize = 20;

/// Channels per inertial sample: gyroscope xyz then accelerometer xyz.
pub const IMU_CHANNELS: usize = 6;

/// Which extra-visual motion signals feed the global pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    /// Inertial window only.
    Imu,
    /// Clustered motion code only.
    Sffms,
    /// Both, with their features concatenated.
    ImuSffms,
}

impl MotionMode {
    /// True when the mode consumes an inertial window.
    pub fn uses_imu(self) -> bool {
        matches!(self, MotionMode::Imu | MotionMode::ImuSffms)
    }

    /// True when the mode consumes a clustered motion code.
    pub fn uses_sffms(self) -> bool {
        matches!(self, MotionMode::Sffms | MotionMode::ImuSffms)
    }
}

/// Shape of the network: pathway widths, depths, and hypothesis fan-out.
///
/// `scale_factor` divides every layer width (fully connected sizes, filter
/// counts, and the bridge) so the full architecture can be exercised at
/// desk scale without changing its structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Side length of the square input image in pixels.
    pub input_size: usize,
    /// Number of hypothesis heads.
    pub hypothesis_count: usize,
    /// Which motion signals the global pathway receives.
    pub motion_mode: MotionMode,
    /// Rows in the inertial window.
    pub imu_rows: usize,
    /// Widths of the fully connected motion stack, in order.
    pub fc_sizes: Vec<usize>,
    /// Encoder filter counts per stride-two level, shallow to deep.
    pub conv_filters: Vec<usize>,
    /// Width of the fully connected layer joining the two pathways.
    pub bridge_fc: usize,
    /// Divisor applied to every width above.
    pub scale_factor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 224,
            hypothesis_count: 4,
            motion_mode: MotionMode::Imu,
            imu_rows: 50,
            fc_sizes: vec![512, 4096, 4096, 512],
            conv_filters: vec![32, 64, 128, 256, 512],
            bridge_fc: 4096,
            scale_factor: 1,
        }
    }
}

impl ModelConfig {
    /// Full architecture shrunk to train on one CPU core: 64-pixel inputs
    /// and every width divided by 16.
    pub fn desk() -> Self {
        ModelConfig {
            input_size: 64,
            scale_factor: 16,
            ..ModelConfig::default()
        }
    }

    /// Checks structural consistency; every accessor below assumes this
    /// passed.
    pub fn validate(&self) -> Result<()> {
        if self.hypothesis_count == 0 {
            return Err(Error::Config("hypothesis_count must be at least 1".into()));
        }
        if self.fc_sizes.is_empty() {
            return Err(Error::Config("fc_sizes must name at least one layer".into()));
        }
        if self.conv_filters.is_empty() {
            return Err(Error::Config("conv_filters must name at least one level".into()));
        }
        if self.scale_factor == 0 {
            return Err(Error::Config("scale_factor must be at least 1".into()));
        }
        let stride_total = 1usize << self.conv_filters.len();
        if self.input_size < 2 * stride_total || self.input_size % stride_total != 0 {
            return Err(Error::Config(format!(
                "input_size {} must be a multiple of {stride_total} (2 per conv level) and \
                 leave at least 2 pixels at the deepest level",
                self.input_size
            )));
        }
        for (label, widths) in [("fc_sizes", &self.fc_sizes), ("conv_filters", &self.conv_filters)] {
            for &w in widths {
                if w == 0 || w % self.scale_factor != 0 {
                    return Err(Error::Config(format!(
                        "{label} entry {w} is not divisible by scale_factor {}",
                        self.scale_factor
                    )));
                }
            }
        }
        if self.bridge_fc == 0 || self.bridge_fc % self.scale_factor != 0 {
            return Err(Error::Config(format!(
                "bridge_fc {} is not divisible by scale_factor {}",
                self.bridge_fc, self.scale_factor
            )));
        }
        if self.motion_mode.uses_imu() && self.imu_rows == 0 {
            return Err(Error::Config("imu_rows must be at least 1 in an inertial mode".into()));
        }
        Ok(())
    }

    /// Fully connected widths after scaling.
    pub fn fc_widths(&self) -> Vec<usize> {
        self.fc_sizes.iter().map(|w| w / self.scale_factor).collect()
    }

    /// Encoder filter counts after scaling, shallow to deep.
    pub fn conv_widths(&self) -> Vec<usize> {
        self.conv_filters.iter().map(|w| w / self.scale_factor).collect()
    }

    /// Decoder filter counts after scaling. The decoder mirrors the encoder
    /// level for level; its last level keeps the shallowest width so the
    /// shift heads see a small feature map.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let conv = self.conv_widths();
        let mut widths: Vec<usize> = conv.iter().rev().skip(1).copied().collect();
        widths.push(conv[0]);
        widths
    }

    /// Bridge width after scaling.
    pub fn bridge_width(&self) -> usize {
        self.bridge_fc / self.scale_factor
    }

    /// Spatial side length after each encoder level.
    pub fn encoder_sizes(&self) -> Vec<usize> {
        (1..=self.conv_filters.len()).map(|i| self.input_size >> i).collect()
    }

    /// Length of the motion feature vector entering the heads and bridge:
    /// one stack output per modality.
    pub fn motion_feature_width(&self) -> usize {
        let last = *self.fc_widths().last().expect("validated non-empty");
        match self.motion_mode {
            MotionMode::Imu | MotionMode::Sffms => last,
            MotionMode::ImuSffms => 2 * last,
        }
    }

    /// Flattened length of the inertial window.
    pub fn imu_input_len(&self) -> usize {
        self.imu_rows * IMU_CHANNELS
    }
}
