//! The two-pathway warp network: a fully connected stack turns the motion
//! signal into affine warp parameters while a convolutional encoder-decoder
//! turns the source image into per-pixel corrections, and per-hypothesis
//! heads compose both into candidate sample grids.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{NodeId, ParamId, ParamSet, Pathway, Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{
    bilinear_sample, grid_to_flow, AffineParams, FlowField, Image, SampleGrid, ShiftField,
};
use crate::model::config::{ModelConfig, SFFMS_CLASSES};
use crate::model::motion::MotionInput;

/// Parameter handles for one fully connected layer.
#[derive(Debug, Clone, Copy)]
struct FcIds {
    w: ParamId,
    b: ParamId,
}

/// Parameter handles for one convolution layer.
#[derive(Debug, Clone, Copy)]
struct ConvIds {
    k: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    imu_stack: Vec<FcIds>,
    sffms_stack: Vec<FcIds>,
    encoder: Vec<ConvIds>,
    bridge: FcIds,
    projection: FcIds,
    decoder: Vec<ConvIds>,
    affine_heads: Vec<FcIds>,
    shift_heads: Vec<ConvIds>,
}

/// Graph handles from one forward construction, used to read values after
/// evaluation or to extend the graph with reconstruction losses.
pub(crate) struct ForwardGraph {
    pub feature: NodeId,
    pub thetas: Vec<NodeId>,
    pub shifts: Vec<NodeId>,
    pub grids: Vec<NodeId>,
}

/// The warp network: configuration plus one flat parameter store in which
/// trunk tensors are tagged shared and head tensors are tagged with their
/// hypothesis index.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet<f32>,
    layout: Layout,
}

impl Model {
    /// Constructs and initializes the network. Trunk weights draw from a
    /// fan-in-scaled normal distribution with zero biases; affine heads
    /// start at the exact identity transform; shift heads start at zero
    /// plus per-hypothesis symmetry-breaking noise small enough that the
    /// initial flow stays far below a thousandth of a pixel and inside the
    /// sampler's integer-snap band, so a fresh network reproduces its input
    /// bitwise when warping an identical pair.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let fc = config.fc_widths();
        let conv = config.conv_widths();
        let dec = config.decoder_widths();

        let mut imu_stack = Vec::new();
        if config.motion_mode.uses_imu() {
            let mut prev = config.imu_input_len();
            for (i, &width) in fc.iter().enumerate() {
                imu_stack.push(fc_layer(&mut params, &mut rng, &format!("imu_fc{i}"), prev, width)?);
                prev = width;
            }
        }
        let mut sffms_stack = Vec::new();
        if config.motion_mode.uses_sffms() {
            let mut prev = SFFMS_CLASSES;
            for (i, &width) in fc.iter().enumerate() {
                sffms_stack.push(fc_layer(
                    &mut params,
                    &mut rng,
                    &format!("sffms_fc{i}"),
                    prev,
                    width,
                )?);
                prev = width;
            }
        }

        let mut encoder = Vec::new();
        let mut prev_ch = 1;
        for (i, &ch) in conv.iter().enumerate() {
            encoder.push(conv_layer(&mut params, &mut rng, &format!("enc{i}"), prev_ch, ch)?);
            prev_ch = ch;
        }

        let deep = *config.encoder_sizes().last().expect("validated non-empty");
        let deep_ch = *conv.last().expect("validated non-empty");
        let flat = deep * deep * deep_ch;
        let bridge = fc_layer(
            &mut params,
            &mut rng,
            "bridge",
            flat + config.motion_feature_width(),
            config.bridge_width(),
        )?;
        let projection = fc_layer(&mut params, &mut rng, "project", config.bridge_width(), flat)?;

        let mut decoder = Vec::new();
        let mut prev_ch = deep_ch;
        for (i, &ch) in dec.iter().enumerate() {
            decoder.push(deconv_layer(&mut params, &mut rng, &format!("dec{i}"), ch, prev_ch)?);
            prev_ch = ch;
        }

        let feature_width = config.motion_feature_width();
        let shift_ch = *dec.last().expect("validated non-empty");
        let noise = Normal::new(0.0, 1e-4 / (64.0 * shift_ch as f64 * config.input_size as f64))
            .expect("positive sigma");
        let mut affine_heads = Vec::new();
        let mut shift_heads = Vec::new();
        for i in 0..config.hypothesis_count {
            let w = params.add(
                &format!("affine{i}.w"),
                Tensor::zeros(vec![feature_width, 6])?,
                Pathway::Hypothesis(i),
            )?;
            let b = params.add(
                &format!("affine{i}.b"),
                Tensor::new(vec![6], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0])?,
                Pathway::Hypothesis(i),
            )?;
            affine_heads.push(FcIds { w, b });

            let data: Vec<f32> =
                (0..shift_ch * 2).map(|_| noise.sample(&mut rng) as f32).collect();
            let k = params.add(
                &format!("shift{i}.k"),
                Tensor::new(vec![1, 1, shift_ch, 2], data)?,
                Pathway::Hypothesis(i),
            )?;
            let b = params.add(
                &format!("shift{i}.b"),
                Tensor::zeros(vec![2])?,
                Pathway::Hypothesis(i),
            )?;
            shift_heads.push(ConvIds { k, b });
        }

        Ok(Model {
            config,
            params,
            layout: Layout {
                imu_stack,
                sffms_stack,
                encoder,
                bridge,
                projection,
                decoder,
                affine_heads,
                shift_heads,
            },
        })
    }

    /// The architecture this model was built from.
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Read access to every parameter tensor.
    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    /// Write access for the optimizer and checkpoint loader.
    pub(crate) fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    /// Number of hypothesis heads.
    pub fn hypothesis_count(&self) -> usize {
        self.config.hypothesis_count
    }

    /// Builds the full forward graph on `tape` and returns handles to the
    /// per-hypothesis outputs.
    pub(crate) fn build_graph(
        &self,
        tape: &mut Tape<f32>,
        source: &Tensor<f32>,
        motion: &MotionInput,
    ) -> Result<ForwardGraph> {
        motion.check_against(&self.config)?;
        let size = self.config.input_size;
        if source.shape() != [size, size] {
            return Err(Error::Shape(format!(
                "source image is {:?}, model expects [{size}, {size}]",
                source.shape()
            )));
        }

        let mut features = Vec::new();
        if self.config.motion_mode.uses_imu() {
            let window = motion.imu_window().expect("checked above");
            let flat = window.reshaped(vec![self.config.imu_input_len()])?;
            let x = tape.constant(flat);
            features.push(self.fc_stack(tape, x, &self.layout.imu_stack)?);
        }
        if self.config.motion_mode.uses_sffms() {
            let code = motion.sffms().expect("checked above").clone();
            let x = tape.constant(code);
            features.push(self.fc_stack(tape, x, &self.layout.sffms_stack)?);
        }
        let feature =
            if features.len() == 1 { features[0] } else { tape.concat(&features, 0)? };

        let mut x = tape.constant(source.reshaped(vec![1, size, size, 1])?);
        for layer in &self.layout.encoder {
            let k = tape.param(&self.params, layer.k);
            let b = tape.param(&self.params, layer.b);
            x = tape.conv2d(x, k, b, 2)?;
            x = tape.relu(x)?;
        }

        let deep = *self.config.encoder_sizes().last().expect("validated non-empty");
        let deep_ch = *self.config.conv_widths().last().expect("validated non-empty");
        let flat = tape.reshape(x, vec![deep * deep * deep_ch])?;
        let joined = tape.concat(&[flat, feature], 0)?;
        let bw = tape.param(&self.params, self.layout.bridge.w);
        let bb = tape.param(&self.params, self.layout.bridge.b);
        let bridged = tape.fully_connected(joined, bw, bb)?;
        let bridged = tape.relu(bridged)?;
        let pw = tape.param(&self.params, self.layout.projection.w);
        let pb = tape.param(&self.params, self.layout.projection.b);
        let projected = tape.fully_connected(bridged, pw, pb)?;
        let projected = tape.relu(projected)?;

        let mut x = tape.reshape(projected, vec![1, deep, deep, deep_ch])?;
        for layer in &self.layout.decoder {
            let k = tape.param(&self.params, layer.k);
            let b = tape.param(&self.params, layer.b);
            x = tape.conv_transpose2d(x, k, b, 2)?;
            x = tape.relu(x)?;
        }

        let mut thetas = Vec::with_capacity(self.config.hypothesis_count);
        let mut shifts = Vec::with_capacity(self.config.hypothesis_count);
        let mut grids = Vec::with_capacity(self.config.hypothesis_count);
        for i in 0..self.config.hypothesis_count {
            let head = self.layout.affine_heads[i];
            let w = tape.param(&self.params, head.w);
            let b = tape.param(&self.params, head.b);
            let theta_flat = tape.fully_connected(feature, w, b)?;
            let theta = tape.reshape(theta_flat, vec![2, 3])?;

            let head = self.layout.shift_heads[i];
            let k = tape.param(&self.params, head.k);
            let b = tape.param(&self.params, head.b);
            let raw = tape.conv2d(x, k, b, 1)?;
            let shift = tape.reshape(raw, vec![size, size, 2])?;

            let base = tape.affine_grid(theta, size, size)?;
            let grid = tape.add(base, shift)?;
            thetas.push(theta);
            shifts.push(shift);
            grids.push(grid);
        }
        Ok(ForwardGraph { feature, thetas, shifts, grids })
    }

    fn fc_stack(&self, tape: &mut Tape<f32>, input: NodeId, stack: &[FcIds]) -> Result<NodeId> {
        let mut x = input;
        for layer in stack {
            let w = tape.param(&self.params, layer.w);
            let b = tape.param(&self.params, layer.b);
            x = tape.fully_connected(x, w, b)?;
            x = tape.relu(x)?;
        }
        Ok(x)
    }

    /// Runs the network and returns the per-hypothesis warps. Reconstruction
    /// against a target image is a separate step so the same forward serves
    /// both training and flow export.
    pub fn forward(&self, source: &Image, motion: &MotionInput) -> Result<HypothesisSet> {
        let source_t = image_tensor(source);
        let mut tape = Tape::new();
        let graph = self.build_graph(&mut tape, &source_t, motion)?;
        let size = self.config.input_size;

        let mut hypotheses = Vec::with_capacity(self.config.hypothesis_count);
        for i in 0..self.config.hypothesis_count {
            let tv = tape.value(graph.thetas[i]);
            let mut theta = [0.0f64; 6];
            for (dst, &src) in theta.iter_mut().zip(tv.data()) {
                *dst = f64::from(src);
            }
            let affine = AffineParams::new(theta)?;
            let shift = ShiftField::new(size, size, widen(tape.value(graph.shifts[i]).data()))?;
            let grid = SampleGrid::new(size, size, widen(tape.value(graph.grids[i]).data()))?;
            hypotheses.push(Hypothesis { affine, shift, grid });
        }
        let feature = widen(tape.value(graph.feature).data());
        HypothesisSet::new(hypotheses, feature)
    }
}

fn widen(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&v| f64::from(v)).collect()
}

/// Converts an image into the single-channel tensor the graph consumes.
pub(crate) fn image_tensor(image: &Image) -> Tensor<f32> {
    let data: Vec<f32> = image.data().iter().map(|&v| v as f32).collect();
    Tensor::new(vec![image.height(), image.width()], data).expect("image invariants")
}

fn fc_layer(
    params: &mut ParamSet<f32>,
    rng: &mut ChaCha8Rng,
    name: &str,
    fan_in: usize,
    width: usize,
) -> Result<FcIds> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data: Vec<f32> = (0..fan_in * width).map(|_| dist.sample(rng) as f32).collect();
    let w = params.add(&format!("{name}.w"), Tensor::new(vec![fan_in, width], data)?, Pathway::Shared)?;
    let b = params.add(&format!("{name}.b"), Tensor::zeros(vec![width])?, Pathway::Shared)?;
    Ok(FcIds { w, b })
}

fn conv_layer(
    params: &mut ParamSet<f32>,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
) -> Result<ConvIds> {
    let fan_in = 3 * 3 * cin;
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data: Vec<f32> = (0..fan_in * cout).map(|_| dist.sample(rng) as f32).collect();
    let k = params.add(&format!("{name}.k"), Tensor::new(vec![3, 3, cin, cout], data)?, Pathway::Shared)?;
    let b = params.add(&format!("{name}.b"), Tensor::zeros(vec![cout])?, Pathway::Shared)?;
    Ok(ConvIds { k, b })
}

fn deconv_layer(
    params: &mut ParamSet<f32>,
    rng: &mut ChaCha8Rng,
    name: &str,
    cout: usize,
    cin: usize,
) -> Result<ConvIds> {
    let fan_in = 3 * 3 * cin;
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data: Vec<f32> = (0..3 * 3 * cout * cin).map(|_| dist.sample(rng) as f32).collect();
    let k = params.add(&format!("{name}.k"), Tensor::new(vec![3, 3, cout, cin], data)?, Pathway::Shared)?;
    let b = params.add(&format!("{name}.b"), Tensor::zeros(vec![cout])?, Pathway::Shared)?;
    Ok(ConvIds { k, b })
}

/// One candidate warp: its affine part, per-pixel correction, and the
/// composed sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Parameters the global pathway produced.
    pub affine: AffineParams,
    /// Per-pixel correction the local pathway produced.
    pub shift: ShiftField,
    /// Composed grid: affine grid plus shift.
    pub grid: SampleGrid,
}

/// Every hypothesis from one forward pass, plus the shared motion feature
/// that fed the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    hypotheses: Vec<Hypothesis>,
    motion_feature: Vec<f64>,
}

impl HypothesisSet {
    /// Bundles hypotheses produced elsewhere, checking they agree on size.
    pub fn new(hypotheses: Vec<Hypothesis>, motion_feature: Vec<f64>) -> Result<Self> {
        let first = hypotheses
            .first()
            .ok_or_else(|| Error::Contract("a hypothesis set cannot be empty".into()))?;
        let (h, w) = (first.grid.height(), first.grid.width());
        for hyp in &hypotheses {
            if hyp.grid.height() != h
                || hyp.grid.width() != w
                || hyp.shift.height() != h
                || hyp.shift.width() != w
            {
                return Err(Error::Shape("hypotheses disagree on grid size".into()));
            }
        }
        Ok(HypothesisSet { hypotheses, motion_feature })
    }

    /// Number of hypotheses; always at least 1.
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    /// Always false; construction rejects empty sets.
    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// The candidate warps.
    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    /// Shared motion feature the affine heads consumed.
    pub fn motion_feature(&self) -> &[f64] {
        &self.motion_feature
    }

    /// Samples `target` through every hypothesis grid.
    pub fn reconstruct(&self, target: &Image) -> Result<Vec<Image>> {
        let grid = &self.hypotheses[0].grid;
        if target.height() != grid.height() || target.width() != grid.width() {
            return Err(Error::Shape(format!(
                "target is {}x{}, grids are {}x{}",
                target.height(),
                target.width(),
                grid.height(),
                grid.width()
            )));
        }
        self.hypotheses.iter().map(|h| bilinear_sample(target, &h.grid)).collect()
    }

    /// Converts the winning hypothesis's grid into a dense flow field.
    pub fn export_flow(&self, winner: usize) -> Result<FlowField> {
        let hyp = self.hypotheses.get(winner).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "winner index {winner} out of range for {} hypotheses",
                self.hypotheses.len()
            ))
        })?;
        Ok(grid_to_flow(&hyp.grid))
    }
}
