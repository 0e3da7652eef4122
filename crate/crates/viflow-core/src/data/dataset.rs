//! Dataset assembly: rendered image pairs, packed motion inputs, ground
//! truth flow, and the on-disk index.
//!
//! A build renders exemplars off one synthesized trajectory, splits them
//! 80/20 into train and held-out sets by a seeded shuffle, fits the motion
//! codebook on the training split only, and writes everything under one
//! directory: `index.json` plus per-exemplar VIFT tensors. Loading reads the
//! index and materializes the exemplars; `build_dataset` itself returns the
//! loaded result, so what callers get is exactly what the files hold.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::codebook::{kmeans_fit, pose_delta, SffmsCodebook};
use crate::data::files::{
    read_flow_vift, read_image_vift, read_window_vift, write_flow_vift, write_image_vift,
    write_imu_csv, write_window_vift,
};
use crate::data::imu::{pack_imu_window, synthesize_imu, ImuNoiseConfig, WindowLayout};
use crate::data::scene::{warp_consistency_error, Scene, SceneConfig};
use crate::data::trajectory::{generate_trajectory, Trajectory, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    bilinear_sample, flow_to_grid, ground_truth_flow, CameraIntrinsics, DepthMap, FlowField,
    Image,
};
use crate::model::{one_hot_code, MotionInput, MotionMode, SFFMS_CLASSES};

/// Every rigid exemplar must reconstruct at least this well under its own
/// ground-truth flow (mean absolute error over maskable pixels).
pub const WARP_CONSISTENCY_LIMIT: f64 = 0.02;

const INDEX_FORMAT: &str = "viflow-dataset";
const INDEX_VERSION: u32 = 1;

/// Which split an exemplar belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

/// Half-open pixel rectangle, `x` along columns and `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x0 && col < self.x1 && row >= self.y0 && row < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// True when the rectangles share at least one pixel.
    pub fn intersects(&self, other: &PixelBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// One training or evaluation item.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub id: usize,
    pub lookahead: usize,
    pub split: Split,
    pub source: Image,
    pub target: Image,
    pub motion: MotionInput,
    pub flow: FlowField,
    /// Image-space bounds of the independently moving patch in the source
    /// frame; `None` for rigid exemplars.
    pub anomaly_box: Option<PixelBox>,
}

/// A fully loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub image_size: usize,
    pub motion_mode: MotionMode,
    pub codebook: Option<SffmsCodebook>,
    pub exemplars: Vec<Exemplar>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn train_split(&self) -> impl Iterator<Item = &Exemplar> {
        self.exemplars.iter().filter(|e| e.split == Split::Train)
    }

    pub fn eval_split(&self) -> impl Iterator<Item = &Exemplar> {
        self.exemplars.iter().filter(|e| e.split == Split::Eval)
    }
}

/// Everything a dataset build needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Side length of the rendered square frames.
    pub image_size: usize,
    /// Number of rigid exemplars.
    pub exemplar_count: usize,
    /// Number of moving-patch exemplars, always placed in the held-out
    /// split. Requires a configured patch.
    pub anomaly_count: usize,
    /// Frame gaps to draw from, each between 1 and 4.
    pub lookaheads: Vec<usize>,
    /// Which motion inputs to pack.
    pub motion_mode: MotionMode,
    /// Rows of the packed inertial window.
    pub imu_rows: usize,
    /// Focal length in pixels; the principal point sits at the image center.
    pub focal_px: f64,
    /// Fraction of rigid exemplars that lands in the training split.
    pub train_fraction: f64,
    pub scene: SceneConfig,
    pub trajectory: TrajectoryConfig,
    pub imu_noise: ImuNoiseConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            exemplar_count: 250,
            anomaly_count: 0,
            lookaheads: vec![1, 2, 3, 4],
            motion_mode: MotionMode::Imu,
            imu_rows: 50,
            focal_px: 64.0,
            train_fraction: 0.8,
            scene: SceneConfig::default(),
            trajectory: TrajectoryConfig::default(),
            imu_noise: ImuNoiseConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::Config(format!(
                "image_size must be at least 8, got {}",
                self.image_size
            )));
        }
        if self.exemplar_count == 0 {
            return Err(Error::Config("exemplar_count must be positive".to_string()));
        }
        if self.lookaheads.is_empty() || self.lookaheads.iter().any(|&l| !(1..=4).contains(&l)) {
            return Err(Error::Config(format!(
                "lookaheads must be a non-empty list within 1..=4, got {:?}",
                self.lookaheads
            )));
        }
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::Config("focal_px must be positive".to_string()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if self.anomaly_count > 0 && self.scene.moving_patch.is_none() {
            return Err(Error::Config(
                "anomaly exemplars need a configured moving patch".to_string(),
            ));
        }
        self.scene.validate()?;
        self.trajectory.validate()?;
        self.imu_noise.validate()?;
        if self.motion_mode.uses_imu() {
            self.window_layout()?;
        }
        if self.motion_mode.uses_sffms() {
            let train = (self.exemplar_count as f64 * self.train_fraction).round() as usize;
            if train < SFFMS_CLASSES {
                return Err(Error::Config(format!(
                    "the motion codebook needs at least {SFFMS_CLASSES} training exemplars, \
                     the split provides {train}"
                )));
            }
        }
        Ok(())
    }

    /// Window layout implied by the row count and rates: the 50-row layout
    /// at 200 Hz / 20 Hz and the 20-row layout at 100 Hz / 10 Hz are the two
    /// standard shapes, anything else packs as a free-form window.
    pub fn window_layout(&self) -> Result<WindowLayout> {
        let pose_rate = self.trajectory.pose_rate_hz;
        let image_rate = self.trajectory.image_rate_hz;
        let layout = if self.imu_rows == 50 && pose_rate == 200.0 && image_rate == 20.0 {
            WindowLayout::Euroc50
        } else if self.imu_rows == 20 && pose_rate == 100.0 && image_rate == 10.0 {
            WindowLayout::Kitti20
        } else {
            WindowLayout::Synth {
                rows: self.imu_rows,
                imu_rate_hz: pose_rate,
                frame_interval_s: 1.0 / image_rate,
            }
        };
        let per_span = (pose_rate / image_rate).round() as usize;
        let max_lookahead = *self.lookaheads.iter().max().expect("validated non-empty");
        let needed = per_span * (1 + max_lookahead);
        if needed > layout.rows() {
            return Err(Error::Config(format!(
                "lookahead {max_lookahead} needs {needed} window rows, \
                 the layout holds {}",
                layout.rows()
            )));
        }
        if max_lookahead > 1 && matches!(layout, WindowLayout::Kitti20) {
            return Err(Error::Config(
                "the 20-row layout only packs single-interval pairs".to_string(),
            ));
        }
        Ok(layout)
    }

    fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        CameraIntrinsics::new(self.focal_px, self.focal_px, c, c)
    }
}

/// Serialized dataset index.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    format: String,
    version: u32,
    seed: u64,
    image_size: usize,
    motion_mode: MotionMode,
    imu_rows: usize,
    codebook: Option<SffmsCodebook>,
    exemplars: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    id: usize,
    lookahead: usize,
    split: Split,
    frame: usize,
    sffms_class: Option<usize>,
    anomaly_box: Option<PixelBox>,
    source_file: String,
    target_file: String,
    flow_file: String,
    window_file: Option<String>,
}

/// A rendered exemplar waiting for its motion encoding.
struct PendingExemplar {
    lookahead: usize,
    frame: usize,
    source: Image,
    target: Image,
    flow: FlowField,
    window: Option<Vec<[f64; 6]>>,
    delta: [f64; 6],
    anomaly_box: Option<PixelBox>,
}

/// Renders, splits, and serializes a dataset under `dir`, then loads it
/// back. The directory is created if missing; existing files are
/// overwritten.
pub fn build_dataset(seed: u64, config: &DatasetConfig, dir: &Path) -> Result<Dataset> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let scene_seed: u64 = master.random();
    let trajectory_seed: u64 = master.random();
    let noise_mix: u64 = master.random();
    let draw_seed: u64 = master.random();
    let split_seed: u64 = master.random();
    let kmeans_seed: u64 = master.random();

    let scene = Scene::build(scene_seed, &config.scene)?;
    let rigid_scene = scene.without_patch();
    let trajectory = generate_trajectory(trajectory_seed, &config.trajectory)?;
    let noise = ImuNoiseConfig {
        seed: config.imu_noise.seed.wrapping_add(noise_mix),
        ..config.imu_noise.clone()
    };
    let samples = synthesize_imu(&trajectory, config.trajectory.pose_rate_hz, &noise)?;
    let layout = config.window_layout()?;
    let intrinsics = config.intrinsics()?;

    let mut draw_rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let mut cache: HashMap<usize, (Image, DepthMap)> = HashMap::new();
    let mut pending = Vec::with_capacity(config.exemplar_count + config.anomaly_count);

    for id in 0..config.exemplar_count {
        let (frame, lookahead) = draw_pair(&mut draw_rng, config, &trajectory)?;
        let (source, depth, target) = {
            if !cache.contains_key(&frame) {
                let pose = trajectory.frame_pose(frame)?;
                cache.insert(
                    frame,
                    render(&rigid_scene, pose, &intrinsics, config.image_size)?,
                );
            }
            let target_frame = frame + lookahead;
            if !cache.contains_key(&target_frame) {
                let pose = trajectory.frame_pose(target_frame)?;
                cache.insert(
                    target_frame,
                    render(&rigid_scene, pose, &intrinsics, config.image_size)?,
                );
            }
            let (source, depth) = cache[&frame].clone();
            let (target, _) = cache[&target_frame].clone();
            (source, depth, target)
        };
        let pose_t0 = trajectory.frame_pose(frame)?;
        let pose_t1 = trajectory.frame_pose(frame + lookahead)?;
        let flow = ground_truth_flow(&intrinsics, &depth, pose_t0, pose_t1);
        let recon = bilinear_sample(&target, &flow_to_grid(&flow))?;
        let error = warp_consistency_error(&source, &recon, &flow)?;
        if error >= WARP_CONSISTENCY_LIMIT {
            return Err(Error::Render(format!(
                "exemplar {id} fails the warp-consistency gate: \
                 mean abs error {error} at frame {frame}, lookahead {lookahead}"
            )));
        }
        let window = pack_window_if_needed(config, &samples, &trajectory, frame, lookahead, layout)?;
        pending.push(PendingExemplar {
            lookahead,
            frame,
            source,
            target,
            flow,
            window,
            delta: pose_delta(pose_t0, pose_t1),
            anomaly_box: None,
        });
    }

    for _ in 0..config.anomaly_count {
        let placed = place_anomaly(
            &mut draw_rng,
            config,
            &scene,
            &trajectory,
            &samples,
            &intrinsics,
            layout,
        )?;
        pending.push(placed);
    }

    let mut split = vec![Split::Eval; pending.len()];
    let mut rigid_ids: Vec<usize> = (0..config.exemplar_count).collect();
    rigid_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let train_count = (config.exemplar_count as f64 * config.train_fraction).round() as usize;
    for &id in rigid_ids.iter().take(train_count) {
        split[id] = Split::Train;
    }

    let codebook = if config.motion_mode.uses_sffms() {
        let train_deltas: Vec<[f64; 6]> = pending
            .iter()
            .zip(&split)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(p, _)| p.delta)
            .collect();
        Some(kmeans_fit(&train_deltas, SFFMS_CLASSES, kmeans_seed)?)
    } else {
        None
    };

    let exemplar_dir = dir.join("exemplars");
    fs::create_dir_all(&exemplar_dir)
        .map_err(|e| Error::io(exemplar_dir.display().to_string(), e))?;
    write_imu_csv(&dir.join("imu.csv"), &samples)?;

    let mut entries = Vec::with_capacity(pending.len());
    for (id, item) in pending.iter().enumerate() {
        let stem = format!("exemplars/{id:06}");
        let source_file = format!("{stem}.source.vift");
        let target_file = format!("{stem}.target.vift");
        let flow_file = format!("{stem}.flow.vift");
        write_image_vift(&dir.join(&source_file), &item.source)?;
        write_image_vift(&dir.join(&target_file), &item.target)?;
        write_flow_vift(&dir.join(&flow_file), &item.flow)?;
        let window_file = match &item.window {
            Some(window) => {
                let name = format!("{stem}.window.vift");
                write_window_vift(&dir.join(&name), window)?;
                Some(name)
            }
            None => None,
        };
        let sffms_class = codebook.as_ref().map(|book| book.nearest(&item.delta).0);
        entries.push(IndexEntry {
            id,
            lookahead: item.lookahead,
            split: split[id],
            frame: item.frame,
            sffms_class,
            anomaly_box: item.anomaly_box,
            source_file,
            target_file,
            flow_file,
            window_file,
        });
    }

    let index = DatasetIndex {
        format: INDEX_FORMAT.to_string(),
        version: INDEX_VERSION,
        seed,
        image_size: config.image_size,
        motion_mode: config.motion_mode,
        imu_rows: config.imu_rows,
        codebook,
        exemplars: entries,
    };
    let index_path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index)
        .map_err(|e| Error::Config(format!("index serialization failed: {e}")))?;
    fs::write(&index_path, text).map_err(|e| Error::io(index_path.display().to_string(), e))?;

    load_dataset(dir)
}

fn render(
    scene: &Scene,
    pose: &crate::geometry::PoseSE3,
    intrinsics: &CameraIntrinsics,
    size: usize,
) -> Result<(Image, DepthMap)> {
    crate::data::scene::render_frame(scene, pose, intrinsics, size)
}

/// Draws a (frame, lookahead) pair whose pair of captures and inertial
/// window all fit inside the trajectory.
fn draw_pair(
    rng: &mut ChaCha8Rng,
    config: &DatasetConfig,
    trajectory: &Trajectory,
) -> Result<(usize, usize)> {
    let lookahead = config.lookaheads[rng.random_range(0..config.lookaheads.len())];
    let stride = trajectory.image_stride();
    let first = 2;
    let last = ((trajectory.len() - 1) / stride).saturating_sub(lookahead + 1);
    if last < first {
        return Err(Error::Config(format!(
            "the trajectory is too short for lookahead {lookahead}: \
             frames {first}..={last} are available"
        )));
    }
    Ok((rng.random_range(first..=last), lookahead))
}

fn pack_window_if_needed(
    config: &DatasetConfig,
    samples: &[crate::data::imu::ImuSample],
    trajectory: &Trajectory,
    frame: usize,
    lookahead: usize,
    layout: WindowLayout,
) -> Result<Option<Vec<[f64; 6]>>> {
    if !config.motion_mode.uses_imu() {
        return Ok(None);
    }
    let t0 = trajectory.frame_time(frame)?;
    let t1 = trajectory.frame_time(frame + lookahead)?;
    Ok(Some(pack_imu_window(samples, t0, t1, layout)?))
}

/// Renders one moving-patch exemplar at a frame where the patch stays
/// comfortably inside both captures.
fn place_anomaly(
    rng: &mut ChaCha8Rng,
    config: &DatasetConfig,
    scene: &Scene,
    trajectory: &Trajectory,
    samples: &[crate::data::imu::ImuSample],
    intrinsics: &CameraIntrinsics,
    layout: WindowLayout,
) -> Result<PendingExemplar> {
    const ATTEMPTS: usize = 200;
    let size = config.image_size;
    let margin = 2.0;
    for _ in 0..ATTEMPTS {
        let (frame, lookahead) = draw_pair(rng, config, trajectory)?;
        let t0 = trajectory.frame_time(frame)?;
        let t1 = trajectory.frame_time(frame + lookahead)?;
        let pose_t0 = trajectory.frame_pose(frame)?;
        let pose_t1 = trajectory.frame_pose(frame + lookahead)?;
        let scene_t0 = scene.at_time(t0);
        let scene_t1 = scene.at_time(t1);
        let inside = |bounds: Option<(f64, f64, f64, f64)>| {
            bounds.is_some_and(|(x0, y0, x1, y1)| {
                x0 >= margin
                    && y0 >= margin
                    && x1 <= size as f64 - margin
                    && y1 <= size as f64 - margin
                    && x1 - x0 >= 4.0
                    && y1 - y0 >= 4.0
            })
        };
        let box_t0 = scene_t0.patch_pixel_box(pose_t0, intrinsics);
        if !inside(box_t0) || !inside(scene_t1.patch_pixel_box(pose_t1, intrinsics)) {
            continue;
        }
        // The warp residual is wrong both where the patch sits in the source
        // frame and where it has moved to by the target frame, so the marked
        // region is the union of both footprints as seen from the source
        // camera, padded for parallax and bilinear support.
        let (ax0, ay0, ax1, ay1) = box_t0.expect("checked above");
        let Some((bx0, by0, bx1, by1)) = scene_t1.patch_pixel_box(pose_t0, intrinsics) else {
            continue;
        };
        let pad = 2.0;
        let x0 = ax0.min(bx0) - pad;
        let y0 = ay0.min(by0) - pad;
        let x1 = ax1.max(bx1) + pad;
        let y1 = ay1.max(by1) + pad;
        let (source, depth) = render(&scene_t0, pose_t0, intrinsics, size)?;
        let (target, _) = render(&scene_t1, pose_t1, intrinsics, size)?;
        let flow = ground_truth_flow(intrinsics, &depth, pose_t0, pose_t1);
        let window = pack_window_if_needed(config, samples, trajectory, frame, lookahead, layout)?;
        return Ok(PendingExemplar {
            lookahead,
            frame,
            source,
            target,
            flow,
            window,
            delta: pose_delta(pose_t0, pose_t1),
            anomaly_box: Some(PixelBox {
                x0: x0.max(0.0).floor() as usize,
                y0: y0.max(0.0).floor() as usize,
                x1: (x1.ceil() as usize).min(size),
                y1: (y1.ceil() as usize).min(size),
            }),
        });
    }
    Err(Error::Render(format!(
        "the moving patch never stayed in view over {ATTEMPTS} draws"
    )))
}

/// Loads a dataset directory written by [`build_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index_path = dir.join("index.json");
    let text = fs::read_to_string(&index_path)
        .map_err(|e| Error::io(index_path.display().to_string(), e))?;
    let index: DatasetIndex = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed dataset index: {e}")))?;
    if index.format != INDEX_FORMAT {
        return Err(Error::Config(format!(
            "expected a {INDEX_FORMAT} index, got {:?}",
            index.format
        )));
    }
    if index.version != INDEX_VERSION {
        return Err(Error::Config(format!(
            "unsupported dataset version {}",
            index.version
        )));
    }
    if index.motion_mode.uses_sffms() && index.codebook.is_none() {
        return Err(Error::Config(
            "the motion mode calls for a codebook but the index has none".to_string(),
        ));
    }
    let mut exemplars = Vec::with_capacity(index.exemplars.len());
    for entry in &index.exemplars {
        let source = read_image_vift(&resolve(dir, &entry.source_file)?)?;
        let target = read_image_vift(&resolve(dir, &entry.target_file)?)?;
        let flow = read_flow_vift(&resolve(dir, &entry.flow_file)?)?;
        for (name, h, w) in [
            ("source", source.height(), source.width()),
            ("target", target.height(), target.width()),
            ("flow", flow.height(), flow.width()),
        ] {
            if h != index.image_size || w != index.image_size {
                return Err(Error::Shape(format!(
                    "exemplar {}: the {name} tensor is {h}x{w}, \
                     the index declares {}",
                    entry.id, index.image_size
                )));
            }
        }
        let motion = load_motion(&index, entry, dir)?;
        exemplars.push(Exemplar {
            id: entry.id,
            lookahead: entry.lookahead,
            split: entry.split,
            source,
            target,
            motion,
            flow,
            anomaly_box: entry.anomaly_box,
        });
    }
    Ok(Dataset {
        image_size: index.image_size,
        motion_mode: index.motion_mode,
        codebook: index.codebook,
        exemplars,
    })
}

fn load_motion(index: &DatasetIndex, entry: &IndexEntry, dir: &Path) -> Result<MotionInput> {
    let window = if index.motion_mode.uses_imu() {
        let file = entry.window_file.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "exemplar {} has no window file but the mode needs one",
                entry.id
            ))
        })?;
        let rows = read_window_vift(&resolve(dir, file)?)?;
        if rows.len() != index.imu_rows {
            return Err(Error::Shape(format!(
                "exemplar {}: the window holds {} rows, the index declares {}",
                entry.id,
                rows.len(),
                index.imu_rows
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Some((rows.len(), flat))
    } else {
        None
    };
    let code = if index.motion_mode.uses_sffms() {
        let class = entry.sffms_class.ok_or_else(|| {
            Error::Config(format!(
                "exemplar {} has no motion class but the mode needs one",
                entry.id
            ))
        })?;
        Some(one_hot_code(class)?)
    } else {
        None
    };
    match (window, code) {
        (Some((rows, flat)), None) => MotionInput::from_imu(rows, &flat),
        (None, Some(code)) => MotionInput::from_sffms(&code),
        (Some((rows, flat)), Some(code)) => MotionInput::from_both(rows, &flat, &code),
        (None, None) => Err(Error::Config(
            "the motion mode selects no inputs".to_string(),
        )),
    }
}

/// Joins a relative index path against the dataset root, rejecting paths
/// that try to climb out of it.
fn resolve(dir: &Path, relative: &str) -> Result<PathBuf> {
    let path = Path::new(relative);
    if path.is_absolute()
        || path
            .components()
            .any(|c| matches!(c, std::path::Component::ParentDir))
    {
        return Err(Error::Config(format!(
            "index paths must stay inside the dataset directory, got {relative:?}"
        )));
    }
    Ok(dir.join(path))
}
