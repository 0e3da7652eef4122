//! Planar scenes and their renderer.
//!
//! A scene is a large smooth texture attached to one or more fronto-parallel
//! world planes. The camera looks down +z from near the world origin, so a
//! plane at depth `d` spans world x and y at `z = d`. Rendering inverse-warps
//! the texture through each plane and keeps the nearest hit per pixel, which
//! yields an exact analytic depth map alongside the image.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Image, PoseSE3};

/// One fronto-parallel plane. The texture is attached at `fx / depth` texels
/// per meter, so a camera at the identity pose sees an axis-aligned crop.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarLayer {
    /// World z of the plane in meters, strictly positive.
    pub depth_m: f64,
    /// Half extents in world meters, or `None` for an unbounded plane.
    pub half_extent_m: Option<(f64, f64)>,
    /// Texel offset applied after the metric-to-texel scaling.
    pub texture_offset: (f64, f64),
}

/// A small textured rectangle that moves through the world over time,
/// violating the rigid-scene assumption for anomaly fixtures.
///
/// The patch circles its anchor at constant speed, so it is in motion at
/// every instant yet never strays farther than the orbit radius. That keeps
/// anomaly exemplars both well-posed (the rigid flow is always wrong inside
/// the patch) and renderable at any frame of a long trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingPatch {
    /// World z of the patch plane in meters, strictly positive.
    pub depth_m: f64,
    /// World x, y the orbit circles around.
    pub center_m: (f64, f64),
    /// Half extents of the patch in world meters.
    pub half_extent_m: (f64, f64),
    /// Radius of the circular path in meters.
    pub orbit_radius_m: f64,
    /// Time for one revolution in seconds.
    pub orbit_period_s: f64,
    /// Texel offset, normally far from the layer offsets so the patch shows
    /// distinct texture content.
    pub texture_offset: (f64, f64),
}

impl MovingPatch {
    /// Patch center at time `t`.
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let angle = std::f64::consts::TAU * t / self.orbit_period_s;
        (
            self.center_m.0 + self.orbit_radius_m * angle.cos(),
            self.center_m.1 + self.orbit_radius_m * angle.sin(),
        )
    }

    /// Constant orbital speed in meters per second.
    pub fn speed_mps(&self) -> f64 {
        std::f64::consts::TAU * self.orbit_radius_m / self.orbit_period_s
    }
}

/// Procedural scene description, sufficient to rebuild a [`Scene`] from a
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Side length of the square procedural texture in texels.
    pub texture_size: usize,
    /// Depths of the planes, nearest last. The first plane is unbounded and
    /// acts as the background; later planes are finite rectangles.
    pub layer_depths_m: Vec<f64>,
    /// Half extent in meters of every finite (non-background) layer.
    pub finite_layer_half_extent_m: f64,
    /// Optional independently moving patch.
    pub moving_patch: Option<MovingPatch>,
    /// Bound on the patch drift speed in meters per second.
    pub max_patch_speed_mps: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            texture_size: 512,
            layer_depths_m: vec![2.0, 1.75],
            finite_layer_half_extent_m: 0.4,
            moving_patch: None,
            max_patch_speed_mps: 2.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.texture_size < 16 {
            return Err(Error::Config(format!(
                "texture_size must be at least 16, got {}",
                self.texture_size
            )));
        }
        if self.layer_depths_m.is_empty() {
            return Err(Error::Config("at least one layer is required".to_string()));
        }
        for &d in &self.layer_depths_m {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!(
                    "layer depths must be finite and positive, got {d}"
                )));
            }
        }
        if !(self.finite_layer_half_extent_m.is_finite() && self.finite_layer_half_extent_m > 0.0) {
            return Err(Error::Config(
                "finite_layer_half_extent_m must be finite and positive".to_string(),
            ));
        }
        if let Some(patch) = &self.moving_patch {
            if !(patch.depth_m.is_finite() && patch.depth_m > 0.0) {
                return Err(Error::Config(format!(
                    "patch depth must be finite and positive, got {}",
                    patch.depth_m
                )));
            }
            if !(patch.half_extent_m.0 > 0.0 && patch.half_extent_m.1 > 0.0) {
                return Err(Error::Config(
                    "patch half extents must be positive".to_string(),
                ));
            }
            if !(patch.orbit_radius_m >= 0.0 && patch.orbit_period_s > 0.0) {
                return Err(Error::Config(
                    "the patch orbit needs a non-negative radius and a positive period"
                        .to_string(),
                ));
            }
            let speed = patch.speed_mps();
            if !(speed.is_finite() && speed <= self.max_patch_speed_mps) {
                return Err(Error::Config(format!(
                    "patch speed {speed} exceeds the bound {}",
                    self.max_patch_speed_mps
                )));
            }
        }
        Ok(())
    }
}

/// A renderable scene: texture, planes, and an optional moving patch viewed
/// at one instant. Use [`Scene::at_time`] to pick the instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    texture: Image,
    layers: Vec<PlanarLayer>,
    moving_patch: Option<MovingPatch>,
    time_s: f64,
}

impl Scene {
    /// Builds the scene described by `config`, generating the texture and
    /// layer texture offsets from `seed`.
    pub fn build(seed: u64, config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let texture = make_texture(&mut rng, config.texture_size)?;
        let span = config.texture_size as f64;
        let center = span / 2.0;
        let mut layers = Vec::with_capacity(config.layer_depths_m.len());
        for (i, &depth_m) in config.layer_depths_m.iter().enumerate() {
            let jitter = span / 8.0;
            let texture_offset = (
                center + rng.random_range(-jitter..jitter),
                center + rng.random_range(-jitter..jitter),
            );
            let half = config.finite_layer_half_extent_m;
            layers.push(PlanarLayer {
                depth_m,
                half_extent_m: if i == 0 { None } else { Some((half, half)) },
                texture_offset,
            });
        }
        Ok(Self {
            texture,
            layers,
            moving_patch: config.moving_patch.clone(),
            time_s: 0.0,
        })
    }

    /// Assembles a scene from explicit parts. Fails on non-positive depths.
    pub fn new(
        texture: Image,
        layers: Vec<PlanarLayer>,
        moving_patch: Option<MovingPatch>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract(
                "a scene needs at least one layer".to_string(),
            ));
        }
        for layer in &layers {
            if !(layer.depth_m.is_finite() && layer.depth_m > 0.0) {
                return Err(Error::Contract(format!(
                    "layer depth must be finite and positive, got {}",
                    layer.depth_m
                )));
            }
        }
        if let Some(patch) = &moving_patch {
            if !(patch.depth_m.is_finite() && patch.depth_m > 0.0) {
                return Err(Error::Contract(format!(
                    "patch depth must be finite and positive, got {}",
                    patch.depth_m
                )));
            }
            if !(patch.orbit_period_s > 0.0) {
                return Err(Error::Contract(
                    "the patch orbit period must be positive".to_string(),
                ));
            }
        }
        Ok(Self {
            texture,
            layers,
            moving_patch,
            time_s: 0.0,
        })
    }

    pub fn texture(&self) -> &Image {
        &self.texture
    }

    pub fn layers(&self) -> &[PlanarLayer] {
        &self.layers
    }

    pub fn moving_patch(&self) -> Option<&MovingPatch> {
        self.moving_patch.as_ref()
    }

    /// The instant the scene is viewed at, in seconds.
    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    /// The scene as it stands at absolute time `t`: static layers, patch on
    /// its orbital position for that instant.
    pub fn at_time(&self, t: f64) -> Scene {
        Scene {
            time_s: t,
            ..self.clone()
        }
    }

    /// The same scene with the moving patch removed, for rendering rigid
    /// exemplars off a configuration that carries one.
    pub fn without_patch(&self) -> Scene {
        Scene {
            moving_patch: None,
            ..self.clone()
        }
    }

    /// Patch center at the scene's current instant.
    fn patch_position(&self) -> Option<(f64, f64)> {
        self.moving_patch
            .as_ref()
            .map(|p| p.position_at(self.time_s))
    }

    /// Axis-aligned bounding box of the patch projected into the image of a
    /// camera at `pose`, as half-open pixel bounds, or `None` when the scene
    /// has no patch or the patch is not fully in front of the camera.
    pub fn patch_pixel_box(
        &self,
        pose: &PoseSE3,
        intrinsics: &CameraIntrinsics,
    ) -> Option<(f64, f64, f64, f64)> {
        let patch = self.moving_patch.as_ref()?;
        let position = self.patch_position().expect("patch is present");
        let world_to_cam = pose.inverse();
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let corner = [
                position.0 + sx * patch.half_extent_m.0,
                position.1 + sy * patch.half_extent_m.1,
                patch.depth_m,
            ];
            let cam = world_to_cam.transform_point(corner);
            let (px, py) = intrinsics.project(cam)?;
            min_x = min_x.min(px);
            min_y = min_y.min(py);
            max_x = max_x.max(px);
            max_y = max_y.max(py);
        }
        Some((min_x, min_y, max_x, max_y))
    }
}

/// Renders the scene seen by a camera at `pose` (camera-to-world) with the
/// given intrinsics, producing a `size` by `size` image and its depth map.
///
/// Every pixel ray is intersected with each plane; the nearest hit in front
/// of the camera wins and its texture value is sampled bilinearly. Pixels
/// that hit nothing come out black with an invalid depth, and a camera that
/// sees no surface at all is a render error.
pub fn render_frame(
    scene: &Scene,
    pose: &PoseSE3,
    intrinsics: &CameraIntrinsics,
    size: usize,
) -> Result<(Image, DepthMap)> {
    if size == 0 {
        return Err(Error::InvalidDimension(
            "render size must be positive".to_string(),
        ));
    }
    let rotation = pose.rotation();
    let origin = pose.translation();
    let mut pixels = vec![0.0; size * size];
    let mut depth = vec![0.0; size * size];
    let mut valid = vec![false; size * size];
    let mut hits = 0usize;
    for row in 0..size {
        for col in 0..size {
            let ray = intrinsics.back_project(col as f64, row as f64, 1.0);
            let dir = rotate(&rotation, ray);
            let mut best: Option<(f64, f64)> = None;
            for layer in &scene.layers {
                let Some((range, value)) = intersect_plane(
                    scene,
                    origin,
                    dir,
                    layer.depth_m,
                    layer.half_extent_m,
                    None,
                    layer.texture_offset,
                    intrinsics,
                ) else {
                    continue;
                };
                if best.is_none_or(|(r, _)| range < r) {
                    best = Some((range, value));
                }
            }
            if let Some(patch) = &scene.moving_patch {
                let hit = intersect_plane(
                    scene,
                    origin,
                    dir,
                    patch.depth_m,
                    Some(patch.half_extent_m),
                    scene.patch_position(),
                    patch.texture_offset,
                    intrinsics,
                );
                if let Some((range, value)) = hit {
                    if best.is_none_or(|(r, _)| range < r) {
                        best = Some((range, value));
                    }
                }
            }
            let idx = row * size + col;
            if let Some((range, value)) = best {
                pixels[idx] = value;
                depth[idx] = range;
                valid[idx] = true;
                hits += 1;
            }
        }
    }
    if hits == 0 {
        return Err(Error::Render(
            "no scene surface is visible from this pose".to_string(),
        ));
    }
    let image = Image::new(size, size, pixels)?;
    let depth = DepthMap::new(size, size, depth, valid)?;
    Ok((image, depth))
}

/// Intersects a world ray with the plane `z = depth_m` and samples the scene
/// texture there. Returns the camera-frame depth and the texture value, or
/// `None` when the ray misses (parallel, behind the camera, or outside a
/// finite extent). Since the ray direction has unit camera-frame z, the ray
/// parameter is the camera-frame depth.
#[allow(clippy::too_many_arguments)]
fn intersect_plane(
    scene: &Scene,
    origin: [f64; 3],
    dir: [f64; 3],
    depth_m: f64,
    half_extent: Option<(f64, f64)>,
    center: Option<(f64, f64)>,
    texture_offset: (f64, f64),
    intrinsics: &CameraIntrinsics,
) -> Option<(f64, f64)> {
    const MIN_RANGE: f64 = 1e-6;
    if dir[2].abs() < 1e-12 {
        return None;
    }
    let range = (depth_m - origin[2]) / dir[2];
    if !(range.is_finite() && range > MIN_RANGE) {
        return None;
    }
    let x = origin[0] + range * dir[0];
    let y = origin[1] + range * dir[1];
    let (cx, cy) = center.unwrap_or((0.0, 0.0));
    if let Some((hx, hy)) = half_extent {
        if (x - cx).abs() > hx || (y - cy).abs() > hy {
            return None;
        }
    }
    let texels_per_meter_x = intrinsics.fx / depth_m;
    let texels_per_meter_y = intrinsics.fy / depth_m;
    let tx = (x - cx) * texels_per_meter_x + texture_offset.0;
    let ty = (y - cy) * texels_per_meter_y + texture_offset.1;
    Some((range, sample_texture(&scene.texture, tx, ty)))
}

fn rotate(r: &[f64; 9], v: [f64; 3]) -> [f64; 3] {
    [
        r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
        r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
        r[6] * v[0] + r[7] * v[1] + r[8] * v[2],
    ]
}

/// Bilinear texture lookup with zero outside the texture.
fn sample_texture(texture: &Image, x: f64, y: f64) -> f64 {
    let (h, w) = (texture.height() as isize, texture.width() as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (xi, yi) = (x0 + dx, y0 + dy);
            if xi >= 0 && xi < w && yi >= 0 && yi < h {
                acc += wy * wx * texture.at(yi as usize, xi as usize);
            }
        }
    }
    acc
}

/// Mean absolute difference between `source` and `recon` over pixels whose
/// flow is valid and lands with full bilinear support inside the image.
///
/// This is the quality gate for rendered exemplars: warping the second frame
/// of a rigid pair back through the ground-truth flow must reproduce the
/// first frame closely. Fails when no pixel survives the mask.
pub fn warp_consistency_error(
    source: &Image,
    recon: &Image,
    flow: &crate::geometry::FlowField,
) -> Result<f64> {
    if source.height() != recon.height()
        || source.width() != recon.width()
        || source.height() != flow.height()
        || source.width() != flow.width()
    {
        return Err(Error::Shape(format!(
            "consistency check needs matching shapes, got {}x{}, {}x{}, and {}x{}",
            source.height(),
            source.width(),
            recon.height(),
            recon.width(),
            flow.height(),
            flow.width()
        )));
    }
    let (h, w) = (source.height(), source.width());
    let mut total = 0.0;
    let mut count = 0usize;
    for row in 0..h {
        for col in 0..w {
            let Some((u, v)) = flow.at(row, col) else {
                continue;
            };
            let x = col as f64 + u;
            let y = row as f64 + v;
            if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
                continue;
            }
            total += (source.at(row, col) - recon.at(row, col)).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Contract(
            "no pixel survived the consistency mask".to_string(),
        ));
    }
    Ok(total / count as f64)
}

/// Generates a smooth band-limited texture: a sum of sinusoidal plane waves
/// with wavelengths between 16 and 48 texels, centered on one half and kept
/// strictly inside (0, 1) so bilinear resampling stays accurate.
fn make_texture(rng: &mut ChaCha8Rng, size: usize) -> Result<Image> {
    const WAVES: usize = 6;
    let mut components = Vec::with_capacity(WAVES);
    for _ in 0..WAVES {
        let wavelength = rng.random_range(16.0..48.0);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let kx = angle.cos() / wavelength * std::f64::consts::TAU;
        let ky = angle.sin() / wavelength * std::f64::consts::TAU;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        components.push((kx, ky, phase));
    }
    let amplitude = 0.35 / WAVES as f64;
    Image::from_fn(size, size, |row, col| {
        let (x, y) = (col as f64, row as f64);
        let mut v = 0.5;
        for &(kx, ky, phase) in &components {
            v += amplitude * (kx * x + ky * y + phase).sin();
        }
        v
    })
}
