//! Reconstruction residuals and blob-based anomaly regions.

use crate::data::PixelBox;
use crate::error::{Error, Result};
use crate::geometry::Image;

/// Residual magnitude that marks a pixel anomalous unless overridden.
pub const BLOB_THRESHOLD: f64 = 0.1;

/// Smallest connected component reported as a region unless overridden.
pub const BLOB_MIN_SIZE: usize = 16;

/// Per-pixel absolute reconstruction error over a source image.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ResidualMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major residual values, each in [0, 1].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Residual at (row, col). Panics when out of bounds.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.height && col < self.width, "pixel ({row}, {col}) out of bounds");
        self.values[row * self.width + col]
    }

    /// Mean residual inside a pixel box, and over its complement.
    pub fn split_means(&self, bounds: &PixelBox) -> (f64, f64) {
        let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.at(row, col);
                if bounds.contains(col, row) {
                    inside.0 += v;
                    inside.1 += 1;
                } else {
                    outside.0 += v;
                    outside.1 += 1;
                }
            }
        }
        (
            if inside.1 == 0 { 0.0 } else { inside.0 / inside.1 as f64 },
            if outside.1 == 0 { 0.0 } else { outside.0 / outside.1 as f64 },
        )
    }
}

/// Absolute difference between a reconstruction and the source it tried to
/// reproduce.
pub fn residual_map(source: &Image, reconstruction: &Image) -> Result<ResidualMap> {
    if source.height() != reconstruction.height() || source.width() != reconstruction.width() {
        return Err(Error::Shape(format!(
            "source is {}x{}, reconstruction is {}x{}",
            source.height(),
            source.width(),
            reconstruction.height(),
            reconstruction.width()
        )));
    }
    let values = source
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(s, r)| (r - s).abs())
        .collect();
    Ok(ResidualMap {
        height: source.height(),
        width: source.width(),
        values,
    })
}

/// One connected region of high residual.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRoi {
    /// Tight bounding box of the region.
    pub bounds: PixelBox,
    /// Number of pixels in the region (not in the box).
    pub pixel_count: usize,
    /// Mean residual over the region's pixels.
    pub mean_residual: f64,
    /// Width of the bounding box in pixels.
    pub x_extent: usize,
    /// Height of the bounding box in pixels.
    pub y_extent: usize,
}

/// Finds 4-connected components of pixels whose residual exceeds
/// `threshold`, dropping components smaller than `min_size` pixels.
/// Regions are reported in row-major order of their first pixel.
///
/// The per-region x and y extents let callers separate compact blobs
/// (moving objects) from long thin bands (depth edges and occlusions).
pub fn anomaly_blobs(
    residual: &ResidualMap,
    threshold: f64,
    min_size: usize,
) -> Result<Vec<AnomalyRoi>> {
    if !(0.0..1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (h, w) = (residual.height(), residual.width());
    let hot = |row: usize, col: usize| residual.at(row, col) > threshold;
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();

    for start in 0..h * w {
        if seen[start] || !hot(start / w, start % w) {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (row, col) = (i / w, i % w);
            let mut visit = |r: usize, c: usize| {
                let j = r * w + c;
                if !seen[j] && hot(r, c) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if row > 0 {
                visit(row - 1, col);
            }
            if row + 1 < h {
                visit(row + 1, col);
            }
            if col > 0 {
                visit(row, col - 1);
            }
            if col + 1 < w {
                visit(row, col + 1);
            }
        }
        if pixels.len() < min_size {
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let mut sum = 0.0;
        for &i in &pixels {
            let (row, col) = (i / w, i % w);
            x0 = x0.min(col);
            y0 = y0.min(row);
            x1 = x1.max(col + 1);
            y1 = y1.max(row + 1);
            sum += residual.values[i];
        }
        regions.push(AnomalyRoi {
            bounds: PixelBox { x0, y0, x1, y1 },
            pixel_count: pixels.len(),
            mean_residual: sum / pixels.len() as f64,
            x_extent: x1 - x0,
            y_extent: y1 - y0,
        });
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map_from(height: usize, width: usize, values: Vec<f64>) -> ResidualMap {
        ResidualMap { height, width, values }
    }

    #[test]
    fn identical_images_leave_no_residual() {
        let image = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0).unwrap();
        let map = residual_map(&image, &image.clone()).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_difference_shows_up_alone() {
        let source = Image::zeros(3, 3).unwrap();
        let recon = Image::from_fn(3, 3, |r, c| if (r, c) == (1, 2) { 0.25 } else { 0.0 }).unwrap();
        let map = residual_map(&source, &recon).unwrap();
        assert_eq!(map.at(1, 2), 0.25);
        assert_eq!(map.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn residuals_match_the_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let source = Image::from_fn(5, 6, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let recon = Image::from_fn(5, 6, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let map = residual_map(&source, &recon).unwrap();
        for r in 0..5 {
            for c in 0..6 {
                assert_eq!(map.at(r, c), (recon.at(r, c) - source.at(r, c)).abs());
            }
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Image::zeros(3, 3).unwrap();
        let b = Image::zeros(3, 4).unwrap();
        assert!(matches!(residual_map(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_residual_yields_no_regions() {
        let map = map_from(8, 8, vec![0.0; 64]);
        assert!(anomaly_blobs(&map, BLOB_THRESHOLD, BLOB_MIN_SIZE).unwrap().is_empty());
    }

    #[test]
    fn one_square_yields_one_region_with_its_extents() {
        let mut values = vec![0.0; 100];
        for row in 2..7 {
            for col in 3..8 {
                values[row * 10 + col] = 0.5;
            }
        }
        let map = map_from(10, 10, values);
        let regions = anomaly_blobs(&map, 0.1, 16).unwrap();
        assert_eq!(regions.len(), 1);
        let roi = &regions[0];
        assert_eq!((roi.x_extent, roi.y_extent), (5, 5));
        assert_eq!(roi.pixel_count, 25);
        assert_eq!(roi.bounds, PixelBox { x0: 3, y0: 2, x1: 8, y1: 7 });
        assert!((roi.mean_residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_squares_stay_separate_under_4_connectivity() {
        // Two 5x5 squares sharing only the corner at (5, 5).
        let mut values = vec![0.0; 144];
        for row in 0..5 {
            for col in 0..5 {
                values[row * 12 + col] = 0.9;
                values[(row + 5) * 12 + col + 5] = 0.9;
            }
        }
        let map = map_from(12, 12, values);
        let regions = anomaly_blobs(&map, 0.1, 16).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].bounds, PixelBox { x0: 0, y0: 0, x1: 5, y1: 5 });
        assert_eq!(regions[1].bounds, PixelBox { x0: 5, y0: 5, x1: 10, y1: 10 });
    }

    #[test]
    fn small_components_are_filtered_but_threshold_is_strict() {
        let mut values = vec![0.0; 64];
        values[0] = 0.5;
        values[1] = 0.5;
        values[10] = 0.1;
        let map = map_from(8, 8, values);
        assert!(anomaly_blobs(&map, 0.1, 3).unwrap().is_empty(), "2 hot pixels < min 3");
        let regions = anomaly_blobs(&map, 0.1, 2).unwrap();
        assert_eq!(regions.len(), 1, "exactly-threshold pixels do not count");
        assert_eq!(regions[0].pixel_count, 2);
    }

    #[test]
    fn regions_partition_the_hot_pixel_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w) = (20, 20);
        let values: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let map = map_from(h, w, values);
        let threshold = 0.7;
        let regions = anomaly_blobs(&map, threshold, 1).unwrap();

        // Independent labeling oracle: repeated label propagation until no
        // pair of 4-neighbors disagrees.
        let mut labels: Vec<Option<usize>> = (0..h * w)
            .map(|i| (map.values()[i] > threshold).then_some(i))
            .collect();
        loop {
            let mut changed = false;
            for row in 0..h {
                for col in 0..w {
                    let i = row * w + col;
                    let Some(mut best) = labels[i] else { continue };
                    for (nr, nc) in [(row.wrapping_sub(1), col), (row + 1, col), (row, col.wrapping_sub(1)), (row, col + 1)] {
                        if nr < h && nc < w {
                            if let Some(l) = labels[nr * w + nc] {
                                best = best.min(l);
                            }
                        }
                    }
                    if labels[i] != Some(best) {
                        labels[i] = Some(best);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut oracle_counts = std::collections::BTreeMap::new();
        for l in labels.iter().flatten() {
            *oracle_counts.entry(*l).or_insert(0usize) += 1;
        }

        assert_eq!(regions.len(), oracle_counts.len());
        let mut got: Vec<usize> = regions.iter().map(|r| r.pixel_count).collect();
        let mut want: Vec<usize> = oracle_counts.values().copied().collect();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want);

        let hot_total = map.values().iter().filter(|&&v| v > threshold).count();
        let region_total: usize = regions.iter().map(|r| r.pixel_count).sum();
        assert_eq!(region_total, hot_total, "min_size 1 must cover every hot pixel");
    }

    #[test]
    fn bad_thresholds_are_rejected() {
        let map = map_from(4, 4, vec![0.0; 16]);
        assert!(anomaly_blobs(&map, 0.0, 1).is_err());
        assert!(anomaly_blobs(&map, 1.0, 1).is_err());
        assert!(anomaly_blobs(&map, -0.2, 1).is_err());
    }

    #[test]
    fn patch_exemplars_concentrate_residual_inside_their_box() {
        use crate::data::{build_dataset, DatasetConfig, MovingPatch};
        use crate::geometry::{bilinear_sample, flow_to_grid};

        let mut config = DatasetConfig {
            image_size: 24,
            exemplar_count: 6,
            anomaly_count: 2,
            focal_px: 24.0,
            ..DatasetConfig::default()
        };
        config.scene.texture_size = 256;
        config.trajectory.duration_s = 12.0;
        config.scene.moving_patch = Some(MovingPatch {
            depth_m: 1.5,
            center_m: (0.0, 0.0),
            half_extent_m: (0.22, 0.22),
            orbit_radius_m: 0.25,
            orbit_period_s: 1.0,
            texture_offset: (40.0, 40.0),
        });
        let dir = tempfile::tempdir().expect("temp dir");
        let dataset = build_dataset(11, &config, dir.path()).unwrap();

        let mut checked = 0;
        for exemplar in &dataset.exemplars {
            let Some(bounds) = exemplar.anomaly_box else { continue };
            let recon = bilinear_sample(&exemplar.target, &flow_to_grid(&exemplar.flow)).unwrap();
            let map = residual_map(&exemplar.source, &recon).unwrap();
            let (inside, outside) = map.split_means(&bounds);
            assert!(
                inside >= 3.0 * outside,
                "exemplar {}: inside {inside} vs outside {outside}",
                exemplar.id
            );
            checked += 1;
        }
        assert_eq!(checked, 2);
    }
}
