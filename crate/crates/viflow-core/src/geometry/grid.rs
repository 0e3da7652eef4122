//! Sampling grids, shift fields, and flow fields.
//!
//! Grids hold normalized coordinates in [-1, 1] with align-corners
//! conventions: column 0 is x = -1, column w-1 is x = +1, and likewise for
//! rows and y. A grid entry says where in the *source* image to read the
//! value for that output pixel.

use crate::error::{Error, Result};
use crate::geometry::kernel;

/// Parameters of a 2x3 affine warp, row-major:
/// `[t11, t12, t13, t21, t22, t23]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams(pub [f64; 6]);

impl AffineParams {
    /// The identity warp.
    pub fn identity() -> Self {
        Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    /// Fails when any parameter is non-finite.
    pub fn new(params: [f64; 6]) -> Result<Self> {
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "affine parameters must be finite".to_string(),
            ));
        }
        Ok(Self(params))
    }

    /// Maps a normalized target coordinate to its source coordinate.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let t = &self.0;
        (t[0] * x + t[1] * y + t[2], t[3] * x + t[4] * y + t[5])
    }
}

/// Per-pixel normalized source coordinates, row-major interleaved (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    height: usize,
    width: usize,
    coords: Vec<f64>,
}

impl SampleGrid {
    /// Builds a grid from interleaved (x, y) coordinates.
    ///
    /// Coordinates must be finite but may leave [-1, 1]; sampling treats
    /// out-of-range coordinates as reads from zero padding.
    pub fn new(height: usize, width: usize, coords: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimension(format!(
                "grid extents must be at least 2x2, got {height}x{width}"
            )));
        }
        if coords.len() != height * width * 2 {
            return Err(Error::Shape(format!(
                "grid coordinate length {} does not match {height}x{width}x2",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "grid coordinates must be finite".to_string(),
            ));
        }
        Ok(Self { height, width, coords })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved (x, y) coordinates, row-major.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Normalized source coordinate for output pixel (row, col).
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = 2 * (row * self.width + col);
        (self.coords[i], self.coords[i + 1])
    }
}

/// Per-pixel additive offsets in normalized coordinates, interleaved (dx, dy).
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftField {
    height: usize,
    width: usize,
    shifts: Vec<f64>,
}

impl ShiftField {
    /// Builds a shift field from interleaved (dx, dy) offsets.
    pub fn new(height: usize, width: usize, shifts: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimension(format!(
                "shift field extents must be at least 2x2, got {height}x{width}"
            )));
        }
        if shifts.len() != height * width * 2 {
            return Err(Error::Shape(format!(
                "shift length {} does not match {height}x{width}x2",
                shifts.len()
            )));
        }
        if shifts.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("shifts must be finite".to_string()));
        }
        Ok(Self { height, width, shifts })
    }

    /// All-zero shift field.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width * 2])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }
}

/// Per-pixel displacement in pixel units, interleaved (u, v), with a
/// validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    vectors: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    /// Builds a flow field from interleaved (u, v) vectors and a mask.
    ///
    /// Valid entries must be finite; invalid entries may hold anything.
    pub fn new(height: usize, width: usize, vectors: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimension(format!(
                "flow field extents must be at least 2x2, got {height}x{width}"
            )));
        }
        if vectors.len() != height * width * 2 || valid.len() != height * width {
            return Err(Error::Shape(format!(
                "flow vectors/valid lengths {}/{} do not match {height}x{width}",
                vectors.len(),
                valid.len()
            )));
        }
        for (i, &ok) in valid.iter().enumerate() {
            if ok && (!vectors[2 * i].is_finite() || !vectors[2 * i + 1].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "valid flow vector at pixel {i} is not finite"
                )));
            }
        }
        Ok(Self { height, width, vectors, valid })
    }

    /// Flow field where every pixel is valid.
    pub fn dense(height: usize, width: usize, vectors: Vec<f64>) -> Result<Self> {
        let valid = vec![true; height * width];
        Self::new(height, width, vectors, valid)
    }

    /// All-zero, all-valid flow.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::dense(height, width, vec![0.0; height * width * 2])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved (u, v) vectors, row-major.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Flow vector at (row, col) if that pixel is valid.
    pub fn at(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let i = row * self.width + col;
        self.valid[i].then(|| (self.vectors[2 * i], self.vectors[2 * i + 1]))
    }

    /// Count of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// The identity sampling grid: every output pixel reads its own location.
pub fn make_base_grid(height: usize, width: usize) -> Result<SampleGrid> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidDimension(format!(
            "grid extents must be at least 2x2, got {height}x{width}"
        )));
    }
    SampleGrid::new(height, width, kernel::base_grid_coords(height, width))
}

/// Sampling grid of an affine warp: each base-grid coordinate is pushed
/// through the 2x3 matrix.
pub fn affine_grid(theta: &AffineParams, height: usize, width: usize) -> Result<SampleGrid> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidDimension(format!(
            "grid extents must be at least 2x2, got {height}x{width}"
        )));
    }
    SampleGrid::new(height, width, kernel::affine_grid_coords(&theta.0, height, width))
}

/// Adds a shift field onto a sampling grid, pixel by pixel.
pub fn compose_shifts(grid: &SampleGrid, shift: &ShiftField) -> Result<SampleGrid> {
    if grid.height() != shift.height() || grid.width() != shift.width() {
        return Err(Error::Shape(format!(
            "grid {}x{} and shift {}x{} extents differ",
            grid.height(),
            grid.width(),
            shift.height(),
            shift.width()
        )));
    }
    let coords = grid
        .coords()
        .iter()
        .zip(shift.shifts())
        .map(|(g, s)| g + s)
        .collect();
    SampleGrid::new(grid.height(), grid.width(), coords)
}

/// Converts a sampling grid into pixel-space flow.
///
/// For output pixel (r, c) the flow vector is the grid coordinate mapped
/// back to pixels, minus (c, r). The result is dense: every pixel valid.
pub fn grid_to_flow(grid: &SampleGrid) -> FlowField {
    let (h, w) = (grid.height(), grid.width());
    let mut vectors = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = grid.at(r, c);
            vectors.push(kernel::pixel_coord(x, w) - c as f64);
            vectors.push(kernel::pixel_coord(y, h) - r as f64);
        }
    }
    FlowField::dense(h, w, vectors).expect("finite grid yields finite flow")
}

/// Converts pixel-space flow into a sampling grid (inverse of
/// [`grid_to_flow`]); ignores the validity mask.
pub fn flow_to_grid(flow: &FlowField) -> SampleGrid {
    let (h, w) = (flow.height(), flow.width());
    let mut coords = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            let i = 2 * (r * w + c);
            let u = flow.vectors()[i];
            let v = flow.vectors()[i + 1];
            coords.push(2.0 * (c as f64 + u) / (w as f64 - 1.0) - 1.0);
            coords.push(2.0 * (r as f64 + v) / (h as f64 - 1.0) - 1.0);
        }
    }
    SampleGrid::new(h, w, coords).expect("finite flow yields finite grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn base_grid_matches_linspace() {
        // 2x4: x runs over 4 evenly spaced stops from -1 to 1, y over 2.
        let grid = make_base_grid(2, 4).unwrap();
        let xs = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for r in 0..2 {
            for (c, &x) in xs.iter().enumerate() {
                let (gx, gy) = grid.at(r, c);
                assert_abs_diff_eq!(gx, x, epsilon = 1e-15);
                assert_abs_diff_eq!(gy, if r == 0 { -1.0 } else { 1.0 }, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn base_grid_corners_are_exact() {
        let grid = make_base_grid(7, 5).unwrap();
        assert_eq!(grid.at(0, 0), (-1.0, -1.0));
        assert_eq!(grid.at(0, 4), (1.0, -1.0));
        assert_eq!(grid.at(6, 0), (-1.0, 1.0));
        assert_eq!(grid.at(6, 4), (1.0, 1.0));
    }

    #[test]
    fn identity_affine_reproduces_base_grid() {
        let base = make_base_grid(5, 9).unwrap();
        let warped = affine_grid(&AffineParams::identity(), 5, 9).unwrap();
        assert_eq!(base, warped);
    }

    #[test]
    fn affine_grid_matches_pointwise_matrix_apply() {
        let theta = AffineParams::new([0.9, 0.1, -0.2, -0.05, 1.1, 0.3]).unwrap();
        let base = make_base_grid(4, 6).unwrap();
        let warped = affine_grid(&theta, 4, 6).unwrap();
        for r in 0..4 {
            for c in 0..6 {
                let (x, y) = base.at(r, c);
                let want = theta.apply(x, y);
                let got = warped.at(r, c);
                assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-15);
                assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pure_translation_theta_shifts_every_coordinate() {
        let theta = AffineParams::new([1.0, 0.0, 0.25, 0.0, 1.0, -0.5]).unwrap();
        let base = make_base_grid(3, 3).unwrap();
        let warped = affine_grid(&theta, 3, 3).unwrap();
        for (b, w) in base.coords().chunks(2).zip(warped.coords().chunks(2)) {
            assert_abs_diff_eq!(w[0], b[0] + 0.25, epsilon = 1e-15);
            assert_abs_diff_eq!(w[1], b[1] - 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn compose_adds_elementwise() {
        let grid = make_base_grid(3, 4).unwrap();
        let shifts: Vec<f64> = (0..24).map(|i| i as f64 * 0.01).collect();
        let shift = ShiftField::new(3, 4, shifts.clone()).unwrap();
        let composed = compose_shifts(&grid, &shift).unwrap();
        for i in 0..24 {
            assert_eq!(composed.coords()[i], grid.coords()[i] + shifts[i]);
        }
    }

    #[test]
    fn compose_with_zero_shift_is_identity() {
        let grid = affine_grid(&AffineParams::new([1.2, 0.0, 0.1, 0.0, 0.8, 0.0]).unwrap(), 4, 4).unwrap();
        let composed = compose_shifts(&grid, &ShiftField::zeros(4, 4).unwrap()).unwrap();
        assert_eq!(composed, grid);
    }

    #[test]
    fn compose_rejects_extent_mismatch() {
        let grid = make_base_grid(3, 4).unwrap();
        let shift = ShiftField::zeros(4, 3).unwrap();
        assert!(compose_shifts(&grid, &shift).is_err());
    }

    #[test]
    fn base_grid_flow_is_exactly_zero() {
        let flow = grid_to_flow(&make_base_grid(6, 8).unwrap());
        assert!(flow.vectors().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn known_normalized_shift_maps_to_pixel_flow() {
        // On a 5-wide image a +0.5 normalized x shift is
        // 0.5 / 2 * (5 - 1) = 1 pixel.
        let base = make_base_grid(5, 5).unwrap();
        let mut shifts = vec![0.0; 50];
        for s in shifts.chunks_mut(2) {
            s[0] = 0.5;
        }
        let grid = compose_shifts(&base, &ShiftField::new(5, 5, shifts).unwrap()).unwrap();
        let flow = grid_to_flow(&grid);
        for i in 0..25 {
            assert_abs_diff_eq!(flow.vectors()[2 * i], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(flow.vectors()[2 * i + 1], 0.0, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn flow_grid_round_trip(
            h in 2usize..7,
            w in 2usize..7,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vectors: Vec<f64> = (0..h * w * 2)
                .map(|_| rng.random_range(-3.0..3.0))
                .collect();
            let flow = FlowField::dense(h, w, vectors).unwrap();
            let back = grid_to_flow(&flow_to_grid(&flow));
            for (a, b) in flow.vectors().iter().zip(back.vectors()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn grid_flow_round_trip(
            h in 2usize..7,
            w in 2usize..7,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<f64> = (0..h * w * 2)
                .map(|_| rng.random_range(-1.5..1.5))
                .collect();
            let grid = SampleGrid::new(h, w, coords).unwrap();
            let back = flow_to_grid(&grid_to_flow(&grid));
            for (a, b) in grid.coords().iter().zip(back.coords()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
