//! Shared scalar kernels for grid generation and bilinear sampling.
//!
//! These are generic over the float type so the differentiable ops and the
//! plain geometry API run the exact same arithmetic.

use num_traits::Float;

/// Normalized x coordinate of column `c` in an image `w` pixels wide
/// (align-corners: column 0 maps to -1, column w-1 maps to +1).
#[inline]
pub(crate) fn norm_coord<T: Float>(index: usize, extent: usize) -> T {
    let two = T::one() + T::one();
    two * T::from(index).unwrap() / T::from(extent - 1).unwrap() - T::one()
}

/// Pixel coordinate of a normalized coordinate (inverse of [`norm_coord`]).
#[inline]
pub(crate) fn denorm_coord<T: Float>(x: T, extent: usize) -> T {
    let half = T::from(0.5).unwrap();
    (x + T::one()) * half * T::from(extent - 1).unwrap()
}

/// Denormalization with an exactness guard: a result within a few ulps of
/// an integer pixel snaps to it. Normalizing a pixel index and mapping it
/// back accumulates rounding that the raw formula cannot shed, so without
/// the snap a mathematically identity warp would blend neighboring pixels.
#[inline]
pub(crate) fn pixel_coord<T: Float>(x: T, extent: usize) -> T {
    let xp = denorm_coord(x, extent);
    let nearest = xp.round();
    let band = T::epsilon() * T::from(8 * extent).unwrap();
    if (xp - nearest).abs() <= band {
        nearest
    } else {
        xp
    }
}

/// Regular grid of normalized (x, y) pairs, row-major interleaved.
pub(crate) fn base_grid_coords<T: Float>(height: usize, width: usize) -> Vec<T> {
    let xs: Vec<T> = (0..width).map(|c| norm_coord(c, width)).collect();
    let mut coords = Vec::with_capacity(height * width * 2);
    for r in 0..height {
        let y = norm_coord(r, height);
        for &x in &xs {
            coords.push(x);
            coords.push(y);
        }
    }
    coords
}

/// Applies a 2x3 affine matrix [t11 t12 t13; t21 t22 t23] to the base grid
/// of the given extent, producing source coordinates.
pub(crate) fn affine_grid_coords<T: Float>(theta: &[T], height: usize, width: usize) -> Vec<T> {
    debug_assert_eq!(theta.len(), 6);
    let xs: Vec<T> = (0..width).map(|c| norm_coord(c, width)).collect();
    let mut coords = Vec::with_capacity(height * width * 2);
    for r in 0..height {
        let y = norm_coord(r, height);
        for &x in &xs {
            coords.push(theta[0] * x + theta[1] * y + theta[2]);
            coords.push(theta[3] * x + theta[4] * y + theta[5]);
        }
    }
    coords
}

/// Value of `image` (h x w, row-major) at integer pixel (r, c), where
/// anything outside the image reads as zero.
#[inline]
fn texel<T: Float>(image: &[T], h: usize, w: usize, r: i64, c: i64) -> T {
    if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
        T::zero()
    } else {
        image[r as usize * w + c as usize]
    }
}

/// Bilinear sample of a single-channel image at one normalized coordinate.
///
/// Out-of-bounds neighbor pixels contribute zero, so the sampled field decays
/// linearly to zero in a one-pixel band around the image and is exactly zero
/// beyond it.
#[inline]
pub(crate) fn bilinear_at<T: Float>(image: &[T], h: usize, w: usize, x: T, y: T) -> T {
    let xp = pixel_coord(x, w);
    let yp = pixel_coord(y, h);
    let x0 = xp.floor();
    let y0 = yp.floor();
    let fx = xp - x0;
    let fy = yp - y0;
    // A NaN coordinate poisons the sample, so a diverging grid surfaces in
    // the loss rather than panicking in the cast below.
    if x0.is_nan() || y0.is_nan() {
        return T::nan();
    }
    // Far outside the padded band every corner is zero; also guards the
    // float->i64 cast against overflow.
    let limit = T::from(1u64 << 62).unwrap();
    if x0.abs() > limit || y0.abs() > limit {
        return T::zero();
    }
    let x0 = x0.to_i64().unwrap();
    let y0 = y0.to_i64().unwrap();
    let v00 = texel(image, h, w, y0, x0);
    let v01 = texel(image, h, w, y0, x0 + 1);
    let v10 = texel(image, h, w, y0 + 1, x0);
    let v11 = texel(image, h, w, y0 + 1, x0 + 1);
    let one = T::one();
    v00 * (one - fx) * (one - fy) + v01 * fx * (one - fy) + v10 * (one - fx) * fy + v11 * fx * fy
}

/// Samples `image` at every (x, y) pair of `grid` (interleaved, `n` pairs),
/// writing `n` output values.
pub(crate) fn bilinear_gather<T: Float>(
    image: &[T],
    h: usize,
    w: usize,
    grid: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(grid.len(), out.len() * 2);
    for (i, o) in out.iter_mut().enumerate() {
        *o = bilinear_at(image, h, w, grid[2 * i], grid[2 * i + 1]);
    }
}

/// Gradient pieces of one bilinear sample: (d/dx_norm, d/dy_norm), plus the
/// four corner weights and indices for scattering into an image gradient.
#[allow(clippy::type_complexity)]
#[inline]
pub(crate) fn bilinear_backward_at<T: Float>(
    image: &[T],
    h: usize,
    w: usize,
    x: T,
    y: T,
) -> (T, T, [(i64, i64, T); 4]) {
    let xp = pixel_coord(x, w);
    let yp = pixel_coord(y, h);
    let x0 = xp.floor();
    let y0 = yp.floor();
    let fx = xp - x0;
    let fy = yp - y0;
    if x0.is_nan() || y0.is_nan() {
        return (T::nan(), T::nan(), [(i64::MIN, i64::MIN, T::zero()); 4]);
    }
    let limit = T::from(1u64 << 62).unwrap();
    if x0.abs() > limit || y0.abs() > limit {
        return (T::zero(), T::zero(), [(i64::MIN, i64::MIN, T::zero()); 4]);
    }
    let x0 = x0.to_i64().unwrap();
    let y0 = y0.to_i64().unwrap();
    let v00 = texel(image, h, w, y0, x0);
    let v01 = texel(image, h, w, y0, x0 + 1);
    let v10 = texel(image, h, w, y0 + 1, x0);
    let v11 = texel(image, h, w, y0 + 1, x0 + 1);
    let one = T::one();
    let half = T::from(0.5).unwrap();
    // d(out)/d(xp) then chain through xp = (x+1)/2*(w-1).
    let dxp = (v01 - v00) * (one - fy) + (v11 - v10) * fy;
    let dyp = (v10 - v00) * (one - fx) + (v11 - v01) * fx;
    let dx = dxp * half * T::from(w - 1).unwrap();
    let dy = dyp * half * T::from(h - 1).unwrap();
    let corners = [
        (y0, x0, (one - fx) * (one - fy)),
        (y0, x0 + 1, fx * (one - fy)),
        (y0 + 1, x0, (one - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ];
    (dx, dy, corners)
}
