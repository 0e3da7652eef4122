//! Bilinear image sampling.

use crate::error::{Error, Result};
use crate::geometry::grid::SampleGrid;
use crate::geometry::image::Image;
use crate::geometry::kernel;

/// Samples `image` at each grid coordinate with bilinear interpolation.
///
/// The output has the grid's extents. Each grid entry is denormalized with
/// align-corners (so x = -1 reads column 0 and x = +1 reads the last
/// column), and the four surrounding pixels are blended. Neighbors outside
/// the image contribute zero, which tapers samples to zero across a
/// one-pixel border band instead of clamping them.
pub fn bilinear_sample(image: &Image, grid: &SampleGrid) -> Result<Image> {
    let (h, w) = (image.height(), image.width());
    let (gh, gw) = (grid.height(), grid.width());
    let mut out = vec![0.0; gh * gw];
    kernel::bilinear_gather(image.data(), h, w, grid.coords(), &mut out);
    // Interpolation of in-range inputs cannot leave [0, 1]; clamp away the
    // few ulps of rounding slack so the Image constructor stays strict.
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(gh, gw, out).map_err(|e| Error::Contract(format!("sampled image invalid: {e}")))
}
