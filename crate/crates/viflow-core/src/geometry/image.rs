//! Grayscale images and depth maps.

use crate::error::{Error, Result};

/// Single-channel image, row-major, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major pixel data.
    ///
    /// Fails unless `data.len() == height * width`, both extents are at least
    /// 2, and every value is finite and in [0, 1].
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimension(format!(
                "image extents must be at least 2x2, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "pixel {i} is {v}, expected a finite value in [0, 1]"
                )));
            }
        }
        Ok(Self { height, width, data })
    }

    /// All-zero image.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major pixel data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Intensity at (row, col). Panics when out of bounds.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.height && col < self.width, "pixel ({row}, {col}) out of bounds");
        self.data[row * self.width + col]
    }
}

/// Per-pixel scene depth along the camera z axis, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map from row-major depth values and a validity mask.
    ///
    /// Every valid entry must be finite and strictly positive; invalid
    /// entries may hold anything.
    pub fn new(height: usize, width: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimension(format!(
                "depth map extents must be at least 2x2, got {height}x{width}"
            )));
        }
        if depth.len() != height * width || valid.len() != height * width {
            return Err(Error::Shape(format!(
                "depth/valid lengths {}/{} do not match {height}x{width}",
                depth.len(),
                valid.len()
            )));
        }
        for i in 0..depth.len() {
            if valid[i] && (!depth[i].is_finite() || depth[i] <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "valid depth at {i} is {}, expected finite and positive",
                    depth[i]
                )));
            }
        }
        Ok(Self { height, width, depth, valid })
    }

    /// Depth map where every pixel is valid.
    pub fn dense(height: usize, width: usize, depth: Vec<f64>) -> Result<Self> {
        let valid = vec![true; depth.len()];
        Self::new(height, width, depth, valid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at (row, col) if that pixel is valid.
    pub fn at(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.depth[i])
    }
}

/// Crops the centered `out_height` x `out_width` window of an image.
///
/// The window origin is `floor((extent - out) / 2)` on each axis, so an
/// off-by-one surplus leans toward the top-left.
pub fn center_crop(image: &Image, out_height: usize, out_width: usize) -> Result<Image> {
    if out_height > image.height() || out_width > image.width() {
        return Err(Error::InvalidDimension(format!(
            "crop {out_height}x{out_width} exceeds image {}x{}",
            image.height(),
            image.width()
        )));
    }
    let r0 = (image.height() - out_height) / 2;
    let c0 = (image.width() - out_width) / 2;
    Image::from_fn(out_height, out_width, |r, c| image.at(r0 + r, c0 + c))
}
