//! Dense row-major tensors.

use crate::autodiff::scalar::Scalar;
use crate::error::{Error, Result};

/// Dense tensor with row-major data and explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, checking that the data length matches the shape
    /// product and every value is finite.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        Self::check_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?} ({numel} elements)",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "tensor values must be finite".to_string(),
            ));
        }
        Ok(Self { shape, data })
    }

    fn check_shape(shape: &[usize]) -> Result<()> {
        if shape.is_empty() {
            return Err(Error::Shape("tensor rank must be at least 1".to_string()));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        Ok(())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    /// All-zero tensor.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        Self::check_shape(&shape)?;
        let numel = shape.iter().product();
        Ok(Self { shape, data: vec![T::zero(); numel] })
    }

    /// Tensor filled with one value.
    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        Self::check_shape(&shape)?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter("fill value must be finite".to_string()));
        }
        let numel = shape.iter().product();
        Ok(Self { shape, data: vec![value; numel] })
    }

    /// Rank-1 single-element tensor.
    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Same data under a new shape with equal element count.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        Self::check_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?} ({numel} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    /// Elementwise conversion to another scalar type via f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Adds `other` into `self` elementwise. Panics on shape mismatch
    /// (internal accumulation only runs on matched shapes).
    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "accumulation shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Largest absolute value, zero for the empty product.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch_and_zero_extents() {
        assert!(Tensor::new(vec![2, 3], vec![0.0f64; 5]).is_err());
        assert!(Tensor::<f64>::zeros(vec![2, 0]).is_err());
        assert!(Tensor::<f64>::zeros(Vec::<usize>::new()).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(Tensor::new(vec![2], vec![1.0f64, f64::INFINITY]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0f64, f64::NAN]).is_err());
    }

    #[test]
    fn reshape_preserves_data_and_checks_count() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let r = t.reshaped(vec![3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(vec![4, 2]).is_err());
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let t = Tensor::new(vec![3], vec![0.5f32, -1.25, 3.0]).unwrap();
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(back, t);
    }
}
