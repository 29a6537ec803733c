//! Dense row-major tensor value type.

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Dense numeric array, row-major. Immutable after construction except for
/// the optimizer's in-place parameter update.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Contract(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::zero(); numel],
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// 1-D tensor from a slice.
    pub fn vector(data: &[S]) -> Self {
        Tensor {
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    /// 2-D tensor from flat row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar contents of a one-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Rows of a 2-D tensor (leading dimension; a 1-D tensor counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Size of the last dimension (the per-row width for 2-D tensors).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[S] {
        let d = self.cols();
        &self.data[i * d..(i + 1) * d]
    }

    /// Detect NaN/Inf; the error names the offending flat index.
    pub fn validate(&self, context: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::numeric(
                    context,
                    format!("non-finite value {v} at flat index {i}"),
                ));
            }
        }
        Ok(())
    }

    /// Width-converting copy (f32 <-> f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.as_f64())).collect(),
        }
    }

    /// Gather the given rows of a 2-D tensor into a new tensor.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor<S> {
        let d = self.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![indices.len(), d],
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_agreement_enforced() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn validate_flags_non_finite() {
        let t = Tensor::vector(&[1.0f32, f32::NAN]);
        let err = t.validate("test").unwrap_err();
        assert!(err.to_string().contains("flat index 1"));
        assert!(Tensor::vector(&[1.0f32, 2.0]).validate("test").is_ok());
    }

    #[test]
    fn cast_roundtrip() {
        let t = Tensor::vector(&[1.5f32, -2.25]);
        let back: Tensor<f32> = t.cast::<f64>().cast();
        assert_eq!(t, back);
    }

    #[test]
    fn gather_rows_picks_rows() {
        let t = Tensor::matrix(3, 2, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = t.gather_rows(&[2, 0]);
        assert_eq!(g.data(), &[5.0, 6.0, 1.0, 2.0]);
    }
}
