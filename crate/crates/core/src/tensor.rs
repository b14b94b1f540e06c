//! Dense row-major f32 tensors.
//!
//! Values are 32-bit floats everywhere; reductions accumulate in 64-bit before
//! casting back. There is no broadcasting beyond explicit scalar ops; every
//! operation checks shapes at its boundary and fails fast on mismatch.

use crate::error::{Error, Result};

/// An n-dimensional value in row-major order, optionally carrying a gradient
/// buffer of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Builds a tensor from shape and data. The element count must match the
    /// shape product and every value must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::dimension(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::dimension(format!(
                "shape {shape:?} wants {expect} values, got {}",
                data.len()
            )));
        }
        let t = Tensor { shape, data, requires_grad: false, grad: None };
        t.check_finite("new")?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; n], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// True when this tensor holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f32> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::dimension(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Errors if any element is NaN or infinite; `ctx` names the producing op.
    pub fn check_finite(&self, ctx: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite value {v} at flat index {i} after {ctx}"
                )));
            }
        }
        Ok(())
    }

    /// Accumulates `g` into the gradient buffer, allocating zeros on first use.
    pub fn accumulate_grad(&mut self, g: &[f32]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::dimension(format!(
                "gradient length {} does not match tensor length {}",
                g.len(),
                self.data.len()
            )));
        }
        let buf = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (b, &v) in buf.iter_mut().zip(g) {
            *b += v;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Index of the largest value; ties break to the lowest index.
    pub fn argmax_row(row: &[f32]) -> usize {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Checks that two shapes are identical, naming both on mismatch.
pub fn check_same_shape(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::dimension(format!(
            "{op}: shape {a:?} vs {b:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f32::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f32::INFINITY]).is_err());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0]).unwrap();
        t.accumulate_grad(&[0.5, -1.0]).unwrap();
        assert_eq!(t.grad.as_deref(), Some(&[1.5, 0.0][..]));
        t.zero_grad();
        assert!(t.grad.is_none());
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        assert_eq!(Tensor::argmax_row(&[0.5, 0.5]), 0);
        assert_eq!(Tensor::argmax_row(&[0.1, 0.7, 0.7]), 1);
    }
}
