//! Dense row-major `f64` tensors, a dynamic reverse-mode tape over them, and a
//! central-difference gradient checker.
//!
//! Tensors are plain values. Every differentiable computation in the crate is
//! recorded on a [`Tape`], which is rebuilt for each example because session
//! graphs change topology from one example to the next.

mod check;
mod tape;

pub use check::{grad_check, GradCheck};
pub use tape::{BinaryOp, Gradients, Tape, UnaryOp, Var};

use crate::error::{Error, Result};

/// Norms at or below this are rejected by the normalizing ops.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::Dimension {
                op: "transpose",
                left: self.shape.clone(),
                right: vec![],
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::matrix(n, m, out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x / ||x||`, failing when the norm is at or below [`NORM_EPS`].
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.param(x);
    let y = tape.l2_normalize(v)?;
    Ok(tape.value(y).clone())
}

/// `exp(tau * x_j) / sum_k exp(tau * x_k)` with max subtraction.
pub fn softmax_scaled(logits: &Tensor, tau: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.param(logits);
    let y = tape.softmax_scaled(v, tau)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn annihilating_matmul() {
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap(), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] vs [2, 3]"), "{err}");
    }

    #[test]
    fn data_length_must_match_shape() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn normalize_three_four_five() {
        let y = l2_normalize(&Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-15);
        assert!((y.data()[1] - 0.8).abs() < 1e-15);
        let again = l2_normalize(&y).unwrap();
        assert!(again.max_abs_diff(&y) < 1e-15);
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        let err = l2_normalize(&Tensor::vector(vec![0.0, 1e-13])).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
    }

    #[test]
    fn normalize_is_scale_invariant() {
        let x = Tensor::vector(vec![0.3, -1.7, 2.2, 0.01]);
        let base = l2_normalize(&x).unwrap();
        for c in [2.0, 10.0, 1000.0] {
            let scaled = Tensor::vector(x.data().iter().map(|v| v * c).collect());
            assert!(l2_normalize(&scaled).unwrap().max_abs_diff(&base) <= 1e-12);
        }
    }

    #[test]
    fn softmax_examples() {
        let y = softmax_scaled(&Tensor::vector(vec![0.0, 0.0]), 1.0).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);

        let y = softmax_scaled(&Tensor::vector(vec![1.0, 0.0]), 12.0).unwrap();
        let e = (-12.0f64).exp();
        assert!((y.data()[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((y.data()[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((y.data()[0] - 0.99999386).abs() < 1e-8);
        assert!((y.data()[1] - 6.1442e-6).abs() < 1e-9);
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = Tensor::vector(vec![0.2, -0.5, 0.9, 0.0]);
        let base = softmax_scaled(&x, 12.0).unwrap();
        for c in [-3.0, 0.5, 100.0] {
            let shifted = Tensor::vector(x.data().iter().map(|v| v + c).collect());
            assert!(softmax_scaled(&shifted, 12.0).unwrap().max_abs_diff(&base) <= 1e-12);
        }
    }
}
