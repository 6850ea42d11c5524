use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};

/// Affine output layer `w·h + b`. No activation is applied here; the
/// classification head runs softmax on top of it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut p = Self::zeros(in_dim, out_dim);
        p.w.iter_mut().for_each(|w| *w = rng.random_range(-s..=s));
        p
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.len() != self.out_dim() {
            return Err(Error::dim("dense bias", self.out_dim(), self.b.len()));
        }
        if !self.w.iter().chain(self.b.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dense parameters".into()));
        }
        Ok(())
    }
}

pub fn dense_forward(params: &DenseParams, h: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if h.len() != params.in_dim() {
        return Err(Error::dim("dense input", params.in_dim(), h.len()));
    }
    Ok(params.w.dot(&h) + &params.b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_and_bias_only() {
        let p = DenseParams {
            w: Array2::eye(3),
            b: Array1::zeros(3),
        };
        let h = array![0.1, -2.0, 3.5];
        assert_eq!(dense_forward(&p, h.view()).unwrap(), h);

        let p = DenseParams {
            w: Array2::zeros((3, 2)),
            b: array![1.0, 2.0, 3.0],
        };
        assert_eq!(dense_forward(&p, array![9.0, -9.0].view()).unwrap(), array![1.0, 2.0, 3.0]);
    }

    #[test]
    fn small_matrix() {
        let p = DenseParams {
            w: array![[1.0, 2.0], [3.0, 4.0]],
            b: array![0.5, -0.5],
        };
        assert_eq!(dense_forward(&p, array![1.0, 1.0].view()).unwrap(), array![3.5, 6.5]);
        assert!(dense_forward(&p, array![1.0].view()).is_err());
    }
}
