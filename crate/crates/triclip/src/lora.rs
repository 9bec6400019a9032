//! Low-rank adaptation of frozen projection matrices: W stays fixed,
//! the trainable update is alpha * B A with B zero-initialized so the
//! adapted model starts exactly at the base model.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Clone)]
pub struct LoraAdapter {
    /// r x d_in, Gaussian init.
    pub a: Tensor,
    /// d_out x r, zero init.
    pub b: Tensor,
    pub alpha: f64,
    pub rank: usize,
}

impl LoraAdapter {
    /// A ~ N(0, 1/d_in), B = 0.
    pub fn init(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Self {
        let a = Tensor::param_randn(vec![rank, d_in], (1.0 / d_in as f64).sqrt(), rng);
        let b = Tensor::param(vec![d_out, rank], vec![0.0; d_out * rank]).unwrap();
        LoraAdapter { a, b, alpha, rank }
    }

    pub fn trainable_params(&self) -> Vec<Tensor> {
        vec![self.a.clone(), self.b.clone()]
    }

    pub fn num_trainable(&self) -> usize {
        self.a.numel() + self.b.numel()
    }

    /// Rows of `x` are inputs: returns x W^T + alpha * (x A^T) B^T.
    pub fn forward(&self, x: &Tensor, w: &Tensor) -> Result<Tensor> {
        let base = x.matmul(&w.transpose()?)?;
        let low = x.matmul(&self.a.transpose()?)?.matmul(&self.b.transpose()?)?;
        base.add(&low.scale(self.alpha))
    }

    /// W + alpha * B A, as a constant.
    pub fn merge(&self, w: &Tensor) -> Result<Tensor> {
        let (d_out, d_in) = w.rows_cols("merge")?;
        let (br, _) = self.b.rows_cols("merge")?;
        if br != d_out {
            return Err(Error::ShapeMismatch {
                op: "merge",
                lhs: w.shape(),
                rhs: self.b.shape(),
            });
        }
        let ba = self.b.matmul(&self.a)?;
        let merged = w.add(&ba.scale(self.alpha))?;
        debug_assert_eq!(merged.shape(), vec![d_out, d_in]);
        Ok(merged.detach())
    }
}
