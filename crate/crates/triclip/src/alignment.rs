//! Object-aware logit computation and fusion: similarity logits from
//! normalized features, attention pooling over object-centric features,
//! and the exact midpoint of the two logit families.

use crate::error::Result;
use crate::tensor::Tensor;

/// Per-level logits for one image (or a batch of rows).
pub struct LogitBundle {
    pub y0: Tensor,
    pub y1: Tensor,
    pub y0_oc: Tensor,
    pub y1_oc: Tensor,
    pub fused0: Tensor,
    pub fused1: Tensor,
    pub tau: f64,
}

/// tau * (v_hat . z_hat^T) with rows of both sides L2-normalized.
pub fn image_logits(v: &Tensor, z: &Tensor, tau: f64) -> Result<Tensor> {
    let v_hat = v.l2norm_rows()?;
    let z_hat = z.l2norm_rows()?;
    Ok(v_hat.matmul(&z_hat.transpose()?)?.scale(tau))
}

/// alpha = softmax(v . f_oc^T / sqrt(d)); v_oc = alpha . f_oc.
pub fn object_attention(v: &Tensor, f_oc: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, d) = v.rows_cols("object_attention")?;
    let scores = v
        .matmul(&f_oc.transpose()?)?
        .scale(1.0 / (d as f64).sqrt());
    let alpha = scores.softmax_rows()?;
    let v_oc = alpha.matmul(f_oc)?;
    Ok((alpha, v_oc))
}

/// Exact elementwise midpoint of the two logit families.
pub fn fuse(y: &Tensor, y_oc: &Tensor) -> Result<Tensor> {
    Ok(y.add(y_oc)?.scale(0.5))
}
