//! Training objectives: per-level binary cross entropy, a hierarchical
//! max-margin loss over projected class embeddings, and their weighted sum.

use crate::error::Result;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

/// One-layer affine projections for visual and text features.
pub struct ProjectionHeads {
    /// d_hat x 2d, applied to concat(v, v_oc).
    pub vp_w: Tensor,
    pub vp_b: Tensor,
    /// d_hat x d, applied rowwise to z1.
    pub tp_w: Tensor,
    pub tp_b: Tensor,
    pub d_hat: usize,
}

impl ProjectionHeads {
    pub fn init(d: usize, d_hat: usize, rng: &mut impl Rng) -> Self {
        ProjectionHeads {
            vp_w: Tensor::param_randn(vec![d_hat, 2 * d], (1.0 / (2 * d) as f64).sqrt(), rng),
            vp_b: Tensor::param(vec![1, d_hat], vec![0.0; d_hat]).unwrap(),
            tp_w: Tensor::param_randn(vec![d_hat, d], (1.0 / d as f64).sqrt(), rng),
            tp_b: Tensor::param(vec![1, d_hat], vec![0.0; d_hat]).unwrap(),
            d_hat,
        }
    }

    /// phi_vp over rows of concat(v, v_oc): B x d_hat.
    pub fn project_visual(&self, v: &Tensor, v_oc: &Tensor) -> Result<Tensor> {
        let joint = Tensor::concat_cols(&[v.clone(), v_oc.clone()])?;
        joint.matmul(&self.vp_w.transpose()?)?.add_row(&self.vp_b)
    }

    /// phi_tp over class rows: C x d_hat.
    pub fn project_text(&self, z1: &Tensor) -> Result<Tensor> {
        z1.matmul(&self.tp_w.transpose()?)?.add_row(&self.tp_b)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("proj.vp.w".into(), self.vp_w.clone()),
            ("proj.vp.b".into(), self.vp_b.clone()),
            ("proj.tp.w".into(), self.tp_w.clone()),
            ("proj.tp.b".into(), self.tp_b.clone()),
        ]
    }
}

#[derive(Clone, Copy)]
pub struct MarginConfig {
    pub margin: f64,
    pub negatives_per_pair: usize,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            margin: 0.7,
            negatives_per_pair: 5,
        }
    }
}

#[derive(Clone, Copy)]
pub struct LossWeights {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alphah: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha0: 1.0,
            alpha1: 1.0,
            alphah: 1.0,
        }
    }
}

/// Sum over classes of the per-class BCE averaged over the batch
/// (equivalently: total elementwise BCE divided by batch size).
pub fn bce_level(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let (batch, _) = logits.rows_cols("bce_level")?;
    logits.bce_with_logits(labels, 1.0 / batch as f64)
}

/// Per-batch-element class embeddings: h1[b] has one row per class,
/// the elementwise product of v^p[b] with that class's z^p row.
pub fn class_embeddings(vp: &Tensor, zp: &Tensor) -> Result<Vec<Tensor>> {
    let (batch, d_hat) = vp.rows_cols("class_embeddings")?;
    let mut out = Vec::with_capacity(batch);
    for b in 0..batch {
        let row = vp.slice_rows(b, b + 1)?;
        let _ = d_hat;
        out.push(zp.mul_row(&row)?);
    }
    Ok(out)
}

/// One embedding per class for margin mining: the batch-mean visual
/// projection restricted to frames where the class is positive (all
/// frames when it never is), times the class's text projection.
pub fn aggregate_class_embeddings(
    vp: &Tensor,
    zp: &Tensor,
    labels: &[Vec<u8>],
) -> Result<Tensor> {
    let (batch, _) = vp.rows_cols("aggregate_class_embeddings")?;
    let (classes, _) = zp.rows_cols("aggregate_class_embeddings")?;
    assert_eq!(labels.len(), batch);
    let mut agg = vec![0.0; classes * batch];
    for c in 0..classes {
        let members: Vec<usize> = (0..batch).filter(|&b| labels[b][c] == 1).collect();
        if members.is_empty() {
            for b in 0..batch {
                agg[c * batch + b] = 1.0 / batch as f64;
            }
        } else {
            for &b in &members {
                agg[c * batch + b] = 1.0 / members.len() as f64;
            }
        }
    }
    let vbar = Tensor::from_vec(vec![classes, batch], agg)?.matmul(vp)?;
    vbar.mul(zp)
}

/// Rows of `m` at the given indices, differentiably (one-hot gather).
fn gather_rows(m: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (rows, _) = m.rows_cols("gather_rows")?;
    let mut sel = vec![0.0; idx.len() * rows];
    for (out_row, &i) in idx.iter().enumerate() {
        sel[out_row * rows + i] = 1.0;
    }
    Tensor::from_vec(vec![idx.len(), rows], sel)?.matmul(m)
}

/// Hinge loss over same-parent positive pairs against sampled negatives:
/// (1/|P|) sum over pairs and negatives of
/// max(0, m + d(h_i, h_j) - d(h_i, h_k)), d = cosine distance.
pub fn margin_loss(
    h: &Tensor,
    parent: &[usize],
    labels: &[Vec<u8>],
    cfg: &MarginConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let (classes, _) = h.rows_cols("margin_loss")?;
    assert_eq!(parent.len(), classes);

    let active: Vec<usize> = (0..classes)
        .filter(|&c| labels.iter().any(|row| row[c] == 1))
        .collect();

    let mut anchors = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut num_pairs = 0usize;
    for (ai, &i) in active.iter().enumerate() {
        for &j in &active[ai + 1..] {
            if parent[i] != parent[j] {
                continue;
            }
            num_pairs += 1;
            let mut eligible: Vec<usize> = (0..classes)
                .filter(|&k| parent[k] != parent[i] && parent[k] != parent[j])
                .collect();
            eligible.shuffle(rng);
            for &k in eligible.iter().take(cfg.negatives_per_pair) {
                anchors.push(i);
                positives.push(j);
                negatives.push(k);
            }
        }
    }
    if num_pairs == 0 || anchors.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }

    let hi = gather_rows(h, &anchors)?;
    let hj = gather_rows(h, &positives)?;
    let hk = gather_rows(h, &negatives)?;
    let cos_pos = hi.cosine_rows(&hj)?;
    let cos_neg = hi.cosine_rows(&hk)?;
    // m + (1 - cos_pos) - (1 - cos_neg) = m + cos_neg - cos_pos
    let hinge = cos_neg
        .sub(&cos_pos)?
        .add(&Tensor::full(vec![anchors.len()], cfg.margin))?
        .relu();
    Ok(hinge.sum().scale(1.0 / num_pairs as f64))
}

/// alpha0 * L0 + alpha1 * L1 + alphah * Lmargin.
pub fn total_loss(l0: &Tensor, l1: &Tensor, lmargin: &Tensor, w: &LossWeights) -> Result<Tensor> {
    l0.scale(w.alpha0)
        .add(&l1.scale(w.alpha1))?
        .add(&lmargin.scale(w.alphah))
}
