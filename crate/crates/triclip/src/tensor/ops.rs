//! Forward ops and their vector-Jacobian products.

use super::Tensor;
use crate::error::{Error, Result};

fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.shape(),
        rhs: rhs.shape(),
    }
}

/// Raw row-major matmul, also used by oracles in tests.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aik = a[i * k + p];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Tensor {
    fn elementwise_check(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(op, self, other));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise_check(other, "add")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise_check(other, "sub")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![g.to_vec(), g.iter().map(|v| -v).collect()]),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise_check(other, "mul")?;
        let a = self.data();
        let b = other.data();
        let data: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    g.iter().zip(&b).map(|(gi, y)| gi * y).collect(),
                    g.iter().zip(&a).map(|(gi, x)| gi * x).collect(),
                ]
            }),
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v * c).collect();
        Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().map(|v| v * c).collect()]),
        )
    }

    /// Multiply by a scalar tensor (used by the learnable temperature).
    pub fn scale_by(&self, c: &Tensor) -> Result<Tensor> {
        if c.numel() != 1 {
            return Err(shape_err("scale_by", self, c));
        }
        let cv = c.item();
        let a = self.data();
        let data: Vec<f64> = a.iter().map(|v| v * cv).collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), c.clone()],
            Box::new(move |g| {
                vec![
                    g.iter().map(|v| v * cv).collect(),
                    vec![g.iter().zip(&a).map(|(gi, x)| gi * x).sum()],
                ]
            }),
        ))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols("matmul")?;
        let (k2, n) = other.rows_cols("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self, other));
        }
        let a = self.data();
        let b = other.data();
        let data = matmul_raw(&a, &b, m, k, n);
        Ok(Tensor::node(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                // dA = G B^T, dB = A^T G
                let bt = transpose_raw(&b, k, n);
                let at = transpose_raw(&a, m, k);
                vec![matmul_raw(g, &bt, m, n, k), matmul_raw(&at, g, k, m, n)]
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.rows_cols("transpose")?;
        let data = transpose_raw(&self.data(), r, c);
        Ok(Tensor::node(
            vec![c, r],
            data,
            vec![self.clone()],
            Box::new(move |g| vec![transpose_raw(g, c, r)]),
        ))
    }

    /// Concatenate along the last axis; all parts must have the same row count.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (rows, _) = parts[0].rows_cols("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.rows_cols("concat_cols")?;
            if r != rows {
                return Err(shape_err("concat_cols", &parts[0], p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pd = p.data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&pd[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let widths_c = widths.clone();
        Ok(Tensor::node(
            vec![rows, total],
            data,
            parts.to_vec(),
            Box::new(move |g| {
                let mut out = Vec::with_capacity(widths_c.len());
                let mut offset = 0;
                for &w in &widths_c {
                    let mut pg = vec![0.0; rows * w];
                    for r in 0..rows {
                        pg[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    out.push(pg);
                    offset += w;
                }
                out
            }),
        ))
    }

    /// Stack along the first axis; all parts must have the same column count.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (_, cols) = parts[0].rows_cols("concat_rows")?;
        let mut heights = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for p in parts {
            let (r, c) = p.rows_cols("concat_rows")?;
            if c != cols {
                return Err(shape_err("concat_rows", &parts[0], p));
            }
            heights.push(r);
            data.extend_from_slice(&p.data());
        }
        let total: usize = heights.iter().sum();
        let heights_c = heights.clone();
        Ok(Tensor::node(
            vec![total, cols],
            data,
            parts.to_vec(),
            Box::new(move |g| {
                let mut out = Vec::with_capacity(heights_c.len());
                let mut offset = 0;
                for &h in &heights_c {
                    out.push(g[offset * cols..(offset + h) * cols].to_vec());
                    offset += h;
                }
                out
            }),
        ))
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (r, c) = self.rows_cols("slice_rows")?;
        if start >= end || end > r {
            return Err(Error::InvalidShape {
                op: "slice_rows",
                shape: self.shape(),
                reason: format!("row range {start}..{end}"),
            });
        }
        let data = self.data()[start * c..end * c].to_vec();
        Ok(Tensor::node(
            vec![end - start, c],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                pg[start * c..end * c].copy_from_slice(g);
                vec![pg]
            }),
        ))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (r, c) = self.rows_cols("slice_cols")?;
        if start >= end || end > c {
            return Err(Error::InvalidShape {
                op: "slice_cols",
                shape: self.shape(),
                reason: format!("col range {start}..{end}"),
            });
        }
        let w = end - start;
        let src = self.data();
        let mut data = vec![0.0; r * w];
        for i in 0..r {
            data[i * w..(i + 1) * w].copy_from_slice(&src[i * c + start..i * c + end]);
        }
        Ok(Tensor::node(
            vec![r, w],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    pg[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                vec![pg]
            }),
        ))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (r, c) = self.rows_cols("softmax_rows")?;
        let src = self.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let y = data.clone();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        pg[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![pg]
            }),
        ))
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let y = data.clone();
        Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&y)
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect()]
            }),
        )
    }

    pub fn ln(&self) -> Result<Tensor> {
        let src = self.data();
        for (i, &v) in src.iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::LogDomain { value: v, index: i });
            }
        }
        let data: Vec<f64> = src.iter().map(|v| v.ln()).collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().zip(&src).map(|(gi, x)| gi / x).collect()]),
        ))
    }

    pub fn exp(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v.exp()).collect();
        let y = data.clone();
        Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().zip(&y).map(|(gi, yi)| gi * yi).collect()]),
        )
    }

    pub fn relu(&self) -> Tensor {
        let src = self.data();
        let data: Vec<f64> = src.iter().map(|&v| v.max(0.0)).collect();
        Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&src)
                    .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                    .collect()]
            }),
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let src = self.data();
        let data: Vec<f64> = src
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&src)
                    .map(|(gi, &x)| if x > 0.0 { *gi } else { slope * gi })
                    .collect()]
            }),
        )
    }

    /// L2-normalize each row. A zero row maps to the zero row.
    pub fn l2norm_rows(&self) -> Result<Tensor> {
        let (r, c) = self.rows_cols("l2norm_rows")?;
        let src = self.data();
        let mut data = vec![0.0; r * c];
        let mut norms = vec![0.0; r];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms[i] = norm;
            if norm > 0.0 {
                for j in 0..c {
                    data[i * c + j] = row[j] / norm;
                }
            }
        }
        let y = data.clone();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    if norms[i] == 0.0 {
                        continue;
                    }
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        pg[i * c + j] = (gr[j] - dot * yr[j]) / norms[i];
                    }
                }
                vec![pg]
            }),
        ))
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        Tensor::node(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        Tensor::node(
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0] / n as f64; n]]),
        )
    }

    /// Mean over rows, producing a single row.
    pub fn mean_rows(&self) -> Result<Tensor> {
        let (r, c) = self.rows_cols("mean_rows")?;
        let src = self.data();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += src[i * c + j];
            }
        }
        for v in &mut data {
            *v /= r as f64;
        }
        Ok(Tensor::node(
            vec![1, c],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        pg[i * c + j] = g[j] / r as f64;
                    }
                }
                vec![pg]
            }),
        ))
    }

    /// Add a single row to every row of a matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (r, c) = self.rows_cols("add_row")?;
        let (rr, rc) = row.rows_cols("add_row")?;
        if rr != 1 || rc != c {
            return Err(shape_err("add_row", self, row));
        }
        let rv = row.data();
        let data: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + rv[i % c])
            .collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), row.clone()],
            Box::new(move |g| {
                let mut rg = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        rg[j] += g[i * c + j];
                    }
                }
                vec![g.to_vec(), rg]
            }),
        ))
    }

    /// Multiply every row of a matrix by a single row, elementwise.
    pub fn mul_row(&self, row: &Tensor) -> Result<Tensor> {
        let (r, c) = self.rows_cols("mul_row")?;
        let (rr, rc) = row.rows_cols("mul_row")?;
        if rr != 1 || rc != c {
            return Err(shape_err("mul_row", self, row));
        }
        let rv = row.data();
        let a = self.data();
        let data: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * rv[i % c]).collect();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone(), row.clone()],
            Box::new(move |g| {
                let mut rg = vec![0.0; c];
                let mut ag = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ag[i * c + j] = g[i * c + j] * rv[j];
                        rg[j] += g[i * c + j] * a[i * c + j];
                    }
                }
                vec![ag, rg]
            }),
        ))
    }

    /// Row-wise layer normalization (no affine part).
    pub fn layernorm_rows(&self, eps: f64) -> Result<Tensor> {
        let (r, c) = self.rows_cols("layernorm_rows")?;
        let src = self.data();
        let mut data = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..c {
                data[i * c + j] = (row[j] - mu) * istd;
            }
        }
        let y = data.clone();
        Ok(Tensor::node(
            self.shape(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let mg = gr.iter().sum::<f64>() / c as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        pg[i * c + j] = inv_std[i] * (gr[j] - mg - yr[j] * mgy);
                    }
                }
                vec![pg]
            }),
        ))
    }

    /// Cosine similarity of paired rows of two equal-shape matrices.
    /// Rows with zero norm have similarity 0 against anything.
    pub fn cosine_rows(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise_check(other, "cosine_rows")?;
        let na = self.l2norm_rows()?;
        let nb = other.l2norm_rows()?;
        let prod = na.mul(&nb)?;
        let (r, c) = prod.rows_cols("cosine_rows")?;
        let src = prod.data();
        let data: Vec<f64> = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().sum())
            .collect();
        Ok(Tensor::node(
            vec![r],
            data,
            vec![prod],
            Box::new(move |g| {
                let mut pg = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        pg[i * c + j] = g[i];
                    }
                }
                vec![pg]
            }),
        ))
    }

    /// Stable binary cross entropy with logits, summed over entries and
    /// scaled by `weight` (the caller passes 1/batch).
    pub fn bce_with_logits(&self, labels: &Tensor, weight: f64) -> Result<Tensor> {
        self.elementwise_check(labels, "bce_with_logits")?;
        let x = self.data();
        let y = labels.data();
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Numeric("bce labels must be 0 or 1".into()));
        }
        let mut total = 0.0;
        for (xi, yi) in x.iter().zip(&y) {
            total += xi.max(0.0) - xi * yi + (-xi.abs()).exp().ln_1p();
        }
        total *= weight;
        Ok(Tensor::node(
            vec![1],
            vec![total],
            vec![self.clone(), labels.clone()],
            Box::new(move |g| {
                let gx: Vec<f64> = x
                    .iter()
                    .zip(&y)
                    .map(|(xi, yi)| g[0] * weight * (1.0 / (1.0 + (-xi).exp()) - yi))
                    .collect();
                vec![gx, vec![0.0; y.len()]]
            }),
        ))
    }
}
