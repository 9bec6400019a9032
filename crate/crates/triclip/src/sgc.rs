//! Semantic graph condensation: cosine affinity graph over patch keys,
//! one graph-attention layer, and a softmax assignment pooling nodes
//! into k object-centric features.

use crate::error::Result;
use crate::tensor::Tensor;
use rand::Rng;

/// Dense weighted patch graph.
pub struct PatchGraph {
    pub node_features: Tensor,
    /// N x N cosine similarities, symmetric with unit diagonal.
    pub affinity: Tensor,
    /// Optional 0/1 mask keeping the strongest edges per row.
    pub mask: Option<Tensor>,
}

/// Cosine affinity with the diagonal pinned to 1 (zero-norm rows included).
pub fn build_graph(keys: &Tensor, topk_edges: Option<usize>) -> Result<PatchGraph> {
    let (n, _) = keys.rows_cols("build_graph")?;
    let normed = keys.l2norm_rows()?;
    let raw = normed.matmul(&normed.transpose()?)?;
    // force diagonal to exactly 1: aff = raw * (1 - I) + I
    let mut off = vec![1.0; n * n];
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        off[i * n + i] = 0.0;
        eye[i * n + i] = 1.0;
    }
    let affinity = raw
        .mul(&Tensor::from_vec(vec![n, n], off)?)?
        .add(&Tensor::from_vec(vec![n, n], eye)?)?;

    let mask = match topk_edges {
        Some(k) if k < n => {
            let aff = affinity.data();
            let mut mask = vec![0.0; n * n];
            for i in 0..n {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| {
                    aff[i * n + b]
                        .partial_cmp(&aff[i * n + a])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                mask[i * n + i] = 1.0;
                for &j in idx.iter().take(k) {
                    mask[i * n + j] = 1.0;
                }
            }
            Some(Tensor::from_vec(vec![n, n], mask)?)
        }
        _ => None,
    };

    Ok(PatchGraph {
        node_features: keys.clone(),
        affinity,
        mask,
    })
}

/// Single graph-attention layer. Attention logits are the usual
/// leaky-ReLU of source/destination scores, biased additively by the
/// cosine affinity so similar patches start out attending to each other.
pub struct GatLayer {
    pub weight: Tensor,
    pub attn_src: Tensor,
    pub attn_dst: Tensor,
    pub leaky_slope: f64,
}

impl GatLayer {
    pub fn init(dim: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        GatLayer {
            weight: Tensor::param_randn(vec![dim, dim], std, rng),
            attn_src: Tensor::param_randn(vec![1, dim], std, rng),
            attn_dst: Tensor::param_randn(vec![1, dim], std, rng),
            leaky_slope,
        }
    }

    pub fn forward(&self, graph: &PatchGraph) -> Result<Tensor> {
        let (n, _) = graph.node_features.rows_cols("gat_forward")?;
        let h = graph.node_features.matmul(&self.weight.transpose()?)?;
        let s = h.matmul(&self.attn_src.transpose()?)?; // N x 1
        let t = h.matmul(&self.attn_dst.transpose()?)?; // N x 1
        let ones_row = Tensor::full(vec![1, n], 1.0);
        let ones_col = Tensor::full(vec![n, 1], 1.0);
        let pairwise = s.matmul(&ones_row)?.add(&ones_col.matmul(&t.transpose()?)?)?;
        let mut logits = pairwise.leaky_relu(self.leaky_slope).add(&graph.affinity)?;
        if let Some(mask) = &graph.mask {
            // dropped edges get a large negative bias before the softmax
            let penalty = mask.scale(1e9).add(&Tensor::full(mask.shape(), -1e9))?;
            logits = logits.add(&penalty)?;
        }
        let attn = logits.softmax_rows()?;
        Ok(attn.matmul(&h)?.relu())
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("sgc.gat.weight".into(), self.weight.clone()),
            ("sgc.gat.attn_src".into(), self.attn_src.clone()),
            ("sgc.gat.attn_dst".into(), self.attn_dst.clone()),
        ]
    }
}

/// Linear head producing cluster logits, softmax-normalized per node.
pub struct AssignmentHead {
    pub weight: Tensor,
    pub bias: Tensor,
    pub clusters: usize,
}

impl AssignmentHead {
    pub fn init(dim: usize, clusters: usize, rng: &mut impl Rng) -> Self {
        AssignmentHead {
            weight: Tensor::param_randn(vec![clusters, dim], (1.0 / dim as f64).sqrt(), rng),
            bias: Tensor::param(vec![1, clusters], vec![0.0; clusters]).unwrap(),
            clusters,
        }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("sgc.assign.weight".into(), self.weight.clone()),
            ("sgc.assign.bias".into(), self.bias.clone()),
        ]
    }
}

/// Row-stochastic node-to-cluster map.
pub struct ClusterAssignment {
    /// N x k, rows sum to 1.
    pub s: Tensor,
}

impl ClusterAssignment {
    pub fn argmax_clusters(&self) -> Vec<usize> {
        let (n, k) = self.s.rows_cols("argmax_clusters").unwrap();
        let d = self.s.data();
        (0..n)
            .map(|i| {
                let row = &d[i * k..(i + 1) * k];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(j, _)| j)
                    .unwrap()
            })
            .collect()
    }
}

/// f_oc = S^T H from softmaxed assignment logits.
pub fn condense(enriched: &Tensor, head: &AssignmentHead) -> Result<(Tensor, ClusterAssignment)> {
    let logits = enriched
        .matmul(&head.weight.transpose()?)?
        .add_row(&head.bias)?;
    let s = logits.softmax_rows()?;
    let f_oc = s.transpose()?.matmul(enriched)?;
    Ok((f_oc, ClusterAssignment { s }))
}

/// The full condensation pipeline used by the model.
pub struct Sgc {
    pub gat: GatLayer,
    pub head: AssignmentHead,
    pub topk_edges: Option<usize>,
}

impl Sgc {
    pub fn init(
        dim: usize,
        clusters: usize,
        leaky_slope: f64,
        topk_edges: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        Sgc {
            gat: GatLayer::init(dim, leaky_slope, rng),
            head: AssignmentHead::init(dim, clusters, rng),
            topk_edges,
        }
    }

    pub fn forward(&self, keys: &Tensor) -> Result<(Tensor, ClusterAssignment)> {
        let graph = build_graph(keys, self.topk_edges)?;
        let enriched = self.gat.forward(&graph)?;
        condense(&enriched, &self.head)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.gat.named_params();
        out.extend(self.head.named_params());
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_patches_zero_offdiagonal() {
        let keys = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        assert_eq!(g.affinity.data(), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn identical_patches_all_ones() {
        let keys = Tensor::from_vec(vec![3, 2], vec![2.0, 1.0, 2.0, 1.0, 2.0, 1.0]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        for v in g.affinity.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_cosine_oracle() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let keys = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, r, r]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        let a = g.affinity.data();
        assert!((a[1] - r).abs() < 1e-12, "off-diagonal {}", a[1]);
        assert!((a[2] - r).abs() < 1e-12);
        assert_eq!(a[0], 1.0);
        assert_eq!(a[3], 1.0);
    }

    #[test]
    fn zero_norm_row_is_zero_similarity_unit_diagonal() {
        let keys = Tensor::from_vec(vec![2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        let a = g.affinity.data();
        assert_eq!(a, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn affinity_symmetric_unit_diagonal_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let keys = Tensor::randn(vec![9, 5], 1.0, &mut rng);
        let g = build_graph(&keys, None).unwrap();
        let a = g.affinity.data();
        for i in 0..9 {
            assert_eq!(a[i * 9 + i], 1.0);
            for j in 0..9 {
                assert!((a[i * 9 + j] - a[j * 9 + i]).abs() < 1e-12);
                assert!(a[i * 9 + j] <= 1.0 + 1e-12 && a[i * 9 + j] >= -1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn single_node_is_self_attention_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gat = GatLayer::init(3, 0.2, &mut rng);
        let keys = Tensor::from_vec(vec![1, 3], vec![0.3, -0.8, 0.5]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        let out = gat.forward(&g).unwrap();
        // with one node attention is 1, so out = relu(W x)
        let expect = keys
            .matmul(&gat.weight.transpose().unwrap())
            .unwrap()
            .relu();
        assert_eq!(out.data(), expect.data());
    }

    #[test]
    fn gat_two_node_hand_oracle() {
        let gat = GatLayer {
            weight: Tensor::param(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            attn_src: Tensor::param(vec![1, 2], vec![1.0, 0.0]).unwrap(),
            attn_dst: Tensor::param(vec![1, 2], vec![0.0, 1.0]).unwrap(),
            leaky_slope: 0.2,
        };
        let keys = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let g = build_graph(&keys, None).unwrap();
        let out = gat.forward(&g).unwrap().data();

        // by hand: H = X (identity W), s = [1, 0], t = [0, 1]
        // pairwise = [[1, 2], [0, 1]], leaky(.) same (all >= 0)
        // logits = pairwise + affinity([[1,0],[0,1]]) = [[2,2],[0,2]]
        // row softmax: [[.5,.5],[e0/(e0+e2), e2/(e0+e2)]]
        // out = relu(A H)
        let w = (2.0f64).exp();
        let expect = [0.5, 0.5, 1.0 / (1.0 + w), w / (1.0 + w)];
        for (o, e) in out.iter().zip(expect) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn gat_permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gat = GatLayer::init(4, 0.2, &mut rng);
        let keys = Tensor::randn(vec![5, 4], 1.0, &mut rng);
        let g = build_graph(&keys, None).unwrap();
        let out = gat.forward(&g).unwrap().data();

        // reverse node order
        let d = keys.data();
        let mut rev = vec![0.0; d.len()];
        for i in 0..5 {
            rev[i * 4..(i + 1) * 4].copy_from_slice(&d[(4 - i) * 4..(5 - i) * 4]);
        }
        let g2 = build_graph(&Tensor::from_vec(vec![5, 4], rev).unwrap(), None).unwrap();
        let out2 = gat.forward(&g2).unwrap().data();
        for i in 0..5 {
            for j in 0..4 {
                assert!((out[i * 4 + j] - out2[(4 - i) * 4 + j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn condense_k1_uniform_assignment_is_row_mean() {
        // zero weight/bias -> uniform S; with k=1 every row is exactly 1
        let head = AssignmentHead {
            weight: Tensor::param(vec![1, 3], vec![0.0; 3]).unwrap(),
            bias: Tensor::param(vec![1, 1], vec![0.0]).unwrap(),
            clusters: 1,
        };
        let x = Tensor::from_vec(vec![4, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let (f_oc, assign) = condense(&x, &head).unwrap();
        assert_eq!(assign.s.data(), vec![1.0; 4]);
        // f_oc = column sums (S^T X with S all ones)
        let expect = [18.0, 22.0, 26.0];
        for (a, b) in f_oc.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn condense_one_hot_assignment_sums_members() {
        // huge logits -> numerically one-hot softmax
        let head = AssignmentHead {
            weight: Tensor::param(vec![2, 2], vec![1e4, 0.0, 0.0, 1e4]).unwrap(),
            bias: Tensor::param(vec![1, 2], vec![0.0, 0.0]).unwrap(),
            clusters: 2,
        };
        let x = Tensor::from_vec(vec![3, 2], vec![1.0, 0.0, 1.0, 0.1, 0.0, 1.0]).unwrap();
        let (f_oc, assign) = condense(&x, &head).unwrap();
        let s = assign.s.data();
        assert!(s[0] > 0.999 && s[2] > 0.999 && s[5] > 0.999);
        let f = f_oc.data();
        assert!((f[0] - 2.0).abs() < 1e-3); // cluster 0 = rows 0+1
        assert!((f[3] - 1.0).abs() < 1e-3); // cluster 1 = row 2
    }

    #[test]
    fn fifteen_cluster_count_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sgc = Sgc::init(8, 15, 0.2, None, &mut rng);
        let keys = Tensor::randn(vec![16, 8], 1.0, &mut rng);
        let (f_oc, assign) = sgc.forward(&keys).unwrap();
        assert_eq!(f_oc.shape(), vec![15, 8]);
        let s = assign.s.data();
        for i in 0..16 {
            let sum: f64 = s[i * 15..(i + 1) * 15].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(s[i * 15..(i + 1) * 15].iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn full_pipeline_permutation_leaves_f_oc_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sgc = Sgc::init(4, 3, 0.2, None, &mut rng);
        let keys = Tensor::randn(vec![6, 4], 1.0, &mut rng);
        let (f1, _) = sgc.forward(&keys).unwrap();

        let d = keys.data();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut pd = vec![0.0; d.len()];
        for (i, &p) in perm.iter().enumerate() {
            pd[i * 4..(i + 1) * 4].copy_from_slice(&d[p * 4..(p + 1) * 4]);
        }
        let (f2, _) = sgc.forward(&Tensor::from_vec(vec![6, 4], pd).unwrap()).unwrap();
        for (a, b) in f1.data().iter().zip(f2.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn topk_mask_keeps_diagonal_and_k_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let keys = Tensor::randn(vec![6, 4], 1.0, &mut rng);
        let g = build_graph(&keys, Some(2)).unwrap();
        let m = g.mask.unwrap().data();
        for i in 0..6 {
            assert_eq!(m[i * 6 + i], 1.0);
            let count: f64 = m[i * 6..(i + 1) * 6].iter().sum();
            assert!(count <= 3.0); // self + top-2 (self may be in the top-2)
        }
        // masked forward still runs and rows stay stochastic
        let sgc = Sgc::init(4, 2, 0.2, Some(2), &mut rng);
        let (_, assign) = sgc.forward(&keys).unwrap();
        let s = assign.s.data();
        for i in 0..6 {
            let sum: f64 = s[i * 2..(i + 1) * 2].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn grad_check_through_graph_gat_condense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sgc = Sgc::init(3, 2, 0.2, None, &mut rng);
        let keys0 = Tensor::randn(vec![4, 3], 1.0, &mut rng);
        let err = grad_check(
            |keys| {
                let (f_oc, _) = sgc.forward(keys)?;
                Ok(f_oc.mul(&f_oc)?.sum())
            },
            &keys0,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "err = {err}");

        // and through the GAT parameters
        let keys = Tensor::randn(vec![4, 3], 1.0, &mut rng);
        let w0 = sgc.gat.weight.detach();
        let err_w = grad_check(
            |w| {
                let gat = GatLayer {
                    weight: w.clone(),
                    attn_src: sgc.gat.attn_src.clone(),
                    attn_dst: sgc.gat.attn_dst.clone(),
                    leaky_slope: 0.2,
                };
                let graph = build_graph(&keys, None)?;
                let enriched = gat.forward(&graph)?;
                let (f_oc, _) = condense(&enriched, &sgc.head)?;
                Ok(f_oc.mul(&f_oc)?.sum())
            },
            &w0,
            1e-5,
        )
        .unwrap();
        assert!(err_w < 1e-4, "err_w = {err_w}");
    }
}
