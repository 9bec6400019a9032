//! Full model assembly: frozen encoders plus the trainable pieces
//! (prompts, LoRA adapters, graph condensation, projection heads, and
//! optionally the temperature), with component toggles for ablations.

use crate::alignment::{fuse, object_attention};
use crate::config::RunConfig;
use crate::encoders::{
    PromptBank, TextEncoder, TextEncoderConfig, ViTConfig, VisionAdapters, VisionEncoder,
};
use crate::error::Result;
use crate::losses::{
    aggregate_class_embeddings, bce_level, margin_loss, total_loss, LossWeights, MarginConfig,
    ProjectionHeads,
};
use crate::sgc::{ClusterAssignment, Sgc};
use crate::taxonomy::Taxonomy;
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Model {
    pub taxonomy: Taxonomy,
    pub vision: VisionEncoder,
    pub adapters: VisionAdapters,
    pub text: TextEncoder,
    pub bank: PromptBank,
    pub sgc: Sgc,
    pub heads: ProjectionHeads,
    pub tau: Tensor,
    pub margin_cfg: MarginConfig,
    pub weights: LossWeights,
    pub seed: u64,
    // component toggles
    pub use_soft_prompt: bool,
    pub use_lora: bool,
    pub use_hierarchy: bool,
    pub use_sgc: bool,
}

pub struct ModelOutput {
    pub y0: Tensor,
    pub y1: Tensor,
    pub y0_oc: Tensor,
    pub y1_oc: Tensor,
    pub fused0: Tensor,
    pub fused1: Tensor,
    /// One per image; empty when the SGC branch is disabled.
    pub assignments: Vec<ClusterAssignment>,
}

pub struct LossBreakdown {
    pub l0: Tensor,
    pub l1: Tensor,
    pub lmargin: Tensor,
    pub total: Tensor,
}

impl Model {
    /// Everything, frozen and trainable, derives from the config seed.
    pub fn init(cfg: &RunConfig, taxonomy: Taxonomy) -> Result<Model> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let vit = ViTConfig {
            image_size: cfg.image_size,
            channels: cfg.channels,
            patch_size: cfg.patch_size,
            layers: cfg.vit_layers,
            heads: cfg.vit_heads,
            embed_dim: cfg.embed_dim,
            key_tap_layer: cfg.sgc_j,
        };
        let vision = VisionEncoder::init(vit.clone(), &mut rng)?;
        let adapters = VisionAdapters::init(&vit, cfg.lora_rank, cfg.lora_alpha, &mut rng);
        let text_cfg = TextEncoderConfig {
            layers: cfg.text_layers,
            heads: cfg.text_heads,
            width: cfg.text_width,
            output_dim: cfg.embed_dim,
        };
        let text = TextEncoder::init(text_cfg, cfg.context_tokens + 1, cfg.embed_dim, &mut rng)?;
        let bank = PromptBank::init(&taxonomy, cfg.context_tokens, cfg.text_width, &mut rng);
        let topk = (cfg.topk_edges > 0).then_some(cfg.topk_edges);
        let sgc = Sgc::init(cfg.embed_dim, cfg.sgc_k, cfg.leaky_slope, topk, &mut rng);
        let heads = ProjectionHeads::init(cfg.embed_dim, cfg.proj_dim, &mut rng);
        let tau = if cfg.tau_learnable {
            Tensor::param(vec![1], vec![cfg.tau])?
        } else {
            Tensor::scalar(cfg.tau)
        };
        Ok(Model {
            taxonomy,
            vision,
            adapters,
            text,
            bank,
            sgc,
            heads,
            tau,
            margin_cfg: MarginConfig {
                margin: cfg.margin,
                negatives_per_pair: cfg.negatives_per_pair,
            },
            weights: LossWeights {
                alpha0: cfg.alpha0,
                alpha1: cfg.alpha1,
                alphah: cfg.alphah,
            },
            seed: cfg.seed,
            use_soft_prompt: cfg.soft_prompt,
            use_lora: cfg.lora,
            use_hierarchy: cfg.hierarchy,
            use_sgc: cfg.sgc,
        })
    }

    /// Trainable parameters under the active toggles, in a stable order.
    pub fn named_trainable(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        if self.use_soft_prompt {
            out.extend(self.bank.named_params());
        }
        if self.use_lora {
            out.extend(self.adapters.named_params());
        }
        if self.use_sgc {
            out.extend(self.sgc.named_params());
        }
        if self.use_hierarchy {
            out.extend(self.heads.named_params());
        }
        if self.tau.requires_grad() {
            out.push(("tau".into(), self.tau.clone()));
        }
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.named_trainable().iter().map(|(_, t)| t.numel()).sum()
    }

    fn logits(&self, v: &Tensor, z: &Tensor) -> Result<Tensor> {
        let v_hat = v.l2norm_rows()?;
        let z_hat = z.l2norm_rows()?;
        v_hat.matmul(&z_hat.transpose()?)?.scale_by(&self.tau)
    }

    /// Encode every image: batch rows of v and v_oc plus the per-image
    /// cluster assignments. `v_oc` collapses to `v` when SGC is off.
    fn encode_batch(
        &self,
        images: &[Vec<f64>],
    ) -> Result<(Tensor, Tensor, Vec<ClusterAssignment>)> {
        assert!(!images.is_empty(), "empty batch");
        let mut v_rows = Vec::with_capacity(images.len());
        let mut voc_rows = Vec::with_capacity(images.len());
        let mut assignments = Vec::new();
        for img in images {
            let (v, keys) = self.vision.encode_image(img, &self.adapters)?;
            if self.use_sgc {
                let (f_oc, assign) = self.sgc.forward(&keys)?;
                let (_, v_oc) = object_attention(&v, &f_oc)?;
                voc_rows.push(v_oc);
                assignments.push(assign);
            } else {
                voc_rows.push(v.clone());
            }
            v_rows.push(v);
        }
        Ok((
            Tensor::concat_rows(&v_rows)?,
            Tensor::concat_rows(&voc_rows)?,
            assignments,
        ))
    }

    /// Both logit families at both levels for a batch of CHW images.
    pub fn forward(&self, images: &[Vec<f64>]) -> Result<ModelOutput> {
        let (v, v_oc, assignments) = self.encode_batch(images)?;
        let z0 = self.text.encode_level(&self.bank, 0)?;
        let z1 = self.text.encode_level(&self.bank, 1)?;
        self.bundle_logits(v, v_oc, z0, z1, assignments)
    }

    fn bundle_logits(
        &self,
        v: Tensor,
        v_oc: Tensor,
        z0: Tensor,
        z1: Tensor,
        assignments: Vec<ClusterAssignment>,
    ) -> Result<ModelOutput> {
        let y0 = self.logits(&v, &z0)?;
        let y1 = self.logits(&v, &z1)?;
        let y0_oc = self.logits(&v_oc, &z0)?;
        let y1_oc = self.logits(&v_oc, &z1)?;
        Ok(ModelOutput {
            fused0: fuse(&y0, &y0_oc)?,
            fused1: fuse(&y1, &y1_oc)?,
            y0,
            y1,
            y0_oc,
            y1_oc,
            assignments,
        })
    }

    /// Full training objective for one batch. The margin term's negative
    /// sampling derives from (seed, step) only.
    pub fn compute_losses(
        &self,
        images: &[Vec<f64>],
        labels_fine: &[Vec<u8>],
        step: u64,
    ) -> Result<LossBreakdown> {
        assert_eq!(images.len(), labels_fine.len());
        let (v, v_oc, assignments) = self.encode_batch(images)?;
        let z0 = self.text.encode_level(&self.bank, 0)?;
        let z1 = self.text.encode_level(&self.bank, 1)?;
        let out = self.bundle_logits(
            v.clone(),
            v_oc.clone(),
            z0,
            z1.clone(),
            assignments,
        )?;

        let c1 = self.taxonomy.num_fine();
        let c0 = self.taxonomy.num_coarse();
        let fine_flat: Vec<f64> = labels_fine
            .iter()
            .flat_map(|row| row.iter().map(|&v| v as f64))
            .collect();
        let coarse_flat: Vec<f64> = labels_fine
            .iter()
            .flat_map(|row| self.taxonomy.coarse_labels(row))
            .map(|v| v as f64)
            .collect();
        let labels1 = Tensor::from_vec(vec![images.len(), c1], fine_flat)?;
        let labels0 = Tensor::from_vec(vec![images.len(), c0], coarse_flat)?;

        let l1 = bce_level(&out.fused1, &labels1)?;
        let l0 = if self.use_hierarchy {
            bce_level(&out.fused0, &labels0)?
        } else {
            Tensor::scalar(0.0)
        };

        let lmargin = if self.use_hierarchy {
            let vp = self.heads.project_visual(&v, &v_oc)?;
            let zp = self.heads.project_text(&z1)?;
            let h = aggregate_class_embeddings(&vp, &zp, labels_fine)?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ step.wrapping_mul(0x9e3779b9));
            margin_loss(&h, &self.taxonomy.parent, labels_fine, &self.margin_cfg, &mut rng)?
        } else {
            Tensor::scalar(0.0)
        };

        let total = total_loss(&l0, &l1, &lmargin, &self.weights)?;
        Ok(LossBreakdown {
            l0,
            l1,
            lmargin,
            total,
        })
    }

    pub fn zero_grad(&self) {
        for (_, p) in self.named_trainable() {
            p.zero_grad();
        }
    }
}
