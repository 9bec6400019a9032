//! Mini vision transformer and two-level soft-prompt text encoder.
//!
//! The vision side produces the global embedding (CLS output of the last
//! layer) and the patch rows of the key projection at a configurable
//! layer. The text side runs `[V^1..V^n, cls_c]` per class through a
//! small frozen transformer; only the context vectors and class
//! embeddings train. Base weights on both sides are frozen; the vision
//! attention projections carry LoRA adapters.

use crate::error::{Error, Result};
use crate::lora::LoraAdapter;
use crate::taxonomy::Taxonomy;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ViTConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    /// 1-based layer whose key projection feeds the patch graph.
    pub key_tap_layer: usize,
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Config(reason));
        if self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "embed_dim {} must be divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.key_tap_layer == 0 || self.key_tap_layer > self.layers {
            return fail(format!(
                "key_tap_layer {} outside 1..={}",
                self.key_tap_layer, self.layers
            ));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }
}

#[derive(Debug, Clone)]
pub struct TextEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    /// Output projection dimension; must equal the vision embed dim.
    pub output_dim: usize,
}

impl TextEncoderConfig {
    pub fn validate(&self, vision_dim: usize) -> Result<()> {
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "text width {} must be divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.output_dim != vision_dim {
            return Err(Error::Config(format!(
                "text output_dim {} must equal vision embed_dim {vision_dim}",
                self.output_dim
            )));
        }
        Ok(())
    }
}

/// Frozen affine map; rows of x are inputs.
pub(crate) struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Tensor::randn(vec![d_out, d_in], (1.0 / d_in as f64).sqrt(), rng),
            b: Tensor::zeros(vec![1, d_out]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w.transpose()?)?.add_row(&self.b)
    }
}

struct AttentionBlock {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    mlp_in: Linear,
    mlp_out: Linear,
    heads: usize,
}

const LN_EPS: f64 = 1e-5;

impl AttentionBlock {
    fn init(dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let hidden = 2 * dim;
        AttentionBlock {
            wq: Linear::init(dim, dim, rng),
            wk: Linear::init(dim, dim, rng),
            wv: Linear::init(dim, dim, rng),
            wo: Linear::init(dim, dim, rng),
            mlp_in: Linear::init(dim, hidden, rng),
            mlp_out: Linear::init(hidden, dim, rng),
            heads,
        }
    }

    /// Pre-LN transformer block. When adapters are given they wrap the
    /// q/k/v projections. Returns (output, keys) with keys the full key
    /// projection of this block's normalized input.
    fn forward(
        &self,
        x: &Tensor,
        adapters: Option<&BlockAdapters>,
    ) -> Result<(Tensor, Tensor)> {
        let (tokens, dim) = x.rows_cols("attention")?;
        let head_dim = dim / self.heads;
        let h = x.layernorm_rows(LN_EPS)?;

        let project = |lin: &Linear, adapter: Option<&LoraAdapter>| -> Result<Tensor> {
            match adapter {
                Some(a) => a.forward(&h, &lin.w)?.add_row(&lin.b),
                None => lin.forward(&h),
            }
        };
        let q = project(&self.wq, adapters.map(|a| &a.q))?;
        let k = project(&self.wk, adapters.map(|a| &a.k))?;
        let v = project(&self.wv, adapters.map(|a| &a.v))?;

        let mut head_outputs = Vec::with_capacity(self.heads);
        let scale = 1.0 / (head_dim as f64).sqrt();
        for hd in 0..self.heads {
            let (lo, hi) = (hd * head_dim, (hd + 1) * head_dim);
            let qh = q.slice_cols(lo, hi)?;
            let kh = k.slice_cols(lo, hi)?;
            let vh = v.slice_cols(lo, hi)?;
            let attn = qh.matmul(&kh.transpose()?)?.scale(scale).softmax_rows()?;
            head_outputs.push(attn.matmul(&vh)?);
        }
        let merged = Tensor::concat_cols(&head_outputs)?;
        let x = x.add(&self.wo.forward(&merged)?)?;

        let h2 = x.layernorm_rows(LN_EPS)?;
        let m = self.mlp_out.forward(&self.mlp_in.forward(&h2)?.relu())?;
        let out = x.add(&m)?;
        debug_assert_eq!(out.shape(), vec![tokens, dim]);
        Ok((out, k))
    }
}

/// Per-block LoRA adapters on the attention q/k/v projections.
pub struct BlockAdapters {
    pub q: LoraAdapter,
    pub k: LoraAdapter,
    pub v: LoraAdapter,
}

pub struct VisionAdapters {
    pub blocks: Vec<BlockAdapters>,
}

impl VisionAdapters {
    pub fn init(config: &ViTConfig, rank: usize, alpha: f64, rng: &mut impl Rng) -> Self {
        let d = config.embed_dim;
        let blocks = (0..config.layers)
            .map(|_| BlockAdapters {
                q: LoraAdapter::init(d, d, rank, alpha, rng),
                k: LoraAdapter::init(d, d, rank, alpha, rng),
                v: LoraAdapter::init(d, d, rank, alpha, rng),
            })
            .collect();
        VisionAdapters { blocks }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for (tag, a) in [("q", &b.q), ("k", &b.k), ("v", &b.v)] {
                out.push((format!("lora.{i}.{tag}.A"), a.a.clone()));
                out.push((format!("lora.{i}.{tag}.B"), a.b.clone()));
            }
        }
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.q.num_trainable() + b.k.num_trainable() + b.v.num_trainable())
            .sum()
    }
}

/// Frozen vision transformer backbone.
pub struct VisionEncoder {
    pub config: ViTConfig,
    patch_proj: Linear,
    cls_token: Tensor,
    pos_embed: Tensor,
    blocks: Vec<AttentionBlock>,
}

impl VisionEncoder {
    pub fn init(config: ViTConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let n = config.num_patches();
        let patch_proj = Linear::init(config.patch_dim(), d, rng);
        let cls_token = Tensor::randn(vec![1, d], 0.5, rng);
        let pos_embed = Tensor::randn(vec![n + 1, d], 0.5, rng);
        let blocks = (0..config.layers)
            .map(|_| AttentionBlock::init(d, config.heads, rng))
            .collect();
        Ok(VisionEncoder {
            config,
            patch_proj,
            cls_token,
            pos_embed,
            blocks,
        })
    }

    /// Row-major CHW image -> constant patch matrix N x (P*P*C).
    fn patchify(&self, image: &[f64]) -> Result<Tensor> {
        let c = self.config.channels;
        let hw = self.config.image_size;
        if image.len() != c * hw * hw {
            return Err(Error::InvalidShape {
                op: "patchify",
                shape: vec![image.len()],
                reason: format!("expected {} values for {c}x{hw}x{hw}", c * hw * hw),
            });
        }
        let p = self.config.patch_size;
        let side = hw / p;
        let mut data = Vec::with_capacity(self.config.num_patches() * self.config.patch_dim());
        for py in 0..side {
            for px in 0..side {
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            let y = py * p + dy;
                            let x = px * p + dx;
                            data.push(image[ch * hw * hw + y * hw + x]);
                        }
                    }
                }
            }
        }
        Tensor::from_vec(
            vec![self.config.num_patches(), self.config.patch_dim()],
            data,
        )
    }

    /// Returns (v, keys_j): the CLS embedding of the final layer and the
    /// N patch rows of the key projection at the tap layer (CLS excluded).
    pub fn encode_image(&self, image: &[f64], adapters: &VisionAdapters) -> Result<(Tensor, Tensor)> {
        if adapters.blocks.len() != self.blocks.len() {
            return Err(Error::Config(format!(
                "adapter count {} does not match {} blocks",
                adapters.blocks.len(),
                self.blocks.len()
            )));
        }
        let patches = self.patchify(image)?;
        let embedded = self.patch_proj.forward(&patches)?;
        let tokens = Tensor::concat_rows(&[self.cls_token.clone(), embedded])?;
        let mut x = tokens.add(&self.pos_embed)?;
        let mut keys_j = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let (next, keys) = block.forward(&x, Some(&adapters.blocks[i]))?;
            if i + 1 == self.config.key_tap_layer {
                let n = self.config.num_patches();
                keys_j = Some(keys.slice_rows(1, n + 1)?);
            }
            x = next;
        }
        let v = x.layernorm_rows(LN_EPS)?.slice_rows(0, 1)?;
        Ok((v, keys_j.expect("key_tap_layer validated")))
    }
}

/// Learnable context vectors and class embeddings for both levels.
/// Level 0 is the coarse (instrument, target) level, level 1 the fine
/// triplet level.
pub struct PromptBank {
    pub context: [Tensor; 2],
    pub class_embeddings: [Tensor; 2],
    pub num_context: usize,
}

impl PromptBank {
    /// Class embeddings start as sums of per-attribute vectors, so
    /// classes sharing attributes start nearby; base-class embeddings
    /// then train away while novel ones keep the compositional init.
    pub fn init(taxonomy: &Taxonomy, num_context: usize, width: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / width as f64).sqrt();
        let instrument_vecs = Tensor::randn(vec![taxonomy.instruments.len(), width], std, rng);
        let verb_vecs = Tensor::randn(vec![taxonomy.verbs.len(), width], std, rng);
        let target_vecs = Tensor::randn(vec![taxonomy.targets.len(), width], std, rng);
        let iv = instrument_vecs.data();
        let vv = verb_vecs.data();
        let tv = target_vecs.data();

        let compose = |parts: Vec<usize>, tables: Vec<&[f64]>| -> Vec<f64> {
            let mut row = vec![0.0; width];
            for (idx, table) in parts.iter().zip(tables) {
                for j in 0..width {
                    row[j] += table[idx * width + j];
                }
            }
            row
        };

        let mut coarse = Vec::with_capacity(taxonomy.num_coarse() * width);
        for &(i, t) in &taxonomy.pairs {
            coarse.extend(compose(vec![i, t], vec![&iv, &tv]));
        }
        let mut fine = Vec::with_capacity(taxonomy.num_fine() * width);
        for tr in &taxonomy.triplets {
            fine.extend(compose(
                vec![tr.instrument, tr.verb, tr.target],
                vec![&iv, &vv, &tv],
            ));
        }

        PromptBank {
            context: [
                Tensor::param_randn(vec![num_context, width], std, rng),
                Tensor::param_randn(vec![num_context, width], std, rng),
            ],
            class_embeddings: [
                Tensor::param(vec![taxonomy.num_coarse(), width], coarse).unwrap(),
                Tensor::param(vec![taxonomy.num_fine(), width], fine).unwrap(),
            ],
            num_context,
        }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![
            ("prompt.context.0".into(), self.context[0].clone()),
            ("prompt.context.1".into(), self.context[1].clone()),
            ("prompt.class.0".into(), self.class_embeddings[0].clone()),
            ("prompt.class.1".into(), self.class_embeddings[1].clone()),
        ]
    }

    pub fn num_trainable(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Frozen text transformer with an output projection into the shared
/// embedding space.
pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pos_embed: Tensor,
    blocks: Vec<AttentionBlock>,
    out_proj: Linear,
}

impl TextEncoder {
    pub fn init(
        config: TextEncoderConfig,
        max_seq: usize,
        vision_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate(vision_dim)?;
        let blocks = (0..config.layers)
            .map(|_| AttentionBlock::init(config.width, config.heads, rng))
            .collect();
        Ok(TextEncoder {
            pos_embed: Tensor::randn(vec![max_seq, config.width], 0.5, rng),
            out_proj: Linear::init(config.width, config.output_dim, rng),
            blocks,
            config,
        })
    }

    /// Embed every class at `level`: rows stacked in class-id order.
    pub fn encode_level(&self, bank: &PromptBank, level: usize) -> Result<Tensor> {
        assert!(level < 2, "level must be 0 or 1");
        let classes = bank.class_embeddings[level].shape()[0];
        let seq = bank.num_context + 1;
        if seq > self.pos_embed.shape()[0] {
            return Err(Error::Config(format!(
                "sequence length {seq} exceeds positional table {}",
                self.pos_embed.shape()[0]
            )));
        }
        let pos = self.pos_embed.slice_rows(0, seq)?;
        let mut rows = Vec::with_capacity(classes);
        for c in 0..classes {
            let cls = bank.class_embeddings[level].slice_rows(c, c + 1)?;
            let tokens = Tensor::concat_rows(&[bank.context[level].clone(), cls])?;
            let mut x = tokens.add(&pos)?;
            for block in &self.blocks {
                x = block.forward(&x, None)?.0;
            }
            let last = x.layernorm_rows(LN_EPS)?.slice_rows(seq - 1, seq)?;
            rows.push(self.out_proj.forward(&last)?);
        }
        Tensor::concat_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_vit() -> ViTConfig {
        ViTConfig {
            image_size: 32,
            channels: 3,
            patch_size: 8,
            layers: 4,
            heads: 4,
            embed_dim: 64,
            key_tap_layer: 2,
        }
    }

    fn tiny_taxonomy() -> Taxonomy {
        Taxonomy::parse(
            "T,0,a,u,x\nT,1,a,w,x\nT,2,b,u,y\n[splits]\nut_base_targets=x\nut_novel_targets=y\nuiv_base_pairs=a-u\nuiv_novel_pairs=b-u\n",
            "test",
        )
        .unwrap()
    }

    #[test]
    fn vit_shapes_match_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = desk_vit();
        let enc = VisionEncoder::init(cfg.clone(), &mut rng).unwrap();
        let adapters = VisionAdapters::init(&cfg, 2, 1.0, &mut rng);
        let image = vec![0.25; 3 * 32 * 32];
        let (v, keys) = enc.encode_image(&image, &adapters).unwrap();
        assert_eq!(v.shape(), vec![1, 64]);
        assert_eq!(keys.shape(), vec![16, 64]); // N = (32/8)^2
    }

    #[test]
    fn identical_images_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = desk_vit();
        let enc = VisionEncoder::init(cfg.clone(), &mut rng).unwrap();
        let adapters = VisionAdapters::init(&cfg, 2, 1.0, &mut rng);
        let image: Vec<f64> = (0..3 * 32 * 32).map(|i| (i % 255) as f64 / 255.0).collect();
        let (v1, k1) = enc.encode_image(&image, &adapters).unwrap();
        let (v2, k2) = enc.encode_image(&image, &adapters).unwrap();
        assert_eq!(v1.data(), v2.data());
        assert_eq!(k1.data(), k2.data());
    }

    #[test]
    fn zero_lora_matches_unadapted_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = desk_vit();
        let enc = VisionEncoder::init(cfg.clone(), &mut rng).unwrap();
        let fresh = VisionAdapters::init(&cfg, 2, 1.0, &mut rng);
        let mut nonzero = VisionAdapters::init(&cfg, 2, 1.0, &mut rng);
        nonzero.blocks[0].k.b = Tensor::param_randn(vec![64, 2], 0.1, &mut rng);

        let image: Vec<f64> = (0..3 * 32 * 32).map(|i| ((i * 7) % 100) as f64 / 100.0).collect();
        let (v_fresh, _) = enc.encode_image(&image, &fresh).unwrap();
        let (v_pert, _) = enc.encode_image(&image, &nonzero).unwrap();
        // zero-init B means exactly the base output
        let fresh2 = VisionAdapters::init(&cfg, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(99));
        let (v_fresh2, _) = enc.encode_image(&image, &fresh2).unwrap();
        assert_eq!(v_fresh.data(), v_fresh2.data());
        assert_ne!(v_fresh.data(), v_pert.data());
    }

    #[test]
    fn config_validation_rejects_bad_dims() {
        let mut bad = desk_vit();
        bad.patch_size = 7;
        assert!(bad.validate().is_err());
        let mut bad = desk_vit();
        bad.key_tap_layer = 5;
        assert!(bad.validate().is_err());
        let mut bad = desk_vit();
        bad.heads = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prompt_sequence_length_is_context_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tax = tiny_taxonomy();
        let bank = PromptBank::init(&tax, 8, 32, &mut rng);
        assert_eq!(bank.context[0].shape(), vec![8, 32]);
        // per-class encoder input is [V^1..V^8, cls] = 9 tokens
        let text = TextEncoder::init(
            TextEncoderConfig {
                layers: 2,
                heads: 4,
                width: 32,
                output_dim: 16,
            },
            9,
            16,
            &mut rng,
        )
        .unwrap();
        let z1 = text.encode_level(&bank, 1).unwrap();
        assert_eq!(z1.shape(), vec![3, 16]);
        let z0 = text.encode_level(&bank, 0).unwrap();
        assert_eq!(z0.shape(), vec![tax.num_coarse(), 16]);
    }

    #[test]
    fn identical_class_embeddings_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tax = tiny_taxonomy();
        let mut bank = PromptBank::init(&tax, 4, 32, &mut rng);
        let mut data = bank.class_embeddings[1].data();
        let row: Vec<f64> = data[0..32].to_vec();
        data[32..64].copy_from_slice(&row);
        bank.class_embeddings[1] = Tensor::param(vec![3, 32], data).unwrap();
        let text = TextEncoder::init(
            TextEncoderConfig {
                layers: 2,
                heads: 4,
                width: 32,
                output_dim: 16,
            },
            5,
            16,
            &mut rng,
        )
        .unwrap();
        let z = text.encode_level(&bank, 1).unwrap();
        let d = z.data();
        assert_eq!(d[0..16], d[16..32]);
    }

    #[test]
    fn class_permutation_permutes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tax = tiny_taxonomy();
        let bank = PromptBank::init(&tax, 4, 32, &mut rng);
        let text = TextEncoder::init(
            TextEncoderConfig {
                layers: 2,
                heads: 4,
                width: 32,
                output_dim: 16,
            },
            5,
            16,
            &mut rng,
        )
        .unwrap();
        let z = text.encode_level(&bank, 1).unwrap();

        // swap classes 0 and 2
        let mut swapped = bank;
        let data = swapped.class_embeddings[1].data();
        let mut perm = data.clone();
        perm[0..32].copy_from_slice(&data[64..96]);
        perm[64..96].copy_from_slice(&data[0..32]);
        swapped.class_embeddings[1] = Tensor::param(vec![3, 32], perm).unwrap();
        let zp = text.encode_level(&swapped, 1).unwrap();
        let (a, b) = (z.data(), zp.data());
        assert_eq!(a[0..16], b[32..48]);
        assert_eq!(a[32..48], b[0..16]);
        assert_eq!(a[16..32], b[16..32]);
    }

    #[test]
    fn only_prompts_and_lora_are_trainable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tax = tiny_taxonomy();
        let bank = PromptBank::init(&tax, 4, 32, &mut rng);
        let text = TextEncoder::init(
            TextEncoderConfig {
                layers: 2,
                heads: 4,
                width: 32,
                output_dim: 16,
            },
            5,
            16,
            &mut rng,
        )
        .unwrap();

        let z = text.encode_level(&bank, 1).unwrap();
        let loss = z.mul(&z).unwrap().sum();
        loss.backward().unwrap();
        // context vectors receive gradient
        assert!(bank.context[1].grad().is_some());
        assert!(bank.class_embeddings[1].grad().is_some());
        // frozen base weights receive none
        assert!(text.out_proj.w.grad().is_none());
        assert!(text.blocks[0].wq.w.grad().is_none());
        // untouched level-0 prompts receive none
        assert!(bank.context[0].grad().is_none());
    }

    #[test]
    fn compositional_init_shares_attribute_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tax = tiny_taxonomy();
        let bank = PromptBank::init(&tax, 4, 32, &mut rng);
        let d = bank.class_embeddings[1].data();
        // classes 0 (a,u,x) and 1 (a,w,x) share instrument+target; class 2
        // (b,u,y) shares only the verb with class 0
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let d01 = dist(&d[0..32], &d[32..64]);
        let d02 = dist(&d[0..32], &d[64..96]);
        assert!(d01 < d02, "shared-attribute classes should start closer");
    }
}
