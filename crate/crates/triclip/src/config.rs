//! Run configuration: `key = value` lines under `[section]` headers.
//! Every key is known; parsing rejects anything else. CLI overrides use
//! the dotted form `section.key`.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [run]
    pub seed: u64,
    pub setting: String,
    pub data_dir: String,
    pub out_dir: String,

    // [model] component toggles
    pub soft_prompt: bool,
    pub lora: bool,
    pub hierarchy: bool,
    pub sgc: bool,

    // [vit]
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub vit_layers: usize,
    pub vit_heads: usize,
    pub embed_dim: usize,

    // [text]
    pub text_layers: usize,
    pub text_heads: usize,
    pub text_width: usize,
    pub context_tokens: usize,

    // [lora]
    pub lora_rank: usize,
    pub lora_alpha: f64,

    // [sgc]
    pub sgc_j: usize,
    pub sgc_k: usize,
    pub leaky_slope: f64,
    /// 0 disables edge sparsification.
    pub topk_edges: usize,

    // [align]
    pub tau: f64,
    pub tau_learnable: bool,

    // [loss]
    pub margin: f64,
    pub negatives_per_pair: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alphah: f64,
    pub proj_dim: usize,

    // [optim]
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,

    // [data]
    pub augment: bool,

    // [ablate]
    pub ablate_layers: Vec<usize>,
    pub ablate_clusters: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            setting: "ut".into(),
            data_dir: "data/synthetic".into(),
            out_dir: "runs/default".into(),
            soft_prompt: true,
            lora: true,
            hierarchy: true,
            sgc: true,
            image_size: 32,
            channels: 3,
            patch_size: 8,
            vit_layers: 4,
            vit_heads: 4,
            embed_dim: 64,
            text_layers: 2,
            text_heads: 4,
            text_width: 64,
            context_tokens: 8,
            lora_rank: 2,
            lora_alpha: 1.0,
            sgc_j: 2,
            sgc_k: 4,
            leaky_slope: 0.2,
            topk_edges: 0,
            tau: 10.0,
            tau_learnable: false,
            margin: 0.7,
            negatives_per_pair: 5,
            alpha0: 1.0,
            alpha1: 1.0,
            alphah: 1.0,
            proj_dim: 32,
            lr: 1e-3,
            weight_decay: 1e-2,
            batch: 32,
            epochs: 30,
            augment: true,
            ablate_layers: vec![1, 2, 3, 4],
            ablate_clusters: vec![2, 4, 8],
        }
    }
}

fn parse_as<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::Config(format!("bad value '{value}' for {section}.{key}"))
    })
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "bad value '{other}' for {section}.{key} (true|false)"
        ))),
    }
}

fn parse_list(section: &str, key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_as(section, key, s))
        .collect()
}

fn fmt_list(items: &[usize]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Assign one field from its dotted name.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (section, key) = dotted
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("expected section.key, got '{dotted}'")))?;
        match (section, key) {
            ("run", "seed") => self.seed = parse_as(section, key, value)?,
            ("run", "setting") => {
                let s: crate::taxonomy::Setting = parse_as(section, key, value)?;
                self.setting = s.to_string();
            }
            ("run", "data_dir") => self.data_dir = value.trim().to_string(),
            ("run", "out_dir") => self.out_dir = value.trim().to_string(),
            ("model", "soft_prompt") => self.soft_prompt = parse_bool(section, key, value)?,
            ("model", "lora") => self.lora = parse_bool(section, key, value)?,
            ("model", "hierarchy") => self.hierarchy = parse_bool(section, key, value)?,
            ("model", "sgc") => self.sgc = parse_bool(section, key, value)?,
            ("vit", "image_size") => self.image_size = parse_as(section, key, value)?,
            ("vit", "channels") => self.channels = parse_as(section, key, value)?,
            ("vit", "patch_size") => self.patch_size = parse_as(section, key, value)?,
            ("vit", "layers") => self.vit_layers = parse_as(section, key, value)?,
            ("vit", "heads") => self.vit_heads = parse_as(section, key, value)?,
            ("vit", "embed_dim") => self.embed_dim = parse_as(section, key, value)?,
            ("text", "layers") => self.text_layers = parse_as(section, key, value)?,
            ("text", "heads") => self.text_heads = parse_as(section, key, value)?,
            ("text", "width") => self.text_width = parse_as(section, key, value)?,
            ("text", "context_tokens") => self.context_tokens = parse_as(section, key, value)?,
            ("lora", "rank") => self.lora_rank = parse_as(section, key, value)?,
            ("lora", "alpha") => self.lora_alpha = parse_as(section, key, value)?,
            ("sgc", "j") => self.sgc_j = parse_as(section, key, value)?,
            ("sgc", "k") => self.sgc_k = parse_as(section, key, value)?,
            ("sgc", "leaky_slope") => self.leaky_slope = parse_as(section, key, value)?,
            ("sgc", "topk_edges") => self.topk_edges = parse_as(section, key, value)?,
            ("align", "tau") => self.tau = parse_as(section, key, value)?,
            ("align", "tau_learnable") => self.tau_learnable = parse_bool(section, key, value)?,
            ("loss", "margin") => self.margin = parse_as(section, key, value)?,
            ("loss", "negatives_per_pair") => {
                self.negatives_per_pair = parse_as(section, key, value)?
            }
            ("loss", "alpha0") => self.alpha0 = parse_as(section, key, value)?,
            ("loss", "alpha1") => self.alpha1 = parse_as(section, key, value)?,
            ("loss", "alphah") => self.alphah = parse_as(section, key, value)?,
            ("loss", "proj_dim") => self.proj_dim = parse_as(section, key, value)?,
            ("optim", "lr") => self.lr = parse_as(section, key, value)?,
            ("optim", "weight_decay") => self.weight_decay = parse_as(section, key, value)?,
            ("optim", "batch") => self.batch = parse_as(section, key, value)?,
            ("optim", "epochs") => self.epochs = parse_as(section, key, value)?,
            ("data", "augment") => self.augment = parse_bool(section, key, value)?,
            ("ablate", "layers") => self.ablate_layers = parse_list(section, key, value)?,
            ("ablate", "clusters") => self.ablate_clusters = parse_list(section, key, value)?,
            _ => {
                return Err(Error::Config(format!("unknown config key '{dotted}'")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, lineno, "expected key = value"))?;
            if section.is_empty() {
                return Err(Error::parse(origin, lineno, "key before any [section]"));
            }
            cfg.set(&format!("{section}.{}", key.trim()), value)
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "[run]");
        let _ = writeln!(w, "seed = {}", self.seed);
        let _ = writeln!(w, "setting = {}", self.setting);
        let _ = writeln!(w, "data_dir = {}", self.data_dir);
        let _ = writeln!(w, "out_dir = {}", self.out_dir);
        let _ = writeln!(w, "\n[model]");
        let _ = writeln!(w, "soft_prompt = {}", self.soft_prompt);
        let _ = writeln!(w, "lora = {}", self.lora);
        let _ = writeln!(w, "hierarchy = {}", self.hierarchy);
        let _ = writeln!(w, "sgc = {}", self.sgc);
        let _ = writeln!(w, "\n[vit]");
        let _ = writeln!(w, "image_size = {}", self.image_size);
        let _ = writeln!(w, "channels = {}", self.channels);
        let _ = writeln!(w, "patch_size = {}", self.patch_size);
        let _ = writeln!(w, "layers = {}", self.vit_layers);
        let _ = writeln!(w, "heads = {}", self.vit_heads);
        let _ = writeln!(w, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(w, "\n[text]");
        let _ = writeln!(w, "layers = {}", self.text_layers);
        let _ = writeln!(w, "heads = {}", self.text_heads);
        let _ = writeln!(w, "width = {}", self.text_width);
        let _ = writeln!(w, "context_tokens = {}", self.context_tokens);
        let _ = writeln!(w, "\n[lora]");
        let _ = writeln!(w, "rank = {}", self.lora_rank);
        let _ = writeln!(w, "alpha = {}", self.lora_alpha);
        let _ = writeln!(w, "\n[sgc]");
        let _ = writeln!(w, "j = {}", self.sgc_j);
        let _ = writeln!(w, "k = {}", self.sgc_k);
        let _ = writeln!(w, "leaky_slope = {}", self.leaky_slope);
        let _ = writeln!(w, "topk_edges = {}", self.topk_edges);
        let _ = writeln!(w, "\n[align]");
        let _ = writeln!(w, "tau = {}", self.tau);
        let _ = writeln!(w, "tau_learnable = {}", self.tau_learnable);
        let _ = writeln!(w, "\n[loss]");
        let _ = writeln!(w, "margin = {}", self.margin);
        let _ = writeln!(w, "negatives_per_pair = {}", self.negatives_per_pair);
        let _ = writeln!(w, "alpha0 = {}", self.alpha0);
        let _ = writeln!(w, "alpha1 = {}", self.alpha1);
        let _ = writeln!(w, "alphah = {}", self.alphah);
        let _ = writeln!(w, "proj_dim = {}", self.proj_dim);
        let _ = writeln!(w, "\n[optim]");
        let _ = writeln!(w, "lr = {}", self.lr);
        let _ = writeln!(w, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(w, "batch = {}", self.batch);
        let _ = writeln!(w, "epochs = {}", self.epochs);
        let _ = writeln!(w, "\n[data]");
        let _ = writeln!(w, "augment = {}", self.augment);
        let _ = writeln!(w, "\n[ablate]");
        let _ = writeln!(w, "layers = {}", fmt_list(&self.ablate_layers));
        let _ = writeln!(w, "clusters = {}", fmt_list(&self.ablate_clusters));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 || self.margin > 2.0 {
            return Err(Error::Config(format!(
                "loss.margin {} outside (0, 2]",
                self.margin
            )));
        }
        if self.alpha0 < 0.0 || self.alpha1 < 0.0 || self.alphah < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.sgc_j == 0 || self.sgc_j > self.vit_layers {
            return Err(Error::Config(format!(
                "sgc.j {} must be in 1..={}",
                self.sgc_j, self.vit_layers
            )));
        }
        if self.sgc_k == 0 {
            return Err(Error::Config("sgc.k must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("optim.batch must be positive".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("align.tau must be positive".into()));
        }
        self.setting.parse::<crate::taxonomy::Setting>()?;
        Ok(())
    }
}
