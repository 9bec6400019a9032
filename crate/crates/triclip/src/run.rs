//! End-to-end drivers behind the CLI subcommands: dataset generation,
//! split assignment, training, evaluation, ablation grids, and reports.

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{
    self, assign_partitions, augment, AugmentConfig, DatasetBundle, SceneSpec, SplitAssignment,
};
use crate::error::{Error, Result};
use crate::metrics::{
    f1_at_k, harmonic_mean, per_class_ap, per_class_f1_at_k, ScoreTable,
};
use crate::model::Model;
use crate::optim::AdamW;
use crate::taxonomy::{Setting, SplitSpec, Taxonomy};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Generate the synthetic dataset into `cfg.data_dir`.
pub fn run_gen_data(cfg: &RunConfig, count: usize) -> Result<()> {
    let tax = data::synthetic_taxonomy();
    let spec = SceneSpec {
        image_size: cfg.image_size,
        ..Default::default()
    };
    let bundle = data::generate(&spec, &tax, count, cfg.seed)?;
    data::write_dataset(&cfg.data_dir, &bundle, data::SYNTHETIC_VOCABULARY)?;
    println!("wrote {count} frames to {}", cfg.data_dir);
    Ok(())
}

/// Apply the leakage filter and write `split.json` next to the dataset.
pub fn run_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    let tax = load_taxonomy(cfg)?;
    let setting: Setting = cfg.setting.parse()?;
    let split = tax.build_split(setting)?;
    let annotations = crate::taxonomy::load_annotations(
        Path::new(&cfg.data_dir).join("annotations.jsonl"),
        tax.num_fine(),
    )?;
    let assign = assign_partitions(&annotations, &split, cfg.seed);
    let path = Path::new(&cfg.data_dir).join(format!("split_{}.json", cfg.setting));
    let json = serde_json::to_string_pretty(&assign)
        .map_err(|e| Error::Format(format!("split serialization: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!(
        "split {}: {} train, {}/{} val base/novel, {}/{} test base/novel, {} dropped",
        cfg.setting,
        assign.train.len(),
        assign.val_base.len(),
        assign.val_novel.len(),
        assign.test_base.len(),
        assign.test_novel.len(),
        assign.dropped
    );
    Ok(assign)
}

fn load_taxonomy(cfg: &RunConfig) -> Result<Taxonomy> {
    let vocab = Path::new(&cfg.data_dir).join("vocabulary.txt");
    Taxonomy::load(vocab)
}

pub struct Environment {
    pub taxonomy: Taxonomy,
    pub bundle: DatasetBundle,
    pub by_stem: HashMap<String, usize>,
    pub split: SplitSpec,
    pub assign: SplitAssignment,
}

pub fn load_environment(cfg: &RunConfig) -> Result<Environment> {
    let taxonomy = load_taxonomy(cfg)?;
    let bundle = data::ingest(&cfg.data_dir, &taxonomy)?;
    let by_stem: HashMap<String, usize> = bundle
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| (data::frame_stem(&f.annotation), i))
        .collect();
    let setting: Setting = cfg.setting.parse()?;
    let split = taxonomy.build_split(setting)?;
    let split_path = Path::new(&cfg.data_dir).join(format!("split_{}.json", cfg.setting));
    let text = std::fs::read_to_string(&split_path)
        .map_err(|e| Error::io(split_path.display().to_string(), e))?;
    let assign: SplitAssignment = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", split_path.display())))?;
    for stem in assign
        .train
        .iter()
        .chain(&assign.val_base)
        .chain(&assign.val_novel)
        .chain(&assign.test_base)
        .chain(&assign.test_novel)
    {
        if !by_stem.contains_key(stem) {
            return Err(Error::Config(format!(
                "split references missing frame '{stem}'"
            )));
        }
    }
    Ok(Environment {
        taxonomy,
        bundle,
        by_stem,
        split,
        assign,
    })
}

fn sorted_ids(set: &std::collections::BTreeSet<usize>) -> Vec<usize> {
    set.iter().copied().collect()
}

/// Fused fine-level scores for the given frames restricted to `class_ids`.
pub fn score_frames(
    model: &Model,
    env: &Environment,
    stems: &[String],
    class_ids: &[usize],
    batch: usize,
) -> Result<ScoreTable> {
    let mut scores = Vec::with_capacity(stems.len());
    let mut labels = Vec::with_capacity(stems.len());
    for chunk in stems.chunks(batch.max(1)) {
        let images: Vec<Vec<f64>> = chunk
            .iter()
            .map(|s| env.bundle.frames[env.by_stem[s]].image.to_chw())
            .collect();
        let out = model.forward(&images)?;
        let fused = out.fused1.data();
        let c = model.taxonomy.num_fine();
        for (row, stem) in chunk.iter().enumerate() {
            let frame = &env.bundle.frames[env.by_stem[stem]];
            scores.push(
                class_ids
                    .iter()
                    .map(|&id| fused[row * c + id])
                    .collect::<Vec<f64>>(),
            );
            labels.push(
                class_ids
                    .iter()
                    .map(|&id| frame.annotation.labels[id])
                    .collect::<Vec<u8>>(),
            );
        }
    }
    Ok(ScoreTable::new(scores, labels, class_ids.to_vec()))
}

fn val_hm_f1(model: &Model, env: &Environment, cfg: &RunConfig) -> Result<f64> {
    let base_ids = sorted_ids(&env.split.base_classes);
    let novel_ids = sorted_ids(&env.split.novel_classes);
    let base =
        score_frames(model, env, &env.assign.val_base, &base_ids, cfg.batch)?;
    let novel =
        score_frames(model, env, &env.assign.val_novel, &novel_ids, cfg.batch)?;
    let fb = f1_at_k(&base, 3).unwrap_or(0.0);
    let fnv = f1_at_k(&novel, 3).unwrap_or(0.0);
    Ok(harmonic_mean(fb, fnv))
}

pub struct TrainOutcome {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_val_hm_f1: f64,
    pub steps: u64,
    pub checkpoint: PathBuf,
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let env = load_environment(cfg)?;
    let model = Model::init(cfg, env.taxonomy.clone())?;
    println!("trainable parameters: {}", model.num_trainable());

    let out_dir = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(cfg.out_dir.clone(), e))?;
    let log_path = out_dir.join("train_log.csv");
    let mut log = std::fs::File::create(&log_path)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    writeln!(log, "step,L0,L1,Lmargin,Ltotal")
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;

    let mut opt = AdamW::new(
        model.named_trainable(),
        cfg.lr,
        cfg.weight_decay,
        ["tau".to_string()],
    );
    let aug = AugmentConfig {
        enabled: cfg.augment,
        force_flip: None,
        crop: true,
    };
    let ckpt_path = out_dir.join("best.ckpt");
    let mut best_hm = f64::NEG_INFINITY;
    let mut initial_loss = None;
    let mut final_loss = 0.0;
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut order = env.assign.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64 + 1));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let mut images = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for stem in chunk {
                let frame = &env.bundle.frames[env.by_stem[stem]];
                let img = augment(&frame.image, cfg.seed, frame.annotation.frame_id, &aug);
                images.push(img.to_chw());
                labels.push(frame.annotation.labels.clone());
            }
            let losses = model.compute_losses(&images, &labels, step)?;
            let total = losses.total.item();
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at step {step}"
                )));
            }
            losses.total.backward()?;
            opt.step()?;
            writeln!(
                log,
                "{step},{:.6},{:.6},{:.6},{:.6}",
                losses.l0.item(),
                losses.l1.item(),
                losses.lmargin.item(),
                total
            )
            .map_err(|e| Error::io(log_path.display().to_string(), e))?;
            initial_loss.get_or_insert(total);
            final_loss = total;
            step += 1;
        }
        let hm = val_hm_f1(&model, &env, cfg)?;
        if hm > best_hm {
            best_hm = hm;
            checkpoint::save(&ckpt_path, cfg, &model.named_trainable())?;
        }
    }
    if !ckpt_path.exists() {
        checkpoint::save(&ckpt_path, cfg, &model.named_trainable())?;
    }
    Ok(TrainOutcome {
        initial_loss: initial_loss.unwrap_or(0.0),
        final_loss,
        best_val_hm_f1: best_hm.max(0.0),
        steps: step,
        checkpoint: ckpt_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Base,
    Novel,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Side::Base),
            "novel" => Ok(Side::Novel),
            other => Err(Error::Config(format!("unknown side '{other}' (base|novel)"))),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub side: String,
    pub frames: usize,
    pub map: f64,
    pub f1_at_3: f64,
}

/// Rebuild the model from a checkpoint and score the chosen test side.
/// Writes `scores_<side>.jsonl` and `metrics_<side>.json` under out_dir.
pub fn run_eval(cfg: &RunConfig, ckpt_path: &Path, side: Side) -> Result<EvalReport> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let mut model_cfg = ckpt.config.clone();
    model_cfg.data_dir = cfg.data_dir.clone();
    model_cfg.out_dir = cfg.out_dir.clone();
    let env = load_environment(&model_cfg)?;
    let model = Model::init(&model_cfg, env.taxonomy.clone())?;
    checkpoint::apply(&model, &ckpt)?;

    let (stems, ids) = match side {
        Side::Base => (&env.assign.test_base, sorted_ids(&env.split.base_classes)),
        Side::Novel => (&env.assign.test_novel, sorted_ids(&env.split.novel_classes)),
    };
    if stems.is_empty() {
        return Err(Error::Config(format!(
            "empty {} test set",
            match side {
                Side::Base => "base",
                Side::Novel => "novel",
            }
        )));
    }
    let table = score_frames(&model, &env, stems, &ids, model_cfg.batch)?;

    let out_dir = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(cfg.out_dir.clone(), e))?;
    let tag = match side {
        Side::Base => "base",
        Side::Novel => "novel",
    };
    let scores_path = out_dir.join(format!("scores_{tag}.jsonl"));
    let mut f = std::fs::File::create(&scores_path)
        .map_err(|e| Error::io(scores_path.display().to_string(), e))?;
    for (i, stem) in stems.iter().enumerate() {
        let line = serde_json::json!({
            "frame": stem,
            "class_ids": ids,
            "scores": table.scores[i],
            "labels": table.labels[i],
        });
        writeln!(f, "{line}").map_err(|e| Error::io(scores_path.display().to_string(), e))?;
    }

    let report = EvalReport {
        side: tag.to_string(),
        frames: stems.len(),
        map: crate::metrics::mean_average_precision(&table).unwrap_or(0.0),
        f1_at_3: f1_at_k(&table, 3).unwrap_or(0.0),
    };
    let metrics_path = out_dir.join(format!("metrics_{tag}.json"));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("metrics serialization: {e}")))?;
    std::fs::write(&metrics_path, json)
        .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Components,
    LayerJ,
    ClustersK,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "components" => Ok(Axis::Components),
            "layer_j" => Ok(Axis::LayerJ),
            "clusters_k" => Ok(Axis::ClustersK),
            other => Err(Error::Config(format!(
                "unknown ablation axis '{other}' (components|layer_j|clusters_k)"
            ))),
        }
    }
}

fn train_eval_once(cfg: &RunConfig) -> Result<(EvalReport, EvalReport)> {
    let outcome = run_train(cfg)?;
    let base = run_eval(cfg, &outcome.checkpoint, Side::Base)?;
    let novel = run_eval(cfg, &outcome.checkpoint, Side::Novel)?;
    Ok((base, novel))
}

/// Run the configured grid and tabulate base/novel/HM metrics per row.
pub fn run_ablate(cfg: &RunConfig, axis: Axis) -> Result<PathBuf> {
    let rows: Vec<(String, RunConfig)> = match axis {
        Axis::Components => {
            // cumulative toggle pattern: prompt, +lora, +hierarchy, +sgc, full
            let toggles = [
                (true, false, false, false),
                (true, true, false, false),
                (true, true, true, false),
                (true, true, false, true),
                (true, true, true, true),
            ];
            toggles
                .iter()
                .map(|&(sp, lo, hi, sg)| {
                    let mut c = cfg.clone();
                    c.soft_prompt = sp;
                    c.lora = lo;
                    c.hierarchy = hi;
                    c.sgc = sg;
                    c.out_dir = format!(
                        "{}/components_{}{}{}{}",
                        cfg.out_dir, sp as u8, lo as u8, hi as u8, sg as u8
                    );
                    (format!("sp={sp} lora={lo} hier={hi} sgc={sg}"), c)
                })
                .collect()
        }
        Axis::LayerJ => cfg
            .ablate_layers
            .iter()
            .map(|&j| {
                let mut c = cfg.clone();
                c.sgc_j = j;
                c.out_dir = format!("{}/layer_j_{j}", cfg.out_dir);
                (format!("j={j}"), c)
            })
            .collect(),
        Axis::ClustersK => cfg
            .ablate_clusters
            .iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.sgc_k = k;
                c.out_dir = format!("{}/clusters_k_{k}", cfg.out_dir);
                (format!("k={k}"), c)
            })
            .collect(),
    };

    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(cfg.out_dir.clone(), e))?;
    let csv_path = Path::new(&cfg.out_dir).join("ablation.csv");
    let mut csv = String::from(
        "variant,base_map,novel_map,hm_map,base_f1,novel_f1,hm_f1\n",
    );
    for (label, row_cfg) in rows {
        row_cfg.validate()?;
        let (base, novel) = train_eval_once(&row_cfg)?;
        csv.push_str(&format!(
            "{label},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            base.map,
            novel.map,
            harmonic_mean(base.map, novel.map),
            base.f1_at_3,
            novel.f1_at_3,
            harmonic_mean(base.f1_at_3, novel.f1_at_3),
        ));
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    Ok(csv_path)
}

/// Full report from a checkpoint: combined metrics, per-class table, and
/// cluster-assignment rasters for a handful of test frames.
pub fn run_report(cfg: &RunConfig, ckpt_path: &Path) -> Result<()> {
    let base = run_eval(cfg, ckpt_path, Side::Base)?;
    let novel = run_eval(cfg, ckpt_path, Side::Novel)?;
    let out_dir = Path::new(&cfg.out_dir);

    let combined = serde_json::json!({
        "base": base,
        "novel": novel,
        "hm_map": harmonic_mean(base.map, novel.map),
        "hm_f1_at_3": harmonic_mean(base.f1_at_3, novel.f1_at_3),
    });
    let metrics_path = out_dir.join("metrics.json");
    std::fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&combined)
            .map_err(|e| Error::Format(format!("metrics serialization: {e}")))?,
    )
    .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;

    // per-class AP and F1 over the whole test set (both sides, own columns)
    let ckpt = checkpoint::load(ckpt_path)?;
    let mut model_cfg = ckpt.config.clone();
    model_cfg.data_dir = cfg.data_dir.clone();
    let env = load_environment(&model_cfg)?;
    let model = Model::init(&model_cfg, env.taxonomy.clone())?;
    checkpoint::apply(&model, &ckpt)?;

    let mut csv = String::from("class_id,name,ap,f1\n");
    for (stems, ids) in [
        (&env.assign.test_base, sorted_ids(&env.split.base_classes)),
        (&env.assign.test_novel, sorted_ids(&env.split.novel_classes)),
    ] {
        if stems.is_empty() {
            continue;
        }
        let table = score_frames(&model, &env, stems, &ids, model_cfg.batch)?;
        let aps = per_class_ap(&table);
        let f1s = per_class_f1_at_k(&table, 3);
        for id in &ids {
            let t = &env.taxonomy.triplets[*id];
            let name = format!(
                "{}-{}-{}",
                env.taxonomy.instruments[t.instrument],
                env.taxonomy.verbs[t.verb],
                env.taxonomy.targets[t.target]
            );
            let ap = aps.get(id).map_or(String::from(""), |v| format!("{v:.4}"));
            let f1 = f1s.get(id).map_or(String::from(""), |v| format!("{v:.4}"));
            csv.push_str(&format!("{id},{name},{ap},{f1}\n"));
        }
    }
    let csv_path = out_dir.join("per_class.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    // cluster rasters: argmax assignment per patch, upsampled to pixels
    let clusters_dir = out_dir.join("clusters");
    std::fs::create_dir_all(&clusters_dir)
        .map_err(|e| Error::io(clusters_dir.display().to_string(), e))?;
    let sample: Vec<&String> = env
        .assign
        .test_base
        .iter()
        .chain(&env.assign.test_novel)
        .take(8)
        .collect();
    let side = model_cfg.image_size / model_cfg.patch_size;
    for stem in sample {
        let frame = &env.bundle.frames[env.by_stem[stem]];
        let out = model.forward(&[frame.image.to_chw()])?;
        if out.assignments.is_empty() {
            continue;
        }
        let clusters = out.assignments[0].argmax_clusters();
        let k = model_cfg.sgc_k.max(2);
        let size = model_cfg.image_size;
        let mut gray = vec![0u8; size * size];
        for y in 0..size {
            for x in 0..size {
                let patch = (y / model_cfg.patch_size) * side + x / model_cfg.patch_size;
                gray[y * size + x] = (clusters[patch] * 255 / (k - 1)) as u8;
            }
        }
        data::ppm::write_pgm(clusters_dir.join(format!("{stem}.pgm")), size, size, &gray)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(dir: &Path) -> RunConfig {
        RunConfig {
            image_size: 16,
            patch_size: 8,
            vit_layers: 2,
            vit_heads: 2,
            embed_dim: 16,
            text_layers: 1,
            text_heads: 2,
            text_width: 16,
            context_tokens: 4,
            sgc_j: 1,
            sgc_k: 2,
            proj_dim: 8,
            batch: 8,
            epochs: 1,
            data_dir: dir.join("data").display().to_string(),
            out_dir: dir.join("out").display().to_string(),
            ..Default::default()
        }
    }

    fn prepared(dir: &Path, frames: usize) -> RunConfig {
        let cfg = tiny_cfg(dir);
        run_gen_data(&cfg, frames).unwrap();
        run_split(&cfg).unwrap();
        cfg
    }

    #[test]
    fn train_log_has_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = prepared(dir.path(), 40);
        let outcome = run_train(&cfg).unwrap();
        let log =
            std::fs::read_to_string(Path::new(&cfg.out_dir).join("train_log.csv")).unwrap();
        let rows = log.lines().count() - 1; // header
        assert_eq!(rows as u64, outcome.steps);
        assert!(outcome.checkpoint.exists());
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = prepared(dir.path(), 24);
        cfg.lr = 0.0;
        cfg.weight_decay = 0.0;
        let fresh = Model::init(&cfg, load_taxonomy(&cfg).unwrap()).unwrap();
        let before: Vec<Vec<f64>> = fresh
            .named_trainable()
            .iter()
            .map(|(_, t)| t.data())
            .collect();
        run_train(&cfg).unwrap();
        let ckpt = checkpoint::load(Path::new(&cfg.out_dir).join("best.ckpt")).unwrap();
        for ((_, t), b) in ckpt.params.iter().zip(before) {
            assert_eq!(t.data(), b);
        }
    }

    #[test]
    fn eval_writes_scores_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = prepared(dir.path(), 60);
        let outcome = run_train(&cfg).unwrap();
        let base = run_eval(&cfg, &outcome.checkpoint, Side::Base).unwrap();
        let novel = run_eval(&cfg, &outcome.checkpoint, Side::Novel).unwrap();
        assert!(base.frames > 0 && novel.frames > 0);
        assert!(Path::new(&cfg.out_dir).join("scores_base.jsonl").exists());
        assert!(Path::new(&cfg.out_dir).join("metrics_novel.json").exists());
        // scores restricted to the side's columns only
        let line = std::fs::read_to_string(Path::new(&cfg.out_dir).join("scores_novel.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["class_ids"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn eval_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = prepared(dir.path(), 40);
        let outcome = run_train(&cfg).unwrap();
        let a = run_eval(&cfg, &outcome.checkpoint, Side::Base).unwrap();
        let m1 = std::fs::read_to_string(Path::new(&cfg.out_dir).join("metrics_base.json"))
            .unwrap();
        let b = run_eval(&cfg, &outcome.checkpoint, Side::Base).unwrap();
        let m2 = std::fs::read_to_string(Path::new(&cfg.out_dir).join("metrics_base.json"))
            .unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(m1, m2);
    }

    #[test]
    fn missing_split_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        run_gen_data(&cfg, 10).unwrap();
        assert!(run_train(&cfg).is_err());
    }

    #[test]
    fn report_emits_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = prepared(dir.path(), 60);
        let outcome = run_train(&cfg).unwrap();
        run_report(&cfg, &outcome.checkpoint).unwrap();
        let out = Path::new(&cfg.out_dir);
        assert!(out.join("metrics.json").exists());
        let per_class = std::fs::read_to_string(out.join("per_class.csv")).unwrap();
        assert!(per_class.lines().count() > 1);
        let clusters: Vec<_> = std::fs::read_dir(out.join("clusters")).unwrap().collect();
        assert!(!clusters.is_empty());
    }

    #[test]
    fn single_point_ablation_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = prepared(dir.path(), 40);
        cfg.ablate_clusters = vec![2];
        let csv_path = run_ablate(&cfg, Axis::ClustersK).unwrap();
        let csv = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(csv.lines().count(), 2); // header + one row
        assert!(csv.lines().nth(1).unwrap().starts_with("k=2,"));
    }
}
