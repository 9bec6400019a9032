//! Synthetic triplet-scene dataset: deterministic renderer with exact
//! ground-truth labels, ingestion of external annotation directories,
//! light augmentation, and train/val/test partitioning.

pub mod ppm;

use crate::error::{Error, Result};
use crate::taxonomy::{
    frame_side, FrameAnnotation, FrameSide, Setting, SplitSpec, Taxonomy,
};
use ppm::Image;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// 12-class toy vocabulary with renderers for every entry.
pub const SYNTHETIC_VOCABULARY: &str = "\
T,0,probe,touch,amber
T,1,probe,sweep,amber
T,2,clamp,touch,amber
T,3,wand,sweep,amber
T,4,probe,sweep,coral
T,5,clamp,touch,coral
T,6,clamp,sweep,coral
T,7,wand,touch,coral
T,8,probe,touch,jade
T,9,clamp,sweep,jade
T,10,wand,touch,onyx
T,11,probe,sweep,onyx

[splits]
ut_base_targets = amber, coral
ut_novel_targets = jade, onyx
uiv_base_pairs = probe-touch, probe-sweep, clamp-touch, wand-sweep
uiv_novel_pairs = clamp-sweep, wand-touch
";

pub fn synthetic_taxonomy() -> Taxonomy {
    Taxonomy::parse(SYNTHETIC_VOCABULARY, "<synthetic>").expect("synthetic vocabulary must parse")
}

/// Scene generation knobs. Fractions give the mix of frames drawing only
/// base classes, only novel classes, and from the whole vocabulary.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub image_size: usize,
    pub max_triplets_per_frame: usize,
    pub base_fraction: f64,
    pub novel_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            image_size: 32,
            max_triplets_per_frame: 3,
            base_fraction: 0.7,
            novel_fraction: 0.2,
        }
    }
}

pub struct Frame {
    pub image: Image,
    pub annotation: FrameAnnotation,
}

pub struct DatasetBundle {
    pub frames: Vec<Frame>,
}

fn target_color(name: &str) -> Result<fn(usize, usize) -> [u8; 3]> {
    Ok(match name {
        "amber" => |_, _| [200, 160, 60],
        "coral" => |_, y| {
            if (y / 2) % 2 == 0 {
                [230, 110, 90]
            } else {
                [180, 70, 60]
            }
        },
        "jade" => |x, y| {
            if (x / 2 + y / 2) % 2 == 0 {
                [60, 180, 120]
            } else {
                [30, 120, 80]
            }
        },
        "onyx" => |_, _| [40, 40, 50],
        other => {
            return Err(Error::Config(format!("no renderer for target '{other}'")))
        }
    })
}

fn check_renderable(tax: &Taxonomy) -> Result<()> {
    for t in &tax.targets {
        target_color(t)?;
    }
    for i in &tax.instruments {
        if !matches!(i.as_str(), "probe" | "clamp" | "wand") {
            return Err(Error::Config(format!("no renderer for instrument '{i}'")));
        }
    }
    for v in &tax.verbs {
        if !matches!(v.as_str(), "touch" | "sweep") {
            return Err(Error::Config(format!("no renderer for verb '{v}'")));
        }
    }
    Ok(())
}

/// Draw one interaction into a quadrant: the target sets the quadrant
/// texture, the instrument picks the glyph, the verb its orientation.
fn draw_interaction(
    img: &mut Image,
    tax: &Taxonomy,
    triplet_id: usize,
    quadrant: usize,
) -> Result<()> {
    let t = &tax.triplets[triplet_id];
    let q = img.width / 2;
    let (qx, qy) = ((quadrant % 2) * q, (quadrant / 2) * q);
    let texture = target_color(&tax.targets[t.target])?;
    for y in 0..q {
        for x in 0..q {
            img.put(qx + x, qy + y, texture(x, y));
        }
    }
    let glyph = tax.instruments[t.instrument].as_str();
    let horizontal = tax.verbs[t.verb] == "sweep";
    let bright = [240, 240, 240];
    let dim = [150, 150, 160];
    let len = q.saturating_sub(6).max(2);
    let mid = q / 2;
    let mut plot = |dx: usize, dy: usize, c: [u8; 3]| {
        if dx < q && dy < q {
            img.put(qx + dx, qy + dy, c);
        }
    };
    let stroke = |plot: &mut dyn FnMut(usize, usize, [u8; 3]), offset: isize| {
        for k in 0..len {
            for w in 0..2usize {
                let lane = (mid as isize + offset + w as isize).max(0) as usize;
                if horizontal {
                    plot(3 + k, lane, bright);
                } else {
                    plot(lane, 3 + k, bright);
                }
            }
        }
    };
    match glyph {
        "probe" => stroke(&mut plot, 0),
        "clamp" => {
            stroke(&mut plot, -3);
            stroke(&mut plot, 3);
        }
        "wand" => {
            for k in 0..len {
                for w in 0..2usize {
                    plot(2 + k, 2 + k + w, bright);
                }
            }
            if horizontal {
                // sweep flips the diagonal's trailing half
                for k in 0..len / 2 {
                    plot(2 + k, q.saturating_sub(3 + k), dim);
                }
            }
        }
        other => return Err(Error::Config(format!("no renderer for instrument '{other}'"))),
    }
    if horizontal && glyph != "wand" {
        // motion trail under the stroke
        for k in 0..len {
            plot(3 + k, (mid + 3).min(q - 1), dim);
        }
    }
    Ok(())
}

fn mix_u64(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic synthetic bundle: every label is exactly the set of
/// interactions drawn into the frame.
pub fn generate(
    spec: &SceneSpec,
    tax: &Taxonomy,
    count: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    check_renderable(tax)?;
    if spec.image_size < 8 || !spec.image_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "image_size {} must be even and at least 8",
            spec.image_size
        )));
    }
    if spec.base_fraction + spec.novel_fraction > 1.0 + 1e-12 {
        return Err(Error::Config("scene mix fractions exceed 1".into()));
    }
    // the UT split defines which classes count as base/novel for the mix;
    // without split lists everything is drawn from the full vocabulary
    let split = tax.build_split(Setting::Ut).ok();
    let all: Vec<usize> = (0..tax.num_fine()).collect();
    let (base_pool, novel_pool) = match &split {
        Some(s) => (
            s.base_classes.iter().copied().collect::<Vec<_>>(),
            s.novel_classes.iter().copied().collect::<Vec<_>>(),
        ),
        None => (all.clone(), Vec::new()),
    };

    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_u64(seed, f as u64));
        let roll: f64 = rng.gen();
        let pool: &[usize] = if roll < spec.base_fraction || novel_pool.is_empty() {
            &base_pool
        } else if roll < spec.base_fraction + spec.novel_fraction {
            &novel_pool
        } else {
            &all
        };
        let max_k = spec.max_triplets_per_frame.clamp(1, 4).min(pool.len());
        let k = rng.gen_range(1..=max_k);
        let mut chosen = pool.to_vec();
        chosen.shuffle(&mut rng);
        chosen.truncate(k);
        let mut quadrants = [0usize, 1, 2, 3].to_vec();
        quadrants.shuffle(&mut rng);

        let mut image = Image::new(spec.image_size, spec.image_size);
        for p in 0..image.pixels.len() {
            image.pixels[p] = if p % 3 == 2 { 95 } else { 90 };
        }
        let mut labels = vec![0u8; tax.num_fine()];
        for (t, q) in chosen.iter().zip(&quadrants) {
            draw_interaction(&mut image, tax, *t, *q)?;
            labels[*t] = 1;
        }
        frames.push(Frame {
            image,
            annotation: FrameAnnotation {
                video_id: format!("v{:02}", f / 100),
                frame_id: f as u64,
                labels,
            },
        });
    }
    Ok(DatasetBundle { frames })
}

pub fn frame_stem(a: &FrameAnnotation) -> String {
    format!("{}_{:06}", a.video_id, a.frame_id)
}

/// Write `images/<video>_<frame>.ppm`, `annotations.jsonl`, and
/// `vocabulary.txt` under `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, bundle: &DatasetBundle, vocab: &str) -> Result<()> {
    let dir = dir.as_ref();
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(images.display().to_string(), e))?;
    let ann_path = dir.join("annotations.jsonl");
    let mut ann = std::fs::File::create(&ann_path)
        .map_err(|e| Error::io(ann_path.display().to_string(), e))?;
    for frame in &bundle.frames {
        let a = &frame.annotation;
        ppm::write_ppm(images.join(format!("{}.ppm", frame_stem(a))), &frame.image)?;
        let line = serde_json::json!({
            "video": a.video_id,
            "frame": a.frame_id,
            "triplets": a.positive_ids().collect::<Vec<_>>(),
        });
        writeln!(ann, "{line}").map_err(|e| Error::io(ann_path.display().to_string(), e))?;
    }
    let vocab_path = dir.join("vocabulary.txt");
    std::fs::write(&vocab_path, vocab)
        .map_err(|e| Error::io(vocab_path.display().to_string(), e))?;
    Ok(())
}

/// Load a dataset directory back into memory through the taxonomy's
/// annotation format; every referenced image must exist.
pub fn ingest(dir: impl AsRef<Path>, tax: &Taxonomy) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let annotations =
        crate::taxonomy::load_annotations(dir.join("annotations.jsonl"), tax.num_fine())?;
    let mut frames = Vec::with_capacity(annotations.len());
    for a in annotations {
        let path = dir.join("images").join(format!("{}.ppm", frame_stem(&a)));
        let image = ppm::read_ppm(&path)?;
        frames.push(Frame {
            image,
            annotation: a,
        });
    }
    Ok(DatasetBundle { frames })
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Overrides the coin flip when set.
    pub force_flip: Option<bool>,
    pub crop: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            force_flip: None,
            crop: true,
        }
    }
}

pub fn hflip(img: &Image) -> Image {
    let mut out = Image::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            out.put(x, y, img.get(img.width - 1 - x, y));
        }
    }
    out
}

/// Horizontal flip with p = 0.5 and a 90-100% area crop resized back,
/// both driven only by (seed, frame_key).
pub fn augment(img: &Image, seed: u64, frame_key: u64, cfg: &AugmentConfig) -> Image {
    if !cfg.enabled {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_u64(seed ^ 0xa06, frame_key));
    let mut out = img.clone();
    if cfg.crop {
        let area: f64 = 0.9 + 0.1 * rng.gen::<f64>();
        let side = area.sqrt();
        let cw = ((img.width as f64 * side).round() as usize).clamp(1, img.width);
        let ch = ((img.height as f64 * side).round() as usize).clamp(1, img.height);
        let ox = rng.gen_range(0..=img.width - cw);
        let oy = rng.gen_range(0..=img.height - ch);
        let mut cropped = Image::new(img.width, img.height);
        for y in 0..img.height {
            for x in 0..img.width {
                // nearest-neighbor resize of the crop back to full size
                let sx = ox + x * cw / img.width;
                let sy = oy + y * ch / img.height;
                cropped.put(x, y, img.get(sx, sy));
            }
        }
        out = cropped;
    }
    let flip = cfg.force_flip.unwrap_or_else(|| rng.gen::<bool>());
    if flip {
        out = hflip(&out);
    }
    out
}

/// Frame indices per partition after leakage filtering. Base frames go
/// 70/10/20 to train/val/test; novel frames 25/75 to val/test.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitAssignment {
    pub setting: String,
    pub train: Vec<String>,
    pub val_base: Vec<String>,
    pub val_novel: Vec<String>,
    pub test_base: Vec<String>,
    pub test_novel: Vec<String>,
    pub dropped: usize,
}

pub fn assign_partitions(
    frames: &[FrameAnnotation],
    split: &SplitSpec,
    seed: u64,
) -> SplitAssignment {
    let mut base = Vec::new();
    let mut novel = Vec::new();
    let mut dropped = 0usize;
    for f in frames {
        match frame_side(f, split) {
            FrameSide::Base => base.push(frame_stem(f)),
            FrameSide::Novel => novel.push(frame_stem(f)),
            FrameSide::Dropped => dropped += 1,
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_u64(seed, 0x5917));
    base.shuffle(&mut rng);
    novel.shuffle(&mut rng);
    let n_train = (base.len() as f64 * 0.7).round() as usize;
    let n_val = (base.len() as f64 * 0.1).round() as usize;
    let (train, rest) = base.split_at(n_train.min(base.len()));
    let (val_base, test_base) = rest.split_at(n_val.min(rest.len()));
    let n_val_novel = (novel.len() as f64 * 0.25).round() as usize;
    let (val_novel, test_novel) = novel.split_at(n_val_novel.min(novel.len()));
    SplitAssignment {
        setting: split.setting.to_string(),
        train: train.to_vec(),
        val_base: val_base.to_vec(),
        val_novel: val_novel.to_vec(),
        test_base: test_base.to_vec(),
        test_novel: test_novel.to_vec(),
        dropped,
    }
}
