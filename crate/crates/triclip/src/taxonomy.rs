//! Triplet vocabulary, the coarse pair hierarchy, base/novel splits,
//! and leakage filtering over frame annotations.
//!
//! The vocabulary is a line-oriented UTF-8 file: `T,<id>,<instrument>,
//! <verb>,<target>` rows followed by a `[splits]` section declaring the
//! UT target lists and UIV instrument-verb pair lists. A CholecT50-style
//! vocabulary ships with the crate (`Taxonomy::bundled`).

use crate::error::{Error, Result};
use serde::Deserialize;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

pub const BUNDLED_VOCABULARY: &str = include_str!("../assets/cholect50_style_vocabulary.txt");

/// One fine-grained class: an (instrument, verb, target) interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub id: usize,
    pub instrument: usize,
    pub verb: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Ut,
    Uiv,
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ut" => Ok(Setting::Ut),
            "uiv" => Ok(Setting::Uiv),
            other => Err(Error::Config(format!("unknown setting '{other}' (ut|uiv)"))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Ut => "ut",
            Setting::Uiv => "uiv",
        })
    }
}

/// Base/novel class partition for one setting.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub setting: Setting,
    pub base_classes: BTreeSet<usize>,
    pub novel_classes: BTreeSet<usize>,
}

/// Multi-hot labels for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub frame_id: u64,
    /// One entry per fine class, each 0 or 1.
    pub labels: Vec<u8>,
}

impl FrameAnnotation {
    pub fn positive_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Default)]
struct SplitLists {
    ut_base_targets: Vec<String>,
    ut_novel_targets: Vec<String>,
    uiv_base_pairs: Vec<(String, String)>,
    uiv_novel_pairs: Vec<(String, String)>,
}

/// The full vocabulary plus the parent hierarchy and declared split lists.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    pub instruments: Vec<String>,
    pub verbs: Vec<String>,
    pub targets: Vec<String>,
    pub triplets: Vec<Triplet>,
    /// Unique (instrument, target) pairs; index is the pair (level-0) id.
    pub pairs: Vec<(usize, usize)>,
    /// triplet id -> pair id
    pub parent: Vec<usize>,
    splits: SplitLists,
}

fn intern(names: &mut Vec<String>, lookup: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&id) = lookup.get(name) {
        return id;
    }
    let id = names.len();
    names.push(name.to_string());
    lookup.insert(name.to_string(), id);
    id
}

impl Taxonomy {
    pub fn num_fine(&self) -> usize {
        self.triplets.len()
    }

    pub fn num_coarse(&self) -> usize {
        self.pairs.len()
    }

    pub fn bundled() -> Taxonomy {
        Taxonomy::parse(BUNDLED_VOCABULARY, "<bundled>")
            .expect("bundled vocabulary must parse")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Taxonomy> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Taxonomy::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Taxonomy> {
        let mut instruments = Vec::new();
        let mut verbs = Vec::new();
        let mut targets = Vec::new();
        let (mut imap, mut vmap, mut tmap) = (HashMap::new(), HashMap::new(), HashMap::new());
        let mut rows: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut splits = SplitLists::default();
        let mut in_splits = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[splits]" {
                in_splits = true;
                continue;
            }
            if in_splits {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(origin, lineno, "expected key=value"))?;
                let items: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                let parse_pairs = |items: &[String]| -> Result<Vec<(String, String)>> {
                    items
                        .iter()
                        .map(|p| {
                            p.split_once('-')
                                .map(|(a, b)| (a.to_string(), b.to_string()))
                                .ok_or_else(|| {
                                    Error::parse(origin, lineno, format!("bad pair '{p}'"))
                                })
                        })
                        .collect()
                };
                match key.trim() {
                    "ut_base_targets" => splits.ut_base_targets = items,
                    "ut_novel_targets" => splits.ut_novel_targets = items,
                    "uiv_base_pairs" => splits.uiv_base_pairs = parse_pairs(&items)?,
                    "uiv_novel_pairs" => splits.uiv_novel_pairs = parse_pairs(&items)?,
                    other => {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("unknown splits key '{other}'"),
                        ))
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 || fields[0] != "T" {
                return Err(Error::parse(
                    origin,
                    lineno,
                    "expected T,<id>,<instrument>,<verb>,<target>",
                ));
            }
            let id: usize = fields[1]
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad id '{}'", fields[1])))?;
            let i = intern(&mut instruments, &mut imap, fields[2]);
            let v = intern(&mut verbs, &mut vmap, fields[3]);
            let t = intern(&mut targets, &mut tmap, fields[4]);
            rows.push((id, i, v, t));
        }

        if rows.is_empty() {
            return Err(Error::parse(origin, 0, "vocabulary has no triplet rows"));
        }
        rows.sort_by_key(|r| r.0);
        for (expect, row) in rows.iter().enumerate() {
            if row.0 != expect {
                return Err(Error::Config(format!(
                    "{origin}: triplet ids must be dense 0..{}, found {}",
                    rows.len(),
                    row.0
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for &(_, i, v, t) in &rows {
            if !seen.insert((i, v, t)) {
                return Err(Error::Config(format!(
                    "{origin}: duplicate triplet ({}, {}, {})",
                    instruments[i], verbs[v], targets[t]
                )));
            }
        }

        let triplets: Vec<Triplet> = rows
            .iter()
            .map(|&(id, instrument, verb, target)| Triplet {
                id,
                instrument,
                verb,
                target,
            })
            .collect();

        let mut pairs = Vec::new();
        let mut pair_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut parent = Vec::with_capacity(triplets.len());
        for t in &triplets {
            let key = (t.instrument, t.target);
            let pid = *pair_map.entry(key).or_insert_with(|| {
                pairs.push(key);
                pairs.len() - 1
            });
            parent.push(pid);
        }

        Ok(Taxonomy {
            instruments,
            verbs,
            targets,
            triplets,
            pairs,
            parent,
            splits,
        })
    }

    /// Pair (level-0) id of a fine class.
    pub fn parent_of(&self, triplet_id: usize) -> Result<usize> {
        self.parent
            .get(triplet_id)
            .copied()
            .ok_or(Error::UnknownId {
                id: triplet_id,
                bound: self.triplets.len(),
            })
    }

    /// Project fine multi-hot labels to the coarse level: a pair is
    /// positive when any of its children is.
    pub fn coarse_labels(&self, fine: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.pairs.len()];
        for (id, &v) in fine.iter().enumerate() {
            if v != 0 {
                out[self.parent[id]] = 1;
            }
        }
        out
    }

    /// Partition classes into base and novel per the declared attribute
    /// lists. Classes matching neither list belong to no side.
    pub fn build_split(&self, setting: Setting) -> Result<SplitSpec> {
        let (base_classes, novel_classes) = match setting {
            Setting::Ut => {
                let base = self.target_set(&self.splits.ut_base_targets, "ut_base_targets")?;
                let novel = self.target_set(&self.splits.ut_novel_targets, "ut_novel_targets")?;
                (
                    self.filter_by_target(&base),
                    self.filter_by_target(&novel),
                )
            }
            Setting::Uiv => {
                let base = self.pair_set(&self.splits.uiv_base_pairs, "uiv_base_pairs")?;
                let novel = self.pair_set(&self.splits.uiv_novel_pairs, "uiv_novel_pairs")?;
                (self.filter_by_iv(&base), self.filter_by_iv(&novel))
            }
        };
        if let Some(&dup) = base_classes.intersection(&novel_classes).next() {
            return Err(Error::Config(format!(
                "class {dup} appears in both base and novel lists"
            )));
        }
        Ok(SplitSpec {
            setting,
            base_classes,
            novel_classes,
        })
    }

    fn target_set(&self, names: &[String], key: &str) -> Result<BTreeSet<usize>> {
        if names.is_empty() {
            return Err(Error::Config(format!("vocabulary declares no {key}")));
        }
        let mut ids = BTreeSet::new();
        let mut orphans = Vec::new();
        for n in names {
            match self.targets.iter().position(|t| t == n) {
                Some(id) => {
                    ids.insert(id);
                }
                None => orphans.push(n.clone()),
            }
        }
        if !orphans.is_empty() {
            return Err(Error::Config(format!(
                "{key} references unknown targets: {}",
                orphans.join(", ")
            )));
        }
        Ok(ids)
    }

    fn pair_set(&self, pairs: &[(String, String)], key: &str) -> Result<BTreeSet<(usize, usize)>> {
        if pairs.is_empty() {
            return Err(Error::Config(format!("vocabulary declares no {key}")));
        }
        let mut ids = BTreeSet::new();
        let mut orphans = Vec::new();
        for (i, v) in pairs {
            let ii = self.instruments.iter().position(|n| n == i);
            let vi = self.verbs.iter().position(|n| n == v);
            match (ii, vi) {
                (Some(a), Some(b)) => {
                    ids.insert((a, b));
                }
                _ => orphans.push(format!("{i}-{v}")),
            }
        }
        if !orphans.is_empty() {
            return Err(Error::Config(format!(
                "{key} references unknown instrument-verb pairs: {}",
                orphans.join(", ")
            )));
        }
        Ok(ids)
    }

    fn filter_by_target(&self, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.triplets
            .iter()
            .filter(|t| targets.contains(&t.target))
            .map(|t| t.id)
            .collect()
    }

    fn filter_by_iv(&self, pairs: &BTreeSet<(usize, usize)>) -> BTreeSet<usize> {
        self.triplets
            .iter()
            .filter(|t| pairs.contains(&(t.instrument, t.verb)))
            .map(|t| t.id)
            .collect()
    }
}

/// Side a frame lands on after leakage filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSide {
    Base,
    Novel,
    Dropped,
}

pub fn frame_side(frame: &FrameAnnotation, split: &SplitSpec) -> FrameSide {
    let mut has_base = false;
    let mut has_novel = false;
    for id in frame.positive_ids() {
        has_base |= split.base_classes.contains(&id);
        has_novel |= split.novel_classes.contains(&id);
    }
    match (has_base, has_novel) {
        (true, true) => FrameSide::Dropped,
        (false, true) => FrameSide::Novel,
        // All-negative frames carry no novel signal and go to the base side.
        _ => FrameSide::Base,
    }
}

/// Drop frames that mix base and novel positives; route the rest.
pub fn leakage_filter(
    frames: &[FrameAnnotation],
    split: &SplitSpec,
) -> (Vec<FrameAnnotation>, Vec<FrameAnnotation>) {
    let mut base = Vec::new();
    let mut novel = Vec::new();
    for f in frames {
        match frame_side(f, split) {
            FrameSide::Base => base.push(f.clone()),
            FrameSide::Novel => novel.push(f.clone()),
            FrameSide::Dropped => {}
        }
    }
    (base, novel)
}

#[derive(Deserialize)]
struct AnnotationLine {
    video: String,
    frame: u64,
    triplets: Vec<usize>,
}

/// Parse JSON-lines annotations (`{"video": str, "frame": int,
/// "triplets": [int, ...]}`) into multi-hot frames.
pub fn parse_annotations<R: BufRead>(
    reader: R,
    num_classes: usize,
    origin: &str,
) -> Result<Vec<FrameAnnotation>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let mut labels = vec![0u8; num_classes];
        for id in parsed.triplets {
            if id >= num_classes {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("triplet id {id} out of range 0..{num_classes}"),
                ));
            }
            labels[id] = 1;
        }
        out.push(FrameAnnotation {
            video_id: parsed.video,
            frame_id: parsed.frame,
            labels,
        });
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<FrameAnnotation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_annotations(
        std::io::BufReader::new(file),
        num_classes,
        &path.display().to_string(),
    )
}
