//! Evaluation metrics: per-class average precision, macro F1 at top-k,
//! and harmonic-mean aggregation of base/novel scores.

use std::collections::BTreeMap;

/// Frame-by-class prediction scores with ground-truth labels.
pub struct ScoreTable {
    /// F x C, row-major.
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u8>>,
    /// Maps column index to triplet id in the active vocabulary.
    pub class_ids: Vec<usize>,
}

impl ScoreTable {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<Vec<u8>>, class_ids: Vec<usize>) -> Self {
        assert_eq!(scores.len(), labels.len());
        for (s, l) in scores.iter().zip(&labels) {
            assert_eq!(s.len(), class_ids.len());
            assert_eq!(l.len(), class_ids.len());
            assert!(l.iter().all(|&v| v <= 1));
        }
        ScoreTable {
            scores,
            labels,
            class_ids,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.scores.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Restrict to the given columns (positions, not class ids).
    pub fn select_columns(&self, cols: &[usize]) -> ScoreTable {
        let pick = |row: &Vec<f64>| cols.iter().map(|&c| row[c]).collect::<Vec<_>>();
        let pick_l = |row: &Vec<u8>| cols.iter().map(|&c| row[c]).collect::<Vec<_>>();
        ScoreTable {
            scores: self.scores.iter().map(pick).collect(),
            labels: self.labels.iter().map(pick_l).collect(),
            class_ids: cols.iter().map(|&c| self.class_ids[c]).collect(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsReport {
    pub per_class_ap: BTreeMap<usize, f64>,
    pub map: f64,
    pub f1_at_3: f64,
}

/// Precision-at-each-positive AP. Scores sort descending; ties break by
/// ascending frame index. Returns None when the class has no positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let num_pos = labels.iter().filter(|&&l| l == 1).count();
    if num_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &f) in order.iter().enumerate() {
        if labels[f] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / num_pos as f64)
}

/// Mean of per-class AP over classes with at least one positive.
/// Returns None when no class has positives.
pub fn mean_average_precision(table: &ScoreTable) -> Option<f64> {
    let report = per_class_ap(table);
    if report.is_empty() {
        return None;
    }
    Some(report.values().sum::<f64>() / report.len() as f64)
}

/// AP per class id, skipping classes without positives.
pub fn per_class_ap(table: &ScoreTable) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for c in 0..table.num_classes() {
        let scores: Vec<f64> = table.scores.iter().map(|r| r[c]).collect();
        let labels: Vec<u8> = table.labels.iter().map(|r| r[c]).collect();
        if let Some(ap) = average_precision(&scores, &labels) {
            out.insert(table.class_ids[c], ap);
        }
    }
    out
}

/// Top-k predicted-positive sets per frame (ties by ascending column),
/// then macro F1 over classes with at least one ground-truth positive.
pub fn f1_at_k(table: &ScoreTable, k: usize) -> Option<f64> {
    let f1s = per_class_f1_at_k(table, k);
    if f1s.is_empty() {
        return None;
    }
    Some(f1s.values().sum::<f64>() / f1s.len() as f64)
}

/// Per-class F1 keyed by class id; classes without positives are skipped.
pub fn per_class_f1_at_k(table: &ScoreTable, k: usize) -> BTreeMap<usize, f64> {
    let c = table.num_classes();
    assert!(c >= k, "need at least k classes");
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fnn = vec![0usize; c];
    for (scores, labels) in table.scores.iter().zip(&table.labels) {
        let mut cols: Vec<usize> = (0..c).collect();
        cols.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut predicted = vec![false; c];
        for &col in cols.iter().take(k) {
            predicted[col] = true;
        }
        for col in 0..c {
            match (predicted[col], labels[col] == 1) {
                (true, true) => tp[col] += 1,
                (true, false) => fp[col] += 1,
                (false, true) => fnn[col] += 1,
                (false, false) => {}
            }
        }
    }
    let mut out = BTreeMap::new();
    for col in 0..c {
        if tp[col] + fnn[col] == 0 {
            continue;
        }
        let denom = (2 * tp[col] + fp[col] + fnn[col]) as f64;
        let f1 = if denom == 0.0 {
            0.0
        } else {
            2.0 * tp[col] as f64 / denom
        };
        out.insert(table.class_ids[col], f1);
    }
    out
}

/// 2ab/(a+b), 0 when both are 0.
pub fn harmonic_mean(base: f64, novel: f64) -> f64 {
    assert!(base >= 0.0 && novel >= 0.0);
    if base + novel == 0.0 {
        return 0.0;
    }
    2.0 * base * novel / (base + novel)
}

pub fn full_report(table: &ScoreTable, k: usize) -> MetricsReport {
    let per_class = per_class_ap(table);
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    MetricsReport {
        per_class_ap: per_class,
        map,
        f1_at_3: f1_at_k(table, k).unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(scores: Vec<Vec<f64>>, labels: Vec<Vec<u8>>) -> ScoreTable {
        let c = scores[0].len();
        ScoreTable::new(scores, labels, (0..c).collect())
    }

    #[test]
    fn perfect_ranking_is_one() {
        let ap = average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn hand_ap_oracle() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[1, 0, 1]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn all_positive_is_one() {
        let ap = average_precision(&[0.1, 0.9, 0.5], &[1, 1, 1]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn no_positives_is_undefined() {
        assert!(average_precision(&[0.5, 0.4], &[0, 0]).is_none());
    }

    #[test]
    fn ap_tie_break_by_frame_index() {
        // equal scores: frame 0 ranks first, so a positive at frame 0 wins
        let hi = average_precision(&[0.5, 0.5], &[1, 0]).unwrap();
        let lo = average_precision(&[0.5, 0.5], &[0, 1]).unwrap();
        assert_eq!(hi, 1.0);
        assert_eq!(lo, 0.5);
    }

    #[test]
    fn ap_invariant_under_monotone_transform() {
        let scores = [0.3, -1.2, 0.8, 0.1, 2.0, -0.5];
        let labels = [1u8, 0, 1, 0, 0, 1];
        let base = average_precision(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| s.tanh()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        assert_eq!(average_precision(&squashed, &labels).unwrap(), base);
        assert_eq!(average_precision(&shifted, &labels).unwrap(), base);
    }

    // Exhaustive cross-check: AP recomputed by a direct enumeration that
    // sorts (score, frame) pairs independently of the implementation.
    fn brute_force_ap(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        if pos.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for &p in &pos {
            // rank of p: frames strictly better, plus tied frames with smaller index
            let rank = (0..scores.len())
                .filter(|&q| {
                    scores[q] > scores[p] || (scores[q] == scores[p] && q < p)
                })
                .count();
            let hits = pos
                .iter()
                .filter(|&&q| {
                    scores[q] > scores[p] || (scores[q] == scores[p] && q <= p)
                })
                .count();
            total += hits as f64 / (rank + 1) as f64;
        }
        Some(total / pos.len() as f64)
    }

    #[test]
    fn ap_matches_brute_force_enumeration() {
        let grid = [0.0, 0.25, 0.5, 0.75];
        for frames in 1..=6usize {
            // walk a deterministic sample of score/label assignments
            let mut state = 12345u64;
            for _ in 0..200 {
                let mut scores = Vec::with_capacity(frames);
                let mut labels = Vec::with_capacity(frames);
                for _ in 0..frames {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    scores.push(grid[(state >> 33) as usize % grid.len()]);
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    labels.push(((state >> 33) % 2) as u8);
                }
                let got = average_precision(&scores, &labels);
                let want = brute_force_ap(&scores, &labels);
                match (got, want) {
                    (None, None) => {}
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                    other => panic!("mismatch: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn f1_containment_gives_recall_one() {
        // 4 classes, both true classes always in the top 3, no spurious
        // predictions hitting a class with positives
        let t = table(
            vec![vec![0.9, 0.8, 0.7, 0.1], vec![0.9, 0.8, 0.7, 0.1]],
            vec![vec![1, 1, 0, 0], vec![1, 1, 0, 0]],
        );
        let f1s = per_class_f1_at_k(&t, 3);
        assert_eq!(f1s[&0], 1.0);
        assert_eq!(f1s[&1], 1.0);
        assert_eq!(f1s.len(), 2); // classes 2,3 have no positives
    }

    #[test]
    fn f1_single_frame_hand_oracle() {
        let t = table(vec![vec![0.9, 0.8, 0.7, 0.1]], vec![vec![1, 0, 0, 0]]);
        assert_eq!(f1_at_k(&t, 3).unwrap(), 1.0);
    }

    #[test]
    fn f1_spurious_prediction_halves_score() {
        // class 1 predicted but never true on frame 2 where class 0 is true:
        // tp=2 fp=1 for class 1? construct explicitly:
        // class 0: true on both frames, predicted both -> F1 = 1
        // class 1: true on frame 0 only, predicted both -> tp=1 fp=1 fn=0 -> F1 = 2/3
        let t = table(
            vec![vec![0.9, 0.8, 0.7, 0.1], vec![0.9, 0.8, 0.7, 0.1]],
            vec![vec![1, 1, 0, 0], vec![1, 0, 0, 0]],
        );
        let f1s = per_class_f1_at_k(&t, 3);
        assert_eq!(f1s[&0], 1.0);
        assert!((f1s[&1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_tie_break_by_class_id() {
        // all scores equal: top-3 must be classes 0,1,2
        let t = table(vec![vec![0.5, 0.5, 0.5, 0.5]], vec![vec![0, 0, 0, 1]]);
        let f1s = per_class_f1_at_k(&t, 3);
        // class 3 true but not predicted: tp=0 fn=1 -> F1 = 0
        assert_eq!(f1s[&3], 0.0);
        assert_eq!(f1s.len(), 1);
    }

    #[test]
    fn harmonic_mean_oracles() {
        assert_eq!(harmonic_mean(0.5, 0.5), 0.5);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert!((harmonic_mean(61.71, 39.78) - 48.38).abs() < 0.01);
        assert!((harmonic_mean(44.66, 23.44) - 30.74).abs() < 0.01);
    }

    #[test]
    fn column_restriction_never_mixes() {
        let t = ScoreTable::new(
            vec![vec![0.9, 0.1, 0.8], vec![0.2, 0.7, 0.3]],
            vec![vec![1, 0, 1], vec![0, 1, 0]],
            vec![10, 20, 30],
        );
        let base = t.select_columns(&[0, 2]);
        assert_eq!(base.class_ids, vec![10, 30]);
        assert_eq!(base.scores[0], vec![0.9, 0.8]);
        let aps = per_class_ap(&base);
        assert!(aps.contains_key(&10) && aps.contains_key(&30) && !aps.contains_key(&20));
    }
}
