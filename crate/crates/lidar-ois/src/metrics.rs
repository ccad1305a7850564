//! Open-world evaluation: association score, and best-overlap IoU/Recall at
//! fixed thresholds, reported per class and for the known/unknown/all
//! groups. Tables from multiple scans pool their counts before scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ClassConfig, InstanceLabeling};

#[derive(Debug, Clone, Copy)]
struct GtInfo {
    size: u64,
    class: u16,
    known: bool,
}

/// GT-to-prediction overlap counts plus per-instance sizes and tags.
///
/// Overlaps are counted only over the evaluation mask (points with a GT
/// instance >= 1) and predicted instance 0 never contributes. Predicted
/// sizes are counted over all points, so clusters leaking into uninstanced
/// points are penalized through the union term.
#[derive(Debug, Default)]
pub struct MatchTable {
    // keys are (scan << 32) | id, so pooled scans never collide
    overlaps: BTreeMap<u64, BTreeMap<u64, u64>>,
    gt: BTreeMap<u64, GtInfo>,
    pred_size: BTreeMap<u64, u64>,
    n_scans: u64,
}

impl MatchTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single-scan constructor; see [`MatchTable::add_scan`].
    pub fn from_scan(
        gt_semantic: &[u16],
        gt_instance: &[u32],
        pred_instance: &[u32],
        classes: &ClassConfig,
    ) -> Result<Self> {
        let mut table = Self::new();
        table.add_scan(gt_semantic, gt_instance, pred_instance, classes)?;
        Ok(table)
    }

    /// Accumulate one scan. GT instances are tagged with their majority
    /// semantic class (ties to the smallest class ID) and known iff that
    /// class is in the known-thing set.
    pub fn add_scan(
        &mut self,
        gt_semantic: &[u16],
        gt_instance: &[u32],
        pred_instance: &[u32],
        classes: &ClassConfig,
    ) -> Result<()> {
        if gt_instance.len() != gt_semantic.len() {
            return Err(Error::LengthMismatch {
                what: "gt instances",
                got: gt_instance.len(),
                expected: gt_semantic.len(),
            });
        }
        if pred_instance.len() != gt_semantic.len() {
            return Err(Error::LengthMismatch {
                what: "predicted instances",
                got: pred_instance.len(),
                expected: gt_semantic.len(),
            });
        }

        let scan = self.n_scans;
        self.n_scans += 1;
        let key = |id: u32| (scan << 32) | id as u64;

        let mut class_votes: BTreeMap<u64, BTreeMap<u16, u64>> = BTreeMap::new();
        for i in 0..gt_semantic.len() {
            let p = pred_instance[i];
            if p > 0 {
                *self.pred_size.entry(key(p)).or_insert(0) += 1;
            }
            let g = gt_instance[i];
            if g == 0 {
                continue;
            }
            let gk = key(g);
            self.gt
                .entry(gk)
                .or_insert(GtInfo {
                    size: 0,
                    class: 0,
                    known: false,
                })
                .size += 1;
            *class_votes
                .entry(gk)
                .or_default()
                .entry(gt_semantic[i])
                .or_insert(0) += 1;
            if p > 0 {
                *self
                    .overlaps
                    .entry(gk)
                    .or_default()
                    .entry(key(p))
                    .or_insert(0) += 1;
            }
        }

        for (gk, votes) in class_votes {
            // max count, ties broken by smallest class id (BTreeMap order)
            let class = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&c, _)| c)
                .unwrap_or(0);
            let info = self.gt.get_mut(&gk).unwrap();
            info.class = class;
            info.known = classes.is_known_thing(class);
        }
        Ok(())
    }

    pub fn n_gt_instances(&self) -> usize {
        self.gt.len()
    }

    /// Distinct GT classes present, ascending.
    pub fn gt_classes(&self) -> Vec<u16> {
        let mut classes: Vec<u16> = self.gt.values().map(|info| info.class).collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    fn iou(&self, gk: u64, pk: u64, overlap: u64) -> f64 {
        let union = self.gt[&gk].size + self.pred_size[&pk] - overlap;
        overlap as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupFilter {
    All,
    Known,
    Unknown,
    Class(u16),
}

impl GroupFilter {
    fn matches(&self, info: &GtInfo) -> bool {
        match *self {
            GroupFilter::All => true,
            GroupFilter::Known => info.known,
            GroupFilter::Unknown => !info.known,
            GroupFilter::Class(c) => info.class == c,
        }
    }
}

/// Association score over the group: mean over GT instances of the
/// true-positive-association-weighted IoU,
/// (1/|g|) * sum over overlapping predictions of |p ∩ g| * IoU(p, g).
/// `None` when the group has no GT instances.
pub fn s_assoc(table: &MatchTable, filter: GroupFilter) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for (&gk, info) in &table.gt {
        if !filter.matches(info) {
            continue;
        }
        n += 1;
        if let Some(preds) = table.overlaps.get(&gk) {
            let mut acc = 0.0;
            for (&pk, &ov) in preds {
                acc += ov as f64 * table.iou(gk, pk, ov);
            }
            sum += acc / info.size as f64;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Best-overlap metrics at threshold `tau`: recall is the fraction of GT
/// instances whose best prediction IoU reaches tau; the IoU score averages
/// that best IoU over all GT instances, counting misses as zero (so
/// IoU@tau <= Recall@tau). `None` when the group is empty.
pub fn iou_recall_at(table: &MatchTable, tau: f64, filter: GroupFilter) -> Option<(f64, f64)> {
    let mut iou_sum = 0.0;
    let mut hits = 0u64;
    let mut n = 0u64;
    for (&gk, info) in &table.gt {
        if !filter.matches(info) {
            continue;
        }
        n += 1;
        let best = table
            .overlaps
            .get(&gk)
            .map(|preds| {
                preds
                    .iter()
                    .map(|(&pk, &ov)| table.iou(gk, pk, ov))
                    .fold(0.0, f64::max)
            })
            .unwrap_or(0.0);
        if best >= tau {
            hits += 1;
            iou_sum += best;
        }
    }
    (n > 0).then(|| (iou_sum / n as f64, hits as f64 / n as f64))
}

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct GroupScores {
    pub known: Option<f64>,
    pub unknown: Option<f64>,
    pub all: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdScores {
    pub tau: f64,
    pub iou: GroupScores,
    pub recall: GroupScores,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub n_gt_instances: usize,
    pub s_assoc_per_class: BTreeMap<u16, f64>,
    pub s_assoc: GroupScores,
    pub at_thresholds: Vec<ThresholdScores>,
}

fn group_scores(f: impl Fn(GroupFilter) -> Option<f64>) -> GroupScores {
    GroupScores {
        known: f(GroupFilter::Known),
        unknown: f(GroupFilter::Unknown),
        all: f(GroupFilter::All),
    }
}

pub fn report(table: &MatchTable, thresholds: &[f64]) -> MetricReport {
    let s_assoc_per_class = table
        .gt_classes()
        .into_iter()
        .filter_map(|c| s_assoc(table, GroupFilter::Class(c)).map(|v| (c, v)))
        .collect();
    let at_thresholds = thresholds
        .iter()
        .map(|&tau| ThresholdScores {
            tau,
            iou: group_scores(|g| iou_recall_at(table, tau, g).map(|x| x.0)),
            recall: group_scores(|g| iou_recall_at(table, tau, g).map(|x| x.1)),
        })
        .collect();
    MetricReport {
        n_gt_instances: table.n_gt_instances(),
        s_assoc_per_class,
        s_assoc: group_scores(|g| s_assoc(table, g)),
        at_thresholds,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "  -  ".to_string(),
    }
}

impl MetricReport {
    /// Plain-text table; absent groups render as `-`, never as zero.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gt instances: {}", self.n_gt_instances);
        let _ = writeln!(out, "\nS_assoc per class:");
        for (class, score) in &self.s_assoc_per_class {
            let _ = writeln!(out, "  class {class:>3}   {score:.3}");
        }
        let _ = writeln!(
            out,
            "\n{:<12} {:>8} {:>8} {:>8}",
            "S_assoc", "known", "unknown", "all"
        );
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            "",
            fmt_opt(self.s_assoc.known),
            fmt_opt(self.s_assoc.unknown),
            fmt_opt(self.s_assoc.all)
        );
        for t in &self.at_thresholds {
            let _ = writeln!(
                out,
                "IoU@{:<8} {:>8} {:>8} {:>8}",
                t.tau,
                fmt_opt(t.iou.known),
                fmt_opt(t.iou.unknown),
                fmt_opt(t.iou.all)
            );
            let _ = writeln!(
                out,
                "Rec@{:<8} {:>8} {:>8} {:>8}",
                t.tau,
                fmt_opt(t.recall.known),
                fmt_opt(t.recall.unknown),
                fmt_opt(t.recall.all)
            );
        }
        out
    }
}

/// Majority semantic class per instance ID, ties to the smallest class ID.
pub fn instance_classes(semantic: &[u16], labeling: &InstanceLabeling) -> BTreeMap<u32, u16> {
    let mut votes: BTreeMap<u32, BTreeMap<u16, u64>> = BTreeMap::new();
    for (&sem, &id) in semantic.iter().zip(&labeling.ids) {
        if id > 0 {
            *votes.entry(id).or_default().entry(sem).or_insert(0) += 1;
        }
    }
    votes
        .into_iter()
        .map(|(id, v)| {
            let class = v
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&c, _)| c)
                .unwrap();
            (id, class)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(gt_sem: &[u16], gt: &[u32], pred: &[u32]) -> MatchTable {
        MatchTable::from_scan(gt_sem, gt, pred, &ClassConfig::semantic_kitti()).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = [1u32, 1, 1, 2, 2, 0];
        let sem = [10u16, 10, 10, 0, 0, 40];
        let t = table(&sem, &gt, &gt);
        assert_relative_eq!(s_assoc(&t, GroupFilter::All).unwrap(), 1.0);
        for tau in [0.9, 0.7, 0.5] {
            let (iou, recall) = iou_recall_at(&t, tau, GroupFilter::All).unwrap();
            assert_relative_eq!(iou, 1.0);
            assert_relative_eq!(recall, 1.0);
        }
        // one known (car) and one unknown instance
        assert_relative_eq!(s_assoc(&t, GroupFilter::Known).unwrap(), 1.0);
        assert_relative_eq!(s_assoc(&t, GroupFilter::Unknown).unwrap(), 1.0);
    }

    #[test]
    fn all_zero_prediction_scores_zero() {
        let t = table(&[10, 10], &[1, 1], &[0, 0]);
        assert_relative_eq!(s_assoc(&t, GroupFilter::All).unwrap(), 0.0);
        let (iou, recall) = iou_recall_at(&t, 0.5, GroupFilter::All).unwrap();
        assert_relative_eq!(iou, 0.0);
        assert_relative_eq!(recall, 0.0);
    }

    #[test]
    fn lumped_prediction_halves_s_assoc() {
        // two gt instances of 4 points each, prediction lumps all 8
        let gt = [1u32, 1, 1, 1, 2, 2, 2, 2];
        let sem = [10u16; 8];
        let pred = [5u32; 8];
        let t = table(&sem, &gt, &pred);
        assert_relative_eq!(s_assoc(&t, GroupFilter::All).unwrap(), 0.5);
    }

    #[test]
    fn partial_overlap_counting() {
        // gt of 4 points, pred covers 3 of them with an instance of size 5
        let gt = [1u32, 1, 1, 1, 0, 0, 0];
        let sem = [10u16; 7];
        let pred = [2u32, 2, 2, 0, 2, 2, 0];
        let t = table(&sem, &gt, &pred);
        // IoU = 3 / (4 + 5 - 3) = 0.5
        let (iou, recall) = iou_recall_at(&t, 0.5, GroupFilter::All).unwrap();
        assert_relative_eq!(iou, 0.5);
        assert_relative_eq!(recall, 1.0);
        // s_assoc = (1/4) * 3 * 0.5 = 0.375
        assert_relative_eq!(s_assoc(&t, GroupFilter::All).unwrap(), 0.375);
    }

    #[test]
    fn eight_of_eleven_fixture() {
        // gt 10 points, pred covers 8 plus 1 stray: best IoU 8/11
        let mut gt = vec![1u32; 10];
        gt.push(0);
        let sem = vec![10u16; 11];
        let mut pred = vec![3u32; 8];
        pred.extend([0, 0, 3]);
        let t = table(&sem, &gt, &pred);
        let (iou7, rec7) = iou_recall_at(&t, 0.7, GroupFilter::All).unwrap();
        assert_relative_eq!(iou7, 8.0 / 11.0, epsilon = 1e-12);
        assert_relative_eq!(rec7, 1.0);
        let (iou9, rec9) = iou_recall_at(&t, 0.9, GroupFilter::All).unwrap();
        assert_relative_eq!(iou9, 0.0);
        assert_relative_eq!(rec9, 0.0);
    }

    #[test]
    fn empty_group_is_absent_not_zero() {
        // only a known-class instance: the unknown group must be None
        let t = table(&[10, 10], &[1, 1], &[1, 1]);
        assert!(s_assoc(&t, GroupFilter::Unknown).is_none());
        assert!(iou_recall_at(&t, 0.5, GroupFilter::Unknown).is_none());
        let rep = report(&t, &[0.5]);
        assert!(rep.s_assoc.unknown.is_none());
        assert!(rep.s_assoc.known.is_some());
        assert!(rep.render_text().contains('-'));
    }

    #[test]
    fn relabeling_invariance() {
        let gt = [1u32, 1, 2, 2, 0];
        let sem = [10u16, 10, 0, 0, 40];
        let a = table(&sem, &gt, &[4, 4, 9, 0, 9]);
        let b = table(&sem, &gt, &[700, 700, 3, 0, 3]);
        assert_eq!(
            s_assoc(&a, GroupFilter::All),
            s_assoc(&b, GroupFilter::All)
        );
        assert_eq!(
            iou_recall_at(&a, 0.5, GroupFilter::All),
            iou_recall_at(&b, 0.5, GroupFilter::All)
        );
    }

    #[test]
    fn pooling_matches_manual_average() {
        let classes = ClassConfig::semantic_kitti();
        let mut t = MatchTable::new();
        // scan 1: perfect single instance
        t.add_scan(&[10, 10], &[1, 1], &[1, 1], &classes).unwrap();
        // scan 2: missed single instance
        t.add_scan(&[10, 10], &[1, 1], &[0, 0], &classes).unwrap();
        assert_relative_eq!(s_assoc(&t, GroupFilter::All).unwrap(), 0.5);
        assert_eq!(t.n_gt_instances(), 2);
    }

    #[test]
    fn length_mismatch_rejected() {
        let classes = ClassConfig::semantic_kitti();
        assert!(MatchTable::from_scan(&[10, 10], &[1], &[1, 1], &classes).is_err());
        assert!(MatchTable::from_scan(&[10, 10], &[1, 1], &[1], &classes).is_err());
    }

    #[test]
    fn majority_class_breaks_ties_low() {
        let labeling = InstanceLabeling::new(vec![1, 1, 1, 1]);
        let classes = instance_classes(&[20, 10, 20, 10], &labeling);
        assert_eq!(classes[&1], 10);
    }
}
