//! Per-scan orchestration: background removal, known-instance subtraction,
//! ellipsoidal clustering of the remaining points into unknown instances,
//! optional diffuse-search refinement of the known instances, and the merge
//! into one complete labeling.

use crate::clustering::ellipsoidal_cluster;
use crate::error::Result;
use crate::io::ScanBundle;
use crate::refinement::{refine_known, KnownInstanceSet};
use crate::types::{ClassConfig, EllipsoidParams, InstanceLabeling};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub params: EllipsoidParams,
    pub classes: ClassConfig,
    pub diffuse_r: f64,
    pub refine_known: bool,
    pub unknown_min_points: usize,
    pub early_termination: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params: EllipsoidParams::default(),
            classes: ClassConfig::semantic_kitti(),
            diffuse_r: 1.0,
            refine_known: true,
            unknown_min_points: 10,
            early_termination: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Known,
    Unknown,
}

/// Complete per-scan output. `provenance[k]` tags instance ID k+1; known
/// IDs come first, so the known and unknown ID ranges are disjoint.
#[derive(Debug, Clone)]
pub struct OisResult {
    pub labeling: InstanceLabeling,
    pub semantic: Vec<u16>,
    pub provenance: Vec<Provenance>,
}

impl OisResult {
    pub fn n_instances(&self) -> usize {
        self.provenance.len()
    }
}

/// Disjoint index sets covering the whole scan.
#[derive(Debug, Clone, Default)]
pub struct SplitPoints {
    pub background: Vec<usize>,
    /// index plus the panoptic instance ID it arrived with
    pub known: Vec<(usize, u32)>,
    pub candidate_unknown: Vec<usize>,
}

/// Background = semantic in background set. Known = instance >= 1 AND
/// semantic in the known-thing set. Everything else (including thing-class
/// points the network left uninstanced) is a candidate unknown.
pub fn split_points(scan: &ScanBundle, classes: &ClassConfig) -> SplitPoints {
    let mut split = SplitPoints::default();
    for i in 0..scan.len() {
        let sem = scan.semantic[i];
        if classes.is_background(sem) {
            split.background.push(i);
        } else if scan.instance[i] >= 1 && classes.is_known_thing(sem) {
            split.known.push((i, scan.instance[i]));
        } else {
            split.candidate_unknown.push(i);
        }
    }
    split
}

pub fn run_pipeline(scan: &ScanBundle, cfg: &PipelineConfig) -> Result<OisResult> {
    if scan.is_empty() {
        return Ok(OisResult {
            labeling: InstanceLabeling::zeros(0),
            semantic: Vec::new(),
            provenance: Vec::new(),
        });
    }

    let split = split_points(scan, &cfg.classes);
    let mut ids = vec![0u32; scan.len()];

    // known instances: refine or pass through, compacted to dense 1..K
    let n_known = if !split.known.is_empty() {
        let indices: Vec<usize> = split.known.iter().map(|&(i, _)| i).collect();
        let original: Vec<u32> = split.known.iter().map(|&(_, id)| id).collect();
        let refined = if cfg.refine_known {
            let set = KnownInstanceSet::new(scan.cloud.subset(&indices), original, cfg.diffuse_r)?;
            refine_known(&set, &cfg.params, cfg.early_termination)?
        } else {
            InstanceLabeling::new(compact_ids(&original))
        };
        let k = refined.max_id();
        for (&pi, &id) in indices.iter().zip(&refined.ids) {
            ids[pi] = id;
        }
        k
    } else {
        0
    };
    let mut provenance = vec![Provenance::Known; n_known as usize];

    // unknown instances: cluster the remainder, drop tiny clusters
    if !split.candidate_unknown.is_empty() {
        let sub = scan.cloud.subset(&split.candidate_unknown);
        let run = ellipsoidal_cluster(&sub, &cfg.params, cfg.early_termination)?;
        let mut sizes = vec![0usize; run.n_clusters + 1];
        for &id in &run.labeling.ids {
            sizes[id as usize] += 1;
        }
        // renumber the survivors densely, in first-appearance order
        let mut remap = vec![0u32; run.n_clusters + 1];
        let mut next = n_known;
        for (&pi, &id) in split.candidate_unknown.iter().zip(&run.labeling.ids) {
            if sizes[id as usize] < cfg.unknown_min_points {
                continue;
            }
            if remap[id as usize] == 0 {
                next += 1;
                remap[id as usize] = next;
            }
            ids[pi] = remap[id as usize];
        }
        provenance.resize(next as usize, Provenance::Unknown);
    }

    Ok(OisResult {
        labeling: InstanceLabeling::new(ids),
        semantic: scan.semantic.clone(),
        provenance,
    })
}

/// Dense renumbering by first appearance; 0 stays 0.
fn compact_ids(ids: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    let mut next = 0u32;
    ids.iter()
        .map(|&id| {
            if id == 0 {
                0
            } else {
                *map.entry(id).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        })
        .collect()
}
