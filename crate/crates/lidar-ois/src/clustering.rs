//! Ellipsoidal clustering with an instance-ID merge graph, the Euclidean
//! fixed-radius baseline, and an O(n^2) brute-force reference.
//!
//! Clustering seeds each unprocessed point with a fresh provisional ID and
//! grows it breadth-first through range-adaptive ellipsoidal neighborhoods.
//! When a neighborhood touches a point that already carries a different
//! provisional ID, the two IDs are joined in a merge graph instead of
//! relabeling; final IDs are the graph's connected components, remapped to a
//! dense 1..K by first appearance in storage order.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::spatial::RadiusIndex;
use crate::types::{EllipsoidAxes, EllipsoidParams, InstanceLabeling, Point3, PointCloud};

/// Disjoint-set over provisional instance IDs 1..N.
#[derive(Debug, Default)]
pub struct MergeGraph {
    // parent[0] unused; IDs start at 1
    parent: Vec<u32>,
}

impl MergeGraph {
    pub fn new() -> Self {
        Self { parent: vec![0] }
    }

    /// Register the next provisional ID and return it.
    pub fn add_vertex(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    pub fn find(&mut self, mut id: u32) -> u32 {
        debug_assert!(id >= 1 && (id as usize) < self.parent.len());
        while self.parent[id as usize] != id {
            // path halving
            self.parent[id as usize] = self.parent[self.parent[id as usize] as usize];
            id = self.parent[id as usize];
        }
        id
    }

    /// Join two IDs; the smaller root wins so the result is deterministic.
    pub fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of one clustering run. IDs are dense 1..n_clusters and every
/// input point carries an ID >= 1.
#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub labeling: InstanceLabeling,
    pub n_clusters: usize,
    pub early_termination: bool,
}

/// Membership test of `candidate` in the ellipsoidal neighborhood of
/// `query`, whose `axes` must come from [`EllipsoidParams::axes`] at the
/// query point. The alpha axis points along the sensor ray azimuth
/// `axes.lambda`, beta across it, gamma vertically; closed boundary.
pub fn in_ellipsoid(query: Point3, axes: &EllipsoidAxes, candidate: Point3) -> bool {
    let dx = candidate.x - query.x;
    let dy = candidate.y - query.y;
    let dz = candidate.z - query.z;
    let (sin_l, cos_l) = axes.lambda.sin_cos();
    let along = dx * cos_l + dy * sin_l;
    let across = -dx * sin_l + dy * cos_l;
    let lhs = (along / axes.a).powi(2) + (across / axes.b).powi(2) + (dz / axes.c).powi(2);
    lhs <= 1.0
}

/// Ellipsoidal clustering; builds the radius index internally.
pub fn ellipsoidal_cluster(
    cloud: &PointCloud,
    params: &EllipsoidParams,
    early_termination: bool,
) -> Result<ClusterRun> {
    let index = RadiusIndex::build(cloud)?;
    ellipsoidal_cluster_with_index(cloud, &index, params, early_termination)
}

/// Ellipsoidal clustering against a caller-supplied index, which must be
/// built over exactly this cloud.
pub fn ellipsoidal_cluster_with_index(
    cloud: &PointCloud,
    index: &RadiusIndex,
    params: &EllipsoidParams,
    early_termination: bool,
) -> Result<ClusterRun> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if index.len() != cloud.len() {
        return Err(Error::IndexMismatch {
            index: index.len(),
            cloud: cloud.len(),
        });
    }

    let n = cloud.len();
    let mut ids = vec![0u32; n];
    // set when a point has been expanded, or marked as cluster interior
    let mut processed = vec![false; n];
    let mut graph = MergeGraph::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    for seed in 0..n {
        if processed[seed] {
            continue;
        }
        let cur = graph.add_vertex();
        ids[seed] = cur;
        queue.push_back(seed);

        while let Some(iq) = queue.pop_front() {
            if processed[iq] {
                continue;
            }
            processed[iq] = true;
            let q = cloud.points[iq];
            let axes = params.axes(q);
            // the ellipsoid fits inside the ball of its largest semi-axis
            for ni in index.find_neighbors(q, axes.max_semi_axis()) {
                let cand = cloud.points[ni];
                if !in_ellipsoid(q, &axes, cand) {
                    continue;
                }
                let nid = ids[ni];
                if nid != 0 && nid != cur {
                    // contact with an earlier cluster: record the merge,
                    // connectivity flows through the graph edge
                    graph.union(nid, cur);
                    continue;
                }
                if nid == cur || processed[ni] {
                    continue;
                }
                ids[ni] = cur;
                if early_termination && q.distance(&cand) <= axes.min_semi_axis() {
                    // interior of the current cluster, never expanded
                    processed[ni] = true;
                } else {
                    queue.push_back(ni);
                }
            }
        }
    }

    let (labeling, n_clusters) = remap_dense(&mut graph, &ids);
    Ok(ClusterRun {
        labeling,
        n_clusters,
        early_termination,
    })
}

/// Collapse provisional IDs through the merge graph into dense IDs 1..K,
/// ordered by smallest member point index.
fn remap_dense(graph: &mut MergeGraph, ids: &[u32]) -> (InstanceLabeling, usize) {
    let mut dense = vec![0u32; graph.len() + 1];
    let mut out = vec![0u32; ids.len()];
    let mut next = 0u32;
    for (i, &id) in ids.iter().enumerate() {
        let root = graph.find(id) as usize;
        if dense[root] == 0 {
            next += 1;
            dense[root] = next;
        }
        out[i] = dense[root];
    }
    (InstanceLabeling::new(out), next as usize)
}

/// Hard cap for the quadratic reference clustering.
pub const BRUTE_FORCE_MAX_POINTS: usize = 5_000;

/// O(n^2) reference: connected components of the symmetrized
/// ellipsoid-adjacency graph, edge (i, j) iff either point lies in the
/// other's ellipsoid. Dense IDs by ascending smallest member index.
pub fn brute_force_cluster(cloud: &PointCloud, params: &EllipsoidParams) -> Result<ClusterRun> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = cloud.len();
    if n > BRUTE_FORCE_MAX_POINTS {
        return Err(Error::BruteForceCap {
            n,
            max: BRUTE_FORCE_MAX_POINTS,
        });
    }

    let axes: Vec<EllipsoidAxes> = cloud.points.iter().map(|&p| params.axes(p)).collect();
    let reach: Vec<f64> = axes.iter().map(|a| a.max_semi_axis()).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for i in 0..n {
        let pi = cloud.points[i];
        for j in (i + 1)..n {
            let pj = cloud.points[j];
            let max_reach = reach[i].max(reach[j]);
            if pi.distance_sq(&pj) > max_reach * max_reach {
                continue;
            }
            if in_ellipsoid(pi, &axes[i], pj) || in_ellipsoid(pj, &axes[j], pi) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }

    let mut dense = vec![0u32; n];
    let mut out = vec![0u32; n];
    let mut next = 0u32;
    for (i, slot) in out.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        if dense[root] == 0 {
            next += 1;
            dense[root] = next;
        }
        *slot = dense[root];
    }
    Ok(ClusterRun {
        labeling: InstanceLabeling::new(out),
        n_clusters: next as usize,
        early_termination: false,
    })
}

/// Fixed-radius Euclidean clustering: connected components of the
/// closed-ball adjacency graph.
pub fn euclidean_cluster(cloud: &PointCloud, radius: f64) -> Result<ClusterRun> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParam(format!(
            "clustering radius must be > 0, got {radius}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = RadiusIndex::build(cloud)?;
    let n = cloud.len();
    let mut out = vec![0u32; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if out[seed] != 0 {
            continue;
        }
        next += 1;
        out[seed] = next;
        queue.push_back(seed);
        while let Some(iq) = queue.pop_front() {
            for ni in index.find_neighbors(cloud.points[iq], radius) {
                if out[ni] == 0 {
                    out[ni] = next;
                    queue.push_back(ni);
                }
            }
        }
    }
    Ok(ClusterRun {
        labeling: InstanceLabeling::new(out),
        n_clusters: next as usize,
        early_termination: false,
    })
}
