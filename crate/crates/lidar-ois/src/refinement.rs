//! Diffuse searching: transitively group known instances whose point sets
//! come within a fixed radius of each other, then re-cluster each group
//! jointly to heal over-segmentation.

use std::collections::BTreeMap;

use crate::clustering::ellipsoidal_cluster;
use crate::error::{Error, Result};
use crate::spatial::RadiusIndex;
use crate::types::{EllipsoidParams, InstanceLabeling, PointCloud};

/// The known-instance points of one scan with their original instance IDs
/// and the fixed diffuse radius.
#[derive(Debug, Clone)]
pub struct KnownInstanceSet {
    pub cloud: PointCloud,
    pub ids: Vec<u32>,
    pub r: f64,
}

impl KnownInstanceSet {
    pub fn new(cloud: PointCloud, ids: Vec<u32>, r: f64) -> Result<Self> {
        if ids.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                what: "instance ids",
                got: ids.len(),
                expected: cloud.len(),
            });
        }
        if ids.contains(&0) {
            return Err(Error::InvalidParam(
                "known instance set contains an unassigned (0) id".into(),
            ));
        }
        if !(r > 0.0) {
            return Err(Error::InvalidParam(format!(
                "diffuse radius must be > 0, got {r}"
            )));
        }
        Ok(Self { cloud, ids, r })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    fn points_by_id(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.ids.iter().enumerate() {
            map.entry(id).or_default().push(i);
        }
        map
    }
}

/// Partition the original instance IDs into groups: IDs share a group iff
/// connected through a chain of instances whose point sets come within
/// distance `r`. Groups and their members are in ascending ID order.
pub fn diffuse_groups(known: &KnownInstanceSet) -> Result<Vec<Vec<u32>>> {
    if known.is_empty() {
        return Ok(Vec::new());
    }
    let index = RadiusIndex::build(&known.cloud)?;
    Ok(diffuse_groups_with(known, &index))
}

fn diffuse_groups_with(known: &KnownInstanceSet, index: &RadiusIndex) -> Vec<Vec<u32>> {
    let by_id = known.points_by_id();
    let mut grouped: BTreeMap<u32, bool> = by_id.keys().map(|&id| (id, false)).collect();
    let mut groups = Vec::new();

    for &seed_id in by_id.keys() {
        if grouped[&seed_id] {
            continue;
        }
        grouped.insert(seed_id, true);
        let mut group = vec![seed_id];
        // every point of every instance pulled into the group gets queried
        let mut queue: Vec<usize> = by_id[&seed_id].clone();
        while let Some(iq) = queue.pop() {
            for ni in index.find_neighbors(known.cloud.points[iq], known.r) {
                let nid = known.ids[ni];
                if !grouped[&nid] {
                    grouped.insert(nid, true);
                    group.push(nid);
                    queue.extend_from_slice(&by_id[&nid]);
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Re-cluster each diffuse group with ellipsoidal clustering. Refined IDs
/// are dense 1..K and globally unique across groups; every known point is
/// covered exactly once. Re-clustering may merge fragments or split an
/// original instance.
pub fn refine_known(
    known: &KnownInstanceSet,
    params: &EllipsoidParams,
    early_termination: bool,
) -> Result<InstanceLabeling> {
    if known.is_empty() {
        return Ok(InstanceLabeling::zeros(0));
    }
    let index = RadiusIndex::build(&known.cloud)?;
    let groups = diffuse_groups_with(known, &index);
    let by_id = known.points_by_id();

    let mut out = vec![0u32; known.len()];
    let mut offset = 0u32;
    for group in groups {
        let mut member_points: Vec<usize> = group.iter().flat_map(|id| by_id[id].clone()).collect();
        member_points.sort_unstable();
        let sub = known.cloud.subset(&member_points);
        let run = ellipsoidal_cluster(&sub, params, early_termination)?;
        for (k, &pi) in member_points.iter().enumerate() {
            out[pi] = run.labeling.ids[k] + offset;
        }
        offset += run.n_clusters as u32;
    }
    Ok(InstanceLabeling::new(out))
}
