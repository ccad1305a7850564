//! Immutable radius-query index over a fixed point cloud.
//!
//! A balanced kd-tree stored as an implicit binary tree over an index
//! permutation: the median of each slice is the node, halves are the
//! subtrees. Queries return exact closed-ball membership, indices sorted
//! ascending so downstream clustering is order-deterministic.

use crate::error::{Error, Result};
use crate::types::{Point3, PointCloud};

pub struct RadiusIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
}

impl RadiusIndex {
    /// O(n log n) build. The index keeps its own copy of the points.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = cloud.points.clone();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_recursive(&points, &mut order, 0);
        Ok(Self { points, order })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All indices i with ||p_i - q|| <= r (closed ball), sorted ascending.
    /// Includes the query point itself when it is stored.
    pub fn find_neighbors(&self, q: Point3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if r >= 0.0 {
            self.collect(0, self.order.len(), 0, q, r, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn collect(&self, lo: usize, hi: usize, depth: usize, q: Point3, r: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = self.points[idx];
        if q.distance_sq(&p) <= r * r {
            out.push(idx);
        }
        let axis = depth % 3;
        let delta = q.coord(axis) - p.coord(axis);
        if delta <= r {
            self.collect(lo, mid, depth + 1, q, r, out);
        }
        if delta >= -r {
            self.collect(mid + 1, hi, depth + 1, q, r, out);
        }
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&i, &j| {
        points[i as usize]
            .coord(axis)
            .total_cmp(&points[j as usize].coord(axis))
            .then(i.cmp(&j))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut rest[1..], depth + 1);
}
