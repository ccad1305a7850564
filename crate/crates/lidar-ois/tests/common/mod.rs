//! Shared fixtures for the integration suites: synthetic LiDAR-like scenes
//! and canonical partition forms for label-independent comparison.
#![allow(dead_code)] // not every suite uses every helper

use lidar_ois::types::{Point3, PointCloud};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random scene of Poisson-scattered blobs plus range-scaled ring noise,
/// roughly what a ground-removed scan looks like.
pub fn random_scene(rng: &mut ChaCha8Rng, n_min: usize, n_max: usize) -> PointCloud {
    let n_total = rng.gen_range(n_min..=n_max);
    let n_blobs = rng.gen_range(3..=8);
    let centers: Vec<(Point3, f64)> = (0..n_blobs)
        .map(|_| {
            let range = rng.gen_range(6.0..45.0);
            let az = rng.gen_range(0.0..std::f64::consts::TAU);
            let center = Point3::new(
                range * az.cos(),
                range * az.sin(),
                rng.gen_range(-1.0..1.5),
            );
            let spread = rng.gen_range(0.15..0.6);
            (center, spread)
        })
        .collect();

    let n_noise = n_total / 5;
    let mut points = Vec::with_capacity(n_total);
    for _ in 0..(n_total - n_noise) {
        let (c, spread) = centers[rng.gen_range(0..n_blobs)];
        points.push(Point3::new(
            c.x + rng.gen_range(-spread..spread),
            c.y + rng.gen_range(-spread..spread),
            c.z + rng.gen_range(-spread..spread) * 0.5,
        ));
    }
    // ring noise: isolated returns whose angular jitter scales with range
    for _ in 0..n_noise {
        let range: f64 = rng.gen_range(5.0..50.0);
        let az = rng.gen_range(0.0..std::f64::consts::TAU);
        let jitter = range * 0.002;
        points.push(Point3::new(
            range * az.cos() + rng.gen_range(-jitter..jitter),
            range * az.sin() + rng.gen_range(-jitter..jitter),
            rng.gen_range(-1.5..2.0),
        ));
    }
    PointCloud::from_points(points)
}

/// Partition as sorted groups of point indices, sorted by first member:
/// equal canonical forms means equal partitions up to ID relabeling.
pub fn canonical_partition(ids: &[u32]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &id) in ids.iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Rotate a cloud about the Z axis by `angle` radians.
pub fn rotate_z(cloud: &PointCloud, angle: f64) -> PointCloud {
    let (s, c) = angle.sin_cos();
    PointCloud::from_points(
        cloud
            .points
            .iter()
            .map(|p| Point3::new(p.x * c - p.y * s, p.x * s + p.y * c, p.z))
            .collect(),
    )
}
