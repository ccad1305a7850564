//! Shared domain types: points, clouds, ellipsoid parameters, class sets.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// A point in the sensor frame, meters. The sensor optical center is the
/// origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    /// Range of the projection onto the XOY plane, i.e. sqrt(x^2 + y^2).
    pub fn planar_range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Azimuth of the projection onto the XOY plane, radians from +X.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Flat array of 3D points with an optional parallel remission array.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub remission: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            remission: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cloud restricted to `indices`, in the given order. Remission is
    /// carried along when present.
    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            remission: self
                .remission
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i]).collect()),
        }
    }
}

/// The three tunable scales of the range-adaptive ellipsoidal neighborhood,
/// plus the degeneracy floor for points directly above or below the sensor.
///
/// Angles are taken in degrees at this boundary and converted once.
#[derive(Debug, Clone, Copy)]
pub struct EllipsoidParams {
    rho: f64,
    tan_half_theta: f64,
    tan_half_phi: f64,
    d_min: f64,
}

impl EllipsoidParams {
    pub const DEFAULT_D_MIN: f64 = 0.001;

    pub fn new(rho: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::with_d_min(rho, theta_deg, phi_deg, Self::DEFAULT_D_MIN)
    }

    pub fn with_d_min(rho: f64, theta_deg: f64, phi_deg: f64, d_min: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParam(format!("rho must be > 0, got {rho}")));
        }
        if !(theta_deg > 0.0 && theta_deg < 180.0) {
            return Err(Error::InvalidParam(format!(
                "theta must be in (0, 180) degrees, got {theta_deg}"
            )));
        }
        if !(phi_deg > 0.0 && phi_deg < 180.0) {
            return Err(Error::InvalidParam(format!(
                "phi must be in (0, 180) degrees, got {phi_deg}"
            )));
        }
        if !(d_min > 0.0) {
            return Err(Error::InvalidParam(format!(
                "d_min must be > 0, got {d_min}"
            )));
        }
        Ok(Self {
            rho,
            tan_half_theta: (theta_deg.to_radians() / 2.0).tan(),
            tan_half_phi: (phi_deg.to_radians() / 2.0).tan(),
            d_min,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Semi-axes of the ellipsoidal neighborhood centered at `p`:
    /// a = rho/2 along the sensor ray, b = tan(theta/2)*d across it,
    /// c = tan(phi/2)*d vertically, with d the planar range clamped to d_min.
    pub fn axes(&self, p: Point3) -> EllipsoidAxes {
        let d = p.planar_range().max(self.d_min);
        EllipsoidAxes {
            a: self.rho / 2.0,
            b: self.tan_half_theta * d,
            c: self.tan_half_phi * d,
            lambda: p.azimuth(),
            d,
        }
    }
}

impl Default for EllipsoidParams {
    /// rho = 2.0 m, theta = 2.0 deg, phi = 7.5 deg.
    fn default() -> Self {
        Self::new(2.0, 2.0, 7.5).unwrap()
    }
}

/// See [`EllipsoidParams::axes`].
pub fn ellipsoid_axes(p: Point3, params: &EllipsoidParams) -> EllipsoidAxes {
    params.axes(p)
}

/// Semi-axis lengths of one query point's neighborhood, with the azimuth
/// `lambda` and planar range `d` of the query point.
#[derive(Debug, Clone, Copy)]
pub struct EllipsoidAxes {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub d: f64,
}

impl EllipsoidAxes {
    pub fn max_semi_axis(&self) -> f64 {
        self.a.max(self.b).max(self.c)
    }

    pub fn min_semi_axis(&self) -> f64 {
        self.a.min(self.b).min(self.c)
    }
}

/// Semantic-ID sets steering the pipeline: which classes are instance-free
/// background and which are the annotated "thing" classes.
#[derive(Debug, Clone, Default)]
pub struct ClassConfig {
    background_ids: BTreeSet<u16>,
    known_thing_ids: BTreeSet<u16>,
}

impl ClassConfig {
    pub fn new(background_ids: BTreeSet<u16>, known_thing_ids: BTreeSet<u16>) -> Result<Self> {
        if let Some(id) = background_ids.intersection(&known_thing_ids).next() {
            return Err(Error::InvalidParam(format!(
                "class {id} is listed as both background and known thing"
            )));
        }
        Ok(Self {
            background_ids,
            known_thing_ids,
        })
    }

    /// No background, no known things: pure class-agnostic operation.
    pub fn empty() -> Self {
        Self::default()
    }

    /// SemanticKITTI defaults: background road(40), parking(44), sidewalk(48),
    /// other-ground(49), vegetation(70), terrain(72); things car(10),
    /// bicycle(11), motorcycle(15), truck(18), other-vehicle(20), person(30),
    /// bicyclist(31), motorcyclist(32).
    pub fn semantic_kitti() -> Self {
        Self {
            background_ids: [40, 44, 48, 49, 70, 72].into_iter().collect(),
            known_thing_ids: [10, 11, 15, 18, 20, 30, 31, 32].into_iter().collect(),
        }
    }

    pub fn is_background(&self, semantic: u16) -> bool {
        self.background_ids.contains(&semantic)
    }

    pub fn is_known_thing(&self, semantic: u16) -> bool {
        self.known_thing_ids.contains(&semantic)
    }

    pub fn background_ids(&self) -> &BTreeSet<u16> {
        &self.background_ids
    }

    pub fn known_thing_ids(&self) -> &BTreeSet<u16> {
        &self.known_thing_ids
    }
}

/// Per-point instance IDs; 0 means unassigned/background, instances are
/// numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceLabeling {
    pub ids: Vec<u32>,
}

impl InstanceLabeling {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn zeros(n: usize) -> Self {
        Self { ids: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Largest ID present, i.e. the instance count when IDs are dense.
    pub fn max_id(&self) -> u32 {
        self.ids.iter().copied().max().unwrap_or(0)
    }
}
