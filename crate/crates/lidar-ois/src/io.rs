//! SemanticKITTI-format file I/O.
//!
//! Scan files (`.bin`) are records of four little-endian f32: x, y, z,
//! remission. Label files (`.label`) are one little-endian u32 per point,
//! semantic class in bits 0-15, instance ID in bits 16-31. Prediction files
//! use the same layout. All binary files are little-endian regardless of
//! host.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{InstanceLabeling, Point3, PointCloud};

/// One decoded `.label` entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRecord {
    pub raw: u32,
}

impl LabelRecord {
    pub fn new(semantic: u16, instance: u16) -> Self {
        Self {
            raw: ((instance as u32) << 16) | semantic as u32,
        }
    }

    pub fn semantic(&self) -> u16 {
        (self.raw & 0xFFFF) as u16
    }

    pub fn instance(&self) -> u16 {
        (self.raw >> 16) as u16
    }
}

/// A scan with its per-point semantic and instance labels.
#[derive(Debug, Clone)]
pub struct ScanBundle {
    pub cloud: PointCloud,
    pub semantic: Vec<u16>,
    pub instance: Vec<u32>,
}

impl ScanBundle {
    pub fn new(cloud: PointCloud, labels: &[LabelRecord]) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                got: labels.len(),
                expected: cloud.len(),
            });
        }
        Ok(Self {
            semantic: labels.iter().map(|l| l.semantic()).collect(),
            instance: labels.iter().map(|l| l.instance() as u32).collect(),
            cloud,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Read a `.bin` scan. An empty file is a valid empty cloud.
pub fn read_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedScan {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            residue: (bytes.len() % 16) as u64,
        });
    }
    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut remission = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(16) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        points.push(Point3::new(f(0) as f64, f(4) as f64, f(8) as f64));
        remission.push(f(12));
    }
    Ok(PointCloud {
        points,
        remission: Some(remission),
    })
}

/// Read a `.label` file paired with an `n_points`-point scan.
pub fn read_labels(path: &Path, n_points: usize) -> Result<Vec<LabelRecord>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedLabels {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
        });
    }
    let found = bytes.len() / 4;
    if found != n_points {
        return Err(Error::LabelCountMismatch {
            path: path.to_path_buf(),
            found,
            expected: n_points,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| LabelRecord {
            raw: u32::from_le_bytes(b.try_into().unwrap()),
        })
        .collect())
}

pub fn write_labels(records: &[LabelRecord], path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(records.len() * 4);
    for r in records {
        bytes.extend_from_slice(&r.raw.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Pack per-point semantics and instance IDs into label records. Instance
/// IDs must fit in 16 bits; the error reports how many do not.
pub fn pack_records(semantic: &[u16], instance: &[u32]) -> Result<Vec<LabelRecord>> {
    if semantic.len() != instance.len() {
        return Err(Error::LengthMismatch {
            what: "instance ids",
            got: instance.len(),
            expected: semantic.len(),
        });
    }
    let overflow = instance.iter().filter(|&&id| id > u16::MAX as u32).count();
    if overflow > 0 {
        return Err(Error::InstanceOverflow { count: overflow });
    }
    Ok(semantic
        .iter()
        .zip(instance)
        .map(|(&s, &i)| LabelRecord::new(s, i as u16))
        .collect())
}

/// Deterministic color for an instance ID; ID 0 renders gray.
pub fn instance_color(id: u32) -> [u8; 3] {
    if id == 0 {
        return [128, 128, 128];
    }
    // splitmix64-style scramble so adjacent IDs get unrelated colors
    let mut h = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    // keep channels off the dark end so instances stay visible
    [
        64 + (h & 0xFF) as u8 % 192,
        64 + ((h >> 8) & 0xFF) as u8 % 192,
        64 + ((h >> 16) & 0xFF) as u8 % 192,
    ]
}

/// Write an ASCII PLY with per-vertex RGB derived from the instance IDs.
pub fn export_ply(cloud: &PointCloud, labeling: &InstanceLabeling, path: &Path) -> Result<()> {
    if labeling.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "labeling",
            got: labeling.len(),
            expected: cloud.len(),
        });
    }
    let mut body = String::new();
    for (p, &id) in cloud.points.iter().zip(&labeling.ids) {
        let [r, g, b] = instance_color(id);
        body.push_str(&format!("{} {} {} {r} {g} {b}\n", p.x, p.y, p.z));
    }
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n{body}",
        cloud.len()
    )
    .map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}
