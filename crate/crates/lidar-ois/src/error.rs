use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: scan file length {len} is not a multiple of 16 ({residue} trailing bytes)")]
    MalformedScan { path: PathBuf, len: u64, residue: u64 },

    #[error("{path}: label file holds {found} records but the scan has {expected} points")]
    LabelCountMismatch {
        path: PathBuf,
        found: usize,
        expected: usize,
    },

    #[error("{path}: label file length {len} is not a multiple of 4")]
    MalformedLabels { path: PathBuf, len: u64 },

    #[error("{count} instance id(s) exceed 65535 and cannot be packed into a label file")]
    InstanceOverflow { count: usize },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud has {n} points, above the {max}-point brute-force cap")]
    BruteForceCap { n: usize, max: usize },

    #[error("spatial index covers {index} points but the cloud has {cloud}")]
    IndexMismatch { index: usize, cloud: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, Error>;
