//! Open-world instance segmentation for LiDAR point clouds.
//!
//! The library clusters SemanticKITTI-format scans with a range-adaptive
//! ellipsoidal neighborhood, heals over-segmented known instances by
//! diffuse searching, merges both into a complete per-scan labeling, and
//! scores results with association and best-overlap metrics.

// `!(x > 0.0)` is deliberate where NaN must fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clustering;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod refinement;
pub mod spatial;
pub mod types;

pub use error::{Error, Result};
