//! Topology-aware toolkit for multi-class Circle of Willis vessel volumes.
//!
//! The crate covers everything around the segmentation model itself:
//! modality-specific preprocessing, centerline-weighted connectivity-aware
//! loss terms with analytic gradients, rule-based topological refinement of
//! predicted masks, segmentation-derived detection boxes and CoW-graph edge
//! lists, and a topology-sensitive evaluation suite.

pub mod classes;
pub mod error;
pub mod io;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod preprocess;
pub mod refine;
pub mod tasks;
#[cfg(any(test, feature = "testing"))]
pub mod testing;
pub mod volume;

pub use classes::{ClassMap, CowClass};
pub use error::{Error, Result};
pub use volume::{one_hot, Affine, LabelVolume, ProbVolume, Spacing, Volume};
