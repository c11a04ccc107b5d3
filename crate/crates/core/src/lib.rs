//! Evaluation and diagnostics for 3D hallucinations in monocular depth
//! estimation.
//!
//! Everything here is a pure function of depth maps produced by an external
//! model:
//!
//! - [`geometry`]: ROI polygons, crop generation, crop-to-full mapping.
//! - [`io`]: PFM / 16-bit PNG depth files, the benchmark manifest, canonical
//!   result documents.
//! - [`laplacian`], [`metrics`], [`benchmark`]: percentile normalization, the
//!   Laplacian operator, decile aggregates and the DCS/CCS scores.
//! - [`alignment`]: background affine fit, R² and aligned error heatmaps.
//! - [`ordinal`]: sampled pairwise ordinal accuracy.
//! - [`loss`]: the grounded self-distillation loss terms, itemized.
//! - [`synth`]: deterministic synthetic benchmark trees.
//! - [`report`]: relative-change tables between two result sets.

pub mod alignment;
pub mod benchmark;
pub mod error;
pub mod geometry;
pub mod io;
pub mod laplacian;
pub mod loss;
pub mod metrics;
pub mod ordinal;
pub mod raster;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{CropRect, RoiShape};
pub use raster::{DepthMap, MaskRaster};

/// Version string embedded in every result document.
pub const TOOLKIT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
