use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("rasterized mask is empty")]
    EmptyMask,

    #[error("no crop satisfies the diagonal constraint: {0}")]
    InfeasibleCrop(String),

    #[error("unsupported depth format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("depth map has no finite value")]
    AllInvalid,

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),

    #[error("sample {0:?} references unknown crop id {1:?}")]
    DanglingCropRef(String, String),

    #[error("sample {sample:?} has no depth binding for role {role:?} view {view:?}")]
    MissingBinding {
        sample: String,
        role: String,
        view: String,
    },

    #[error("grid is {width}x{height}; at least 3x3 is required")]
    TooSmall { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("effective ROI (roi ∩ valid crop footprint) is empty")]
    EmptyEffectiveRoi,

    #[error("degenerate affine fit: {0}")]
    DegenerateFit(String),

    #[error("every sampled pair fell inside the tie-exclusion band")]
    NoValidPairs,

    #[error("ring mask is empty: the ROI leaves no room for a ring")]
    RingEmpty,

    #[error("degenerate background statistics: {0}")]
    DegenerateBackground(String),

    #[error("no ring sector supports a plane fit (need 3 non-collinear pixels)")]
    AllSectorsDegenerate,

    #[error("invalid fixture spec: {0}")]
    Spec(String),

    #[error("metric {0:?} missing from results")]
    MissingMetric(String),

    #[error("baseline value of {0:?} is zero")]
    ZeroBaseline(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {sample:?} roi {roi} crop {crop:?}: {source}")]
    Unit {
        sample: String,
        roi: usize,
        crop: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable category, used as the prefix of CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegeneratePolygon(_) => "degenerate_polygon",
            Error::EmptyMask => "empty_mask",
            Error::InfeasibleCrop(_) => "infeasible_crop",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::CorruptFile { .. } => "corrupt_file",
            Error::AllInvalid => "all_invalid",
            Error::Schema { .. } => "schema_error",
            Error::DuplicateSampleId(_) => "duplicate_sample_id",
            Error::DanglingCropRef(..) => "dangling_crop_ref",
            Error::MissingBinding { .. } => "missing_binding",
            Error::TooSmall { .. } => "too_small",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyEffectiveRoi => "empty_effective_roi",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::NoValidPairs => "no_valid_pairs",
            Error::RingEmpty => "ring_empty",
            Error::DegenerateBackground(_) => "degenerate_background",
            Error::AllSectorsDegenerate => "all_sectors_degenerate",
            Error::Spec(_) => "spec_error",
            Error::MissingMetric(_) => "missing_metric",
            Error::ZeroBaseline(_) => "zero_baseline",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Unit { source, .. } => source.category(),
            Error::Io { .. } => "io_error",
            Error::Json(_) => "json_error",
        }
    }

    /// Tags the error with the unit it occurred in; the category is kept.
    pub fn in_unit(self, sample: &str, roi: usize, crop: &str) -> Self {
        Error::Unit {
            sample: sample.to_string(),
            roi,
            crop: crop.to_string(),
            source: Box::new(self),
        }
    }
}
