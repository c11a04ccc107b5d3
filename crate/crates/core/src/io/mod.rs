//! Depth-map files, the benchmark manifest and result documents.

pub mod manifest;
pub mod pfm;
pub mod png16;
pub mod results;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::DepthMap;

pub use manifest::{load_manifest, save_manifest, BenchmarkManifest, DepthBinding, SampleRecord};
pub use png16::PngScaling;
pub use results::{load_results, save_results};

/// Loads a PFM or 16-bit PNG depth map. PNG files need `png` scaling.
pub fn load_depth(path: &Path, png: Option<PngScaling>) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let depth = if pfm::is_pfm(&bytes) {
        pfm::decode(&bytes, path)?
    } else if png16::is_png(&bytes) {
        let scaling = png.ok_or_else(|| {
            Error::UnsupportedFormat(format!(
                "{} is a PNG but its binding declares no png_scale",
                path.display()
            ))
        })?;
        png16::decode(&bytes, scaling, path)?
    } else {
        return Err(Error::UnsupportedFormat(format!(
            "{}: neither PFM nor PNG",
            path.display()
        )));
    };
    if depth.valid_count() == 0 {
        return Err(Error::AllInvalid);
    }
    Ok(depth)
}

/// Saves as little-endian grayscale PFM through a temporary file.
pub fn save_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    results::write_atomic(path, &pfm::encode(depth, pfm::Endian::Little))
}
