//! Ring masks around the ROI, background z-normalization and seam smoothing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, MaskRaster};
use crate::stats::{mean_std, percentile_select};

/// Percentile of the teacher response at or above which ring pixels are edges.
pub const EDGE_PCT: f64 = 90.0;
/// Smallest background standard deviation accepted by [`z_normalize`].
pub const MIN_SIGMA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RingMasks {
    pub base_ring: MaskRaster,
    /// Low-gradient seam: `base_ring \ r_e`.
    pub r_f: MaskRaster,
    /// High-gradient edge subset of the ring.
    pub r_e: MaskRaster,
    pub r_g: MaskRaster,
    /// `(1−m)(1−r_f)(1−r_g)`; may contain `r_e` pixels.
    pub m_bg: MaskRaster,
    /// `m_bg` with `r_e` removed as well.
    pub m_bg_strict: MaskRaster,
}

impl RingMasks {
    pub fn background(&self, strict: bool) -> &MaskRaster {
        if strict {
            &self.m_bg_strict
        } else {
            &self.m_bg
        }
    }
}

/// Builds the seam, edge, guard and background masks around `roi`.
///
/// `teacher_response` ranks ring pixels (larger is edgier); non-finite
/// entries are never edges. Ties at the decile threshold are kept.
pub fn build_ring_masks(
    roi: &MaskRaster,
    teacher_response: &[f64],
    ring_width: usize,
    guard_width: usize,
) -> Result<RingMasks> {
    if roi.is_empty() {
        return Err(Error::EmptyMask);
    }
    if ring_width == 0 || guard_width == 0 {
        return Err(Error::InvalidArgument("ring and guard widths must be at least 1".into()));
    }
    if teacher_response.len() != roi.bits().len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} responses", roi.bits().len()),
            got: teacher_response.len().to_string(),
        });
    }
    let inner = roi.dilate(ring_width);
    let base_ring = inner.and_not(roi);
    if base_ring.is_empty() {
        return Err(Error::RingEmpty);
    }
    let mut ranked: Vec<f64> = base_ring
        .indices()
        .map(|i| teacher_response[i].abs())
        .filter(|v| v.is_finite())
        .collect();
    let r_e = if ranked.is_empty() {
        MaskRaster::empty(roi.width(), roi.height())
    } else {
        let threshold = percentile_select(&mut ranked, EDGE_PCT);
        let mut bits = vec![false; roi.bits().len()];
        for i in base_ring.indices() {
            let v = teacher_response[i].abs();
            bits[i] = v.is_finite() && v >= threshold;
        }
        MaskRaster::from_bits(roi.width(), roi.height(), bits)?
    };
    let r_f = base_ring.and_not(&r_e);
    let r_g = roi.dilate(ring_width + guard_width).and_not(&inner);
    let m_bg = roi.or(&r_f).or(&r_g).not();
    let m_bg_strict = m_bg.and_not(&r_e);
    Ok(RingMasks {
        base_ring,
        r_f,
        r_e,
        r_g,
        m_bg,
        m_bg_strict,
    })
}

/// Depth standardized by background statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZNormalized {
    #[serde(skip)]
    pub z: DepthMap,
    pub mu_b: f64,
    pub sigma_b: f64,
}

/// Standardizes `depth` by its own mean and population deviation over the
/// valid pixels of `background`.
pub fn z_normalize(depth: &DepthMap, background: &MaskRaster) -> Result<ZNormalized> {
    depth.check_shape(background.width(), background.height())?;
    let sample: Vec<f64> = background
        .indices()
        .filter(|&i| depth.is_valid(i))
        .map(|i| depth.values()[i])
        .collect();
    if sample.len() < 2 {
        return Err(Error::DegenerateBackground(format!(
            "{} valid background pixels, need 2",
            sample.len()
        )));
    }
    let (mu, sigma) = mean_std(&sample);
    z_normalize_with(depth, mu, sigma)
}

/// Standardizes with externally supplied statistics (e.g. the teacher's).
pub fn z_normalize_with(depth: &DepthMap, mu_b: f64, sigma_b: f64) -> Result<ZNormalized> {
    if !(sigma_b >= MIN_SIGMA) || !mu_b.is_finite() {
        return Err(Error::DegenerateBackground(format!(
            "background deviation {sigma_b} below {MIN_SIGMA}"
        )));
    }
    Ok(ZNormalized {
        z: depth.map(|v| (v - mu_b) / sigma_b)?,
        mu_b,
        sigma_b,
    })
}

/// Mean of `z` over the `(2r+1)²` window restricted to valid pixels of
/// `seam`. Defined on the seam only; `NaN` elsewhere.
pub fn ring_local_smooth(z: &DepthMap, seam: &MaskRaster, radius: usize) -> Result<DepthMap> {
    z.check_shape(seam.width(), seam.height())?;
    let (w, h) = (z.width(), z.height());
    let member = |i: usize| seam.contains(i) && z.is_valid(i);
    let mut out = vec![f64::NAN; w * h];
    for i in seam.indices().filter(|&i| z.is_valid(i)) {
        let (r, c) = (i / w, i % w);
        let (mut sum, mut n) = (0.0, 0usize);
        for rr in r.saturating_sub(radius)..(r + radius + 1).min(h) {
            for cc in c.saturating_sub(radius)..(c + radius + 1).min(w) {
                let j = rr * w + cc;
                if member(j) {
                    sum += z.values()[j];
                    n += 1;
                }
            }
        }
        out[i] = sum / n as f64;
    }
    DepthMap::new(w, h, out)
}
