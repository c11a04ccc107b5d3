//! Percentile normalization and the second-difference (Laplacian) magnitude.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, MaskRaster};
use crate::stats::percentile_sorted;

/// Lower and upper percentiles used by the evaluation operator.
pub const DEFAULT_PERCENTILES: (f64, f64) = (1.0, 99.0);

/// Relative width below which a percentile range counts as flat.
const DEGENERATE_RANGE: f64 = 1e-12;

/// Depth rescaled so that the chosen low/high percentiles map to 0 and 1.
/// Values are not clipped; invalid pixels stay `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Set when `hi − lo` is negligible; every valid value is then 0.
    pub degenerate: bool,
    /// The depth before rescaling, kept for the Laplacian.
    source: Vec<f64>,
}

/// 1st/99th-percentile normalization over all valid pixels.
pub fn percentile_normalize(depth: &DepthMap) -> Result<NormalizedField> {
    percentile_normalize_with(depth, DEFAULT_PERCENTILES, None)
}

/// Normalization with custom percentiles, optionally estimating them over
/// `region` only (the whole map is still rescaled).
pub fn percentile_normalize_with(
    depth: &DepthMap,
    (lo_pct, hi_pct): (f64, f64),
    region: Option<&MaskRaster>,
) -> Result<NormalizedField> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::InvalidArgument(format!(
            "percentile bounds ({lo_pct}, {hi_pct}) must satisfy 0 ≤ lo < hi ≤ 100"
        )));
    }
    let mut sample: Vec<f64> = depth
        .values()
        .iter()
        .enumerate()
        .filter(|&(i, v)| v.is_finite() && region.is_none_or(|m| m.contains(i)))
        .map(|(_, &v)| v)
        .collect();
    if sample.is_empty() {
        return Err(Error::AllInvalid);
    }
    sample.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sample, lo_pct);
    let hi = percentile_sorted(&sample, hi_pct);
    Ok(normalize_with_bounds(depth, lo, hi))
}

/// Rescales with explicit bounds, applying the flat-range convention.
pub fn normalize_with_bounds(depth: &DepthMap, lo: f64, hi: f64) -> NormalizedField {
    let degenerate = !(hi - lo >= DEGENERATE_RANGE * hi.abs().max(1.0));
    let range = hi - lo;
    let values = depth
        .values()
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                f64::NAN
            } else if degenerate {
                0.0
            } else {
                (v - lo) / range
            }
        })
        .collect();
    NormalizedField {
        width: depth.width(),
        height: depth.height(),
        values,
        lo,
        hi,
        degenerate,
        source: depth.values().to_vec(),
    }
}

/// Per-pixel Laplacian magnitude; `NaN` where the stencil touches an
/// invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
}

impl LaplacianField {
    pub fn new(width: usize, height: usize, magnitude: Vec<f64>) -> Result<Self> {
        if magnitude.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height),
                got: magnitude.len().to_string(),
            });
        }
        Ok(Self {
            width,
            height,
            magnitude,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.magnitude[row * self.width + col]
    }

    pub fn validity(&self) -> MaskRaster {
        MaskRaster::from_bits(
            self.width,
            self.height,
            self.magnitude.iter().map(|v| v.is_finite()).collect(),
        )
        .expect("consistent dimensions")
    }
}

/// `|v(x+1,y) + v(x−1,y) + v(x,y+1) + v(x,y−1) − 4·v(x,y)|` with replicate
/// padding at the frame border.
///
/// The offset `lo` cancels in every second difference, so the stencil runs
/// on the source depth and the result is divided by `hi − lo`. Positive
/// affine images of a depth map then differ only by one common factor,
/// which keeps decile ties intact.
pub fn laplacian_magnitude(field: &NormalizedField) -> Result<LaplacianField> {
    let signed = laplacian_signed(field.width, field.height, &field.source)?;
    let range = field.hi - field.lo;
    let magnitude = signed
        .into_iter()
        .map(|v| {
            if !v.is_finite() {
                f64::NAN
            } else if field.degenerate {
                0.0
            } else {
                v.abs() / range
            }
        })
        .collect();
    LaplacianField::new(field.width, field.height, magnitude)
}

/// The same operator on any row-major grid.
pub fn laplacian_of(width: usize, height: usize, values: &[f64]) -> Result<LaplacianField> {
    let signed = laplacian_signed(width, height, values)?;
    LaplacianField::new(width, height, signed.into_iter().map(f64::abs).collect())
}

/// The signed five-point Laplacian, replicate-padded.
pub fn laplacian_signed(width: usize, height: usize, values: &[f64]) -> Result<Vec<f64>> {
    if width < 3 || height < 3 {
        return Err(Error::TooSmall { width, height });
    }
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values", width * height),
            got: values.len().to_string(),
        });
    }
    let at = |r: usize, c: usize| values[r * width + c];
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(height - 1);
        for c in 0..width {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(width - 1);
            let center = at(r, c);
            let second_x = at(r, left) - 2.0 * center + at(r, right);
            let second_y = at(up, c) - 2.0 * center + at(down, c);
            out.push(second_x + second_y);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_values() {
        let d = DepthMap::new(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let n = percentile_normalize(&d).unwrap();
        assert!((n.lo - 0.99).abs() < 1e-12 && (n.hi - 98.01).abs() < 1e-12);
        let map = |v: f64| (v - n.lo) / (n.hi - n.lo);
        assert!(map(0.99).abs() < 1e-12 && (map(98.01) - 1.0).abs() < 1e-12);
        assert!(n.values[0] < 0.0 && n.values[99] > 1.0, "no clipping");
    }

    #[test]
    fn flat_field_is_degenerate_zero() {
        let n = percentile_normalize(&DepthMap::constant(4, 4, 5.0).unwrap()).unwrap();
        assert!(n.degenerate);
        assert!(n.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_affine_images_normalize_alike() {
        let d = DepthMap::from_fn(9, 7, |r, c| ((r * 13 + c * 7) % 11) as f64 * 0.3 + (r as f64).sin()).unwrap();
        let n = percentile_normalize(&d).unwrap();
        for (a, b) in [(3.0, 7.0), (0.25, -100.0), (1e3, 1e-3)] {
            let m = percentile_normalize(&d.map(|v| a * v + b).unwrap()).unwrap();
            for (x, y) in n.values.iter().zip(&m.values) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn all_invalid_errors() {
        let d = DepthMap::constant(3, 3, f64::NAN).unwrap();
        assert!(matches!(percentile_normalize(&d), Err(Error::AllInvalid)));
    }

    fn grid(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::new();
        for r in 0..h {
            for c in 0..w {
                v.push(f(c as f64, r as f64));
            }
        }
        v
    }

    #[test]
    fn plane_has_zero_interior_response() {
        let l = laplacian_of(8, 6, &grid(8, 6, |x, y| 2.0 * x + 3.0 * y)).unwrap();
        for r in 1..5 {
            for c in 1..7 {
                assert_eq!(l.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn spike_stencil() {
        let mut v = vec![0.0; 25];
        v[12] = 1.0;
        let l = laplacian_of(5, 5, &v).unwrap();
        assert_eq!(l.get(2, 2), 4.0);
        for (r, c) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(l.get(r, c), 1.0);
        }
        assert_eq!(l.get(1, 1), 0.0);
    }

    #[test]
    fn quadratic_has_constant_response() {
        let l = laplacian_of(7, 5, &grid(7, 5, |x, _| x * x)).unwrap();
        for r in 1..4 {
            for c in 1..6 {
                assert_eq!(l.get(r, c), 2.0);
            }
        }
    }

    #[test]
    fn invalid_neighbors_propagate_and_small_frames_fail() {
        let mut v = vec![1.0; 16];
        v[5] = f64::NAN;
        let l = laplacian_of(4, 4, &v).unwrap();
        assert!(l.get(1, 1).is_nan() && l.get(1, 2).is_nan() && l.get(2, 1).is_nan());
        assert_eq!(l.get(3, 3), 0.0);
        assert!(matches!(laplacian_of(2, 5, &[0.0; 10]), Err(Error::TooSmall { .. })));
    }
}
