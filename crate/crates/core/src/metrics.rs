//! Decile aggregates over an ROI and the deviation/confusion composite scores
//! in the (full, crop) response plane.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplacian::LaplacianField;
use crate::raster::MaskRaster;
use crate::stats::percentile_select;

/// Percentile at or above which responses count as top-decile.
pub const TOP_DECILE_PCT: f64 = 90.0;
/// Percentile below which responses are trimmed from the robust mean.
pub const TRIM_PCT: f64 = 10.0;

/// Per-(ROI, crop) aggregates. Filtered fields are full-frame grids that
/// hold the response on kept pixels and 0 elsewhere.
#[derive(Debug, Clone)]
pub struct RoiAggregates {
    pub t_full: f64,
    pub t_crop: f64,
    pub m_full: f64,
    pub m_crop: f64,
    /// Effective region `R_i`.
    pub region: MaskRaster,
    pub kept_top_full: MaskRaster,
    pub kept_top_crop: MaskRaster,
    pub kept_trim_full: MaskRaster,
    pub kept_trim_crop: MaskRaster,
    pub top_full: Vec<f64>,
    pub top_crop: Vec<f64>,
    pub trim_full: Vec<f64>,
    pub trim_crop: Vec<f64>,
}

/// Composite scores of one unit. `c_*` are the off-diagonal (confusion)
/// components, reported as `D_cluster` / `D_avg`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CompositeScores {
    pub d_cluster: f64,
    pub d_avg: f64,
    pub dcs: f64,
    #[serde(rename = "D_cluster")]
    pub c_cluster: f64,
    #[serde(rename = "D_avg")]
    pub c_avg: f64,
    pub ccs: f64,
}

impl CompositeScores {
    pub const KEYS: [&'static str; 6] = ["d_cluster", "d_avg", "dcs", "D_cluster", "D_avg", "ccs"];

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "d_cluster" => self.d_cluster,
            "d_avg" => self.d_avg,
            "dcs" => self.dcs,
            "D_cluster" => self.c_cluster,
            "D_avg" => self.c_avg,
            "ccs" => self.ccs,
            _ => return None,
        })
    }

    /// Component-wise arithmetic mean; `None` for an empty input.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a CompositeScores>) -> Option<Self> {
        let mut acc = CompositeScores::default();
        let mut n = 0usize;
        for s in items {
            acc.d_cluster += s.d_cluster;
            acc.d_avg += s.d_avg;
            acc.dcs += s.dcs;
            acc.c_cluster += s.c_cluster;
            acc.c_avg += s.c_avg;
            acc.ccs += s.ccs;
            n += 1;
        }
        (n > 0).then(|| {
            let k = n as f64;
            CompositeScores {
                d_cluster: acc.d_cluster / k,
                d_avg: acc.d_avg / k,
                dcs: acc.dcs / k,
                c_cluster: acc.c_cluster / k,
                c_avg: acc.c_avg / k,
                ccs: acc.ccs / k,
            }
        })
    }
}

/// `R_i`: ROI pixels inside the crop footprint, off the frame border, where
/// both responses are defined.
pub fn effective_region(
    l_full: &LaplacianField,
    l_crop: &LaplacianField,
    roi: &MaskRaster,
    crop_valid: &MaskRaster,
) -> MaskRaster {
    let (w, h) = (roi.width(), roi.height());
    MaskRaster::from_fn(w, h, |r, c| {
        let i = r * w + c;
        roi.contains(i)
            && crop_valid.contains(i)
            && r > 0
            && c > 0
            && r + 1 < h
            && c + 1 < w
            && l_full.magnitude[i].is_finite()
            && l_crop.magnitude[i].is_finite()
    })
}

struct Filtered {
    kept: MaskRaster,
    field: Vec<f64>,
    sum: f64,
    count: usize,
}

/// Keeps region pixels whose response is ≥ the given percentile (ties kept).
fn keep_at_or_above(l: &LaplacianField, region: &MaskRaster, pct: f64) -> Filtered {
    let mut sample: Vec<f64> = region.indices().map(|i| l.magnitude[i]).collect();
    let threshold = percentile_select(&mut sample, pct);
    let mut field = vec![0.0; l.magnitude.len()];
    let mut bits = vec![false; l.magnitude.len()];
    let (mut sum, mut count) = (0.0, 0usize);
    for i in region.indices() {
        let v = l.magnitude[i];
        if v >= threshold {
            field[i] = v;
            bits[i] = true;
            sum += v;
            count += 1;
        }
    }
    Filtered {
        kept: MaskRaster::from_bits(l.width, l.height, bits).expect("same frame"),
        field,
        sum,
        count,
    }
}

pub fn roi_aggregates(
    l_full: &LaplacianField,
    l_crop: &LaplacianField,
    roi: &MaskRaster,
    crop_valid: &MaskRaster,
) -> Result<RoiAggregates> {
    let frame = (roi.width(), roi.height());
    for (name, dims) in [
        ("l_full", (l_full.width, l_full.height)),
        ("l_crop", (l_crop.width, l_crop.height)),
        ("crop_valid", (crop_valid.width(), crop_valid.height())),
    ] {
        if dims != frame {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} frame", frame.0, frame.1),
                got: format!("{name} {}x{}", dims.0, dims.1),
            });
        }
    }
    let region = effective_region(l_full, l_crop, roi, crop_valid);
    if region.is_empty() {
        return Err(Error::EmptyEffectiveRoi);
    }
    let top_full = keep_at_or_above(l_full, &region, TOP_DECILE_PCT);
    let top_crop = keep_at_or_above(l_crop, &region, TOP_DECILE_PCT);
    let trim_full = keep_at_or_above(l_full, &region, TRIM_PCT);
    let trim_crop = keep_at_or_above(l_crop, &region, TRIM_PCT);
    Ok(RoiAggregates {
        t_full: top_full.sum,
        t_crop: top_crop.sum,
        m_full: trim_full.sum / trim_full.count as f64,
        m_crop: trim_crop.sum / trim_crop.count as f64,
        region,
        kept_top_full: top_full.kept,
        kept_top_crop: top_crop.kept,
        kept_trim_full: trim_full.kept,
        kept_trim_crop: trim_crop.kept,
        top_full: top_full.field,
        top_crop: top_crop.field,
        trim_full: trim_full.field,
        trim_crop: trim_crop.field,
    })
}

/// Radial (DCS) and off-diagonal (CCS) departures. Per-pixel averages run
/// over all of `R_i`, filtered-out pixels contributing 0.
pub fn composite_scores(agg: &RoiAggregates) -> CompositeScores {
    let n = agg.region.count() as f64;
    let d_cluster = agg.t_full.hypot(agg.t_crop);
    let c_cluster = (agg.m_full - agg.m_crop).abs() / std::f64::consts::SQRT_2;
    let (mut radial, mut off_diagonal) = (0.0, 0.0);
    for i in agg.region.indices() {
        radial += agg.top_full[i].hypot(agg.top_crop[i]);
        off_diagonal += (agg.trim_full[i] - agg.trim_crop[i]).abs() / std::f64::consts::SQRT_2;
    }
    let d_avg = radial / n;
    let c_avg = off_diagonal / n;
    CompositeScores {
        d_cluster,
        d_avg,
        dcs: d_cluster + d_avg,
        c_cluster,
        c_avg,
        ccs: c_cluster + c_avg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A `w×3` frame whose middle row (off the border) carries `values`.
    fn row_fixture(values: &[f64]) -> (LaplacianField, MaskRaster) {
        let w = values.len() + 2;
        let mut mag = vec![0.0; w * 3];
        mag[w + 1..w + 1 + values.len()].copy_from_slice(values);
        let roi = MaskRaster::from_fn(w, 3, |r, c| r == 1 && c >= 1 && c <= values.len());
        (LaplacianField::new(w, 3, mag).unwrap(), roi)
    }

    #[test]
    fn one_to_ten() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let (l, roi) = row_fixture(&values);
        let all = MaskRaster::full(12, 3);
        let agg = roi_aggregates(&l, &l, &roi, &all).unwrap();
        assert_eq!(agg.kept_top_full.count(), 1);
        assert_eq!(agg.t_full, 10.0);
        assert_eq!(agg.kept_trim_full.count(), 9);
        assert_eq!(agg.m_full, 6.0);
    }

    #[test]
    fn ties_are_kept() {
        let (l, roi) = row_fixture(&[5.0; 10]);
        let agg = roi_aggregates(&l, &l, &roi, &MaskRaster::full(12, 3)).unwrap();
        assert_eq!(agg.t_full, 50.0);
        assert_eq!(agg.m_full, 5.0);
    }

    #[test]
    fn zero_fields_score_zero() {
        let (l, roi) = row_fixture(&[0.0; 6]);
        let agg = roi_aggregates(&l, &l, &roi, &MaskRaster::full(8, 3)).unwrap();
        assert_eq!((agg.t_full, agg.t_crop, agg.m_full, agg.m_crop), (0.0, 0.0, 0.0, 0.0));
        let s = composite_scores(&agg);
        assert_eq!((s.dcs, s.ccs), (0.0, 0.0));
    }

    #[test]
    fn three_four_five() {
        let (lf, roi) = row_fixture(&[3.0]);
        let (lc, _) = row_fixture(&[4.0]);
        let agg = roi_aggregates(&lf, &lc, &roi, &MaskRaster::full(3, 3)).unwrap();
        let s = composite_scores(&agg);
        assert_eq!((s.d_cluster, s.d_avg, s.dcs), (5.0, 5.0, 10.0));
    }

    #[test]
    fn identical_views_have_zero_confusion() {
        let (l, roi) = row_fixture(&[0.3, 1.7, 0.2, 9.0, 4.4]);
        let s = composite_scores(&roi_aggregates(&l, &l, &roi, &MaskRaster::full(7, 3)).unwrap());
        assert_eq!((s.c_cluster, s.c_avg, s.ccs), (0.0, 0.0, 0.0));
        assert!(s.dcs > 0.0);
    }

    #[test]
    fn unit_offset_gives_root_two() {
        let (lf, roi) = row_fixture(&[1.0; 10]);
        let (lc, _) = row_fixture(&[0.0; 10]);
        let s = composite_scores(&roi_aggregates(&lf, &lc, &roi, &MaskRaster::full(12, 3)).unwrap());
        assert!((s.ccs - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn empty_region_and_border_exclusion() {
        let l = LaplacianField::new(4, 4, vec![1.0; 16]).unwrap();
        let border = MaskRaster::from_fn(4, 4, |r, _| r == 0);
        assert!(matches!(
            roi_aggregates(&l, &l, &border, &MaskRaster::full(4, 4)),
            Err(Error::EmptyEffectiveRoi)
        ));
        let roi = MaskRaster::full(4, 4);
        let agg = roi_aggregates(&l, &l, &roi, &MaskRaster::full(4, 4)).unwrap();
        assert_eq!(agg.region.count(), 4);
    }

    #[test]
    fn mean_of_units() {
        let a = CompositeScores { dcs: 10.0, ..Default::default() };
        let b = CompositeScores { dcs: 20.0, ..Default::default() };
        assert_eq!(CompositeScores::mean([&a, &b]).unwrap().dcs, 15.0);
        assert!(CompositeScores::mean(std::iter::empty()).is_none());
    }
}
