//! Benchmark-level evaluation: every (sample, ROI, crop) unit of a manifest
//! through normalization, Laplacian, decile aggregates and composite scores.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{map_crop_to_full, rasterize_roi};
use crate::io::manifest::{BenchmarkManifest, SampleRecord, FULL_VIEW};
use crate::io::{load_depth, results::format_f64};
use crate::laplacian::{
    laplacian_magnitude, laplacian_of, normalize_with_bounds, percentile_normalize_with,
    LaplacianField, DEFAULT_PERCENTILES,
};
use crate::metrics::{composite_scores, effective_region, roi_aggregates, CompositeScores};
use crate::raster::{DepthMap, MaskRaster};
use crate::stats::percentile_sorted;

/// Where normalization percentiles are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Over every valid pixel of the view.
    #[default]
    PerView,
    /// Over the unit's effective region only.
    PerRoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricConfig {
    pub scope: NormalizationScope,
    pub lo_pct: f64,
    pub hi_pct: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            scope: NormalizationScope::PerView,
            lo_pct: DEFAULT_PERCENTILES.0,
            hi_pct: DEFAULT_PERCENTILES.1,
        }
    }
}

/// One evaluated (sample, ROI, crop) unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitScores {
    pub sample: String,
    pub roi: usize,
    pub crop: String,
    pub t_full: f64,
    pub t_crop: f64,
    pub m_full: f64,
    pub m_crop: f64,
    pub region_pixels: usize,
    pub scores: CompositeScores,
}

impl UnitScores {
    pub fn unit_id(&self) -> String {
        format!("{}/roi{}/{}", self.sample, self.roi, self.crop)
    }

    fn sort_key(&self) -> (&str, usize, &str) {
        (&self.sample, self.roi, &self.crop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScores {
    /// Mean of each component over all units; `None` when nothing was evaluated.
    pub aggregate: Option<CompositeScores>,
    /// Sorted by (sample id, ROI index, crop id).
    pub units: Vec<UnitScores>,
    pub negatives_skipped: usize,
}

/// A view's depth with its per-view Laplacian precomputed.
struct View {
    depth: DepthMap,
    laplacian: LaplacianField,
}

fn prepare_view(depth: DepthMap, config: &MetricConfig) -> Result<View> {
    let laplacian = match config.scope {
        NormalizationScope::PerView => {
            let n = percentile_normalize_with(&depth, (config.lo_pct, config.hi_pct), None)?;
            laplacian_magnitude(&n)?
        }
        // Only validity matters until the region is known.
        NormalizationScope::PerRoi => laplacian_of(depth.width(), depth.height(), depth.values())?,
    };
    Ok(View { depth, laplacian })
}

fn region_laplacian(view: &View, region: &MaskRaster, config: &MetricConfig) -> Result<LaplacianField> {
    let mut sample: Vec<f64> = region.indices().map(|i| view.depth.values()[i]).collect();
    sample.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sample, config.lo_pct);
    let hi = percentile_sorted(&sample, config.hi_pct);
    laplacian_magnitude(&normalize_with_bounds(&view.depth, lo, hi))
}

fn score_unit(
    full: &View,
    crop: &View,
    roi: &MaskRaster,
    config: &MetricConfig,
) -> Result<(u64, CompositeScores, crate::metrics::RoiAggregates)> {
    let crop_valid = crop.depth.validity();
    let agg = match config.scope {
        NormalizationScope::PerView => roi_aggregates(&full.laplacian, &crop.laplacian, roi, &crop_valid)?,
        NormalizationScope::PerRoi => {
            let region = effective_region(&full.laplacian, &crop.laplacian, roi, &crop_valid);
            if region.is_empty() {
                return Err(Error::EmptyEffectiveRoi);
            }
            let lf = region_laplacian(full, &region, config)?;
            let lc = region_laplacian(crop, &region, config)?;
            roi_aggregates(&lf, &lc, &region, &crop_valid)?
        }
    };
    let scores = composite_scores(&agg);
    Ok((agg.region.count() as u64, scores, agg))
}

/// Scores a single (full, crop-in-full-frame) pair over one ROI mask.
pub fn evaluate_pair(
    full: &DepthMap,
    crop_in_full: &DepthMap,
    roi: &MaskRaster,
    config: &MetricConfig,
) -> Result<(crate::metrics::RoiAggregates, CompositeScores)> {
    let f = prepare_view(full.clone(), config)?;
    let c = prepare_view(crop_in_full.clone(), config)?;
    let (_, scores, agg) = score_unit(&f, &c, roi, config)?;
    Ok((agg, scores))
}

/// Loads the depth file of `view` ("full" or a crop id) for `role`.
pub fn load_view(manifest: &BenchmarkManifest, sample: &SampleRecord, role: &str, view: &str) -> Result<DepthMap> {
    let binding = sample.binding(role)?;
    let rel = sample.view_path(role, view)?;
    load_depth(&manifest.resolve(rel), binding.png)
}

fn score_sample(
    sample: &SampleRecord,
    config: &MetricConfig,
    loader: &(dyn Fn(&SampleRecord, &str) -> Result<DepthMap> + Sync),
) -> Result<Vec<UnitScores>> {
    let tag = |e: Error, roi: usize, crop: &str| e.in_unit(&sample.id, roi, crop);
    let full_depth = loader(sample, FULL_VIEW).map_err(|e| tag(e, 0, FULL_VIEW))?;
    full_depth
        .check_shape(sample.width, sample.height)
        .map_err(|e| tag(e, 0, FULL_VIEW))?;
    let full = prepare_view(full_depth, config).map_err(|e| tag(e, 0, FULL_VIEW))?;
    let masks = sample
        .rois
        .iter()
        .enumerate()
        .map(|(k, r)| rasterize_roi(r, sample.width, sample.height).map_err(|e| tag(e, k, FULL_VIEW)))
        .collect::<Result<Vec<_>>>()?;
    let mut units = Vec::new();
    for rect in &sample.crops {
        let crop_depth = loader(sample, &rect.id).map_err(|e| tag(e, 0, &rect.id))?;
        let placed = map_crop_to_full(&crop_depth, rect, sample.width, sample.height)
            .map_err(|e| tag(e, 0, &rect.id))?;
        let crop = prepare_view(placed, config).map_err(|e| tag(e, 0, &rect.id))?;
        for (k, mask) in masks.iter().enumerate() {
            let (n, scores, agg) = score_unit(&full, &crop, mask, config).map_err(|e| tag(e, k, &rect.id))?;
            units.push(UnitScores {
                sample: sample.id.clone(),
                roi: k,
                crop: rect.id.clone(),
                t_full: agg.t_full,
                t_crop: agg.t_crop,
                m_full: agg.m_full,
                m_crop: agg.m_crop,
                region_pixels: n as usize,
                scores,
            });
        }
    }
    Ok(units)
}

/// Evaluates every positive sample of the manifest for `role`, reading depth
/// files from disk.
pub fn benchmark_scores(manifest: &BenchmarkManifest, role: &str, config: &MetricConfig) -> Result<BenchmarkScores> {
    benchmark_scores_with(manifest, role, config, &|s, view| load_view(manifest, s, role, view))
}

/// As [`benchmark_scores`], with depth supplied by `loader(sample, view)`.
/// Samples run in parallel; the result does not depend on scheduling.
pub fn benchmark_scores_with(
    manifest: &BenchmarkManifest,
    role: &str,
    config: &MetricConfig,
    loader: &(dyn Fn(&SampleRecord, &str) -> Result<DepthMap> + Sync),
) -> Result<BenchmarkScores> {
    let positives: Vec<&SampleRecord> = manifest.samples.iter().filter(|s| !s.negative).collect();
    for s in &positives {
        s.binding(role)?;
    }
    let per_sample: Vec<Vec<UnitScores>> = positives
        .par_iter()
        .map(|s| score_sample(s, config, loader))
        .collect::<Result<_>>()?;
    let mut units: Vec<UnitScores> = per_sample.into_iter().flatten().collect();
    units.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(BenchmarkScores {
        aggregate: CompositeScores::mean(units.iter().map(|u| &u.scores)),
        units,
        negatives_skipped: manifest.samples.len() - positives.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub unit: String,
    pub t_full: f64,
    pub t_crop: f64,
    pub m_full: f64,
    pub m_crop: f64,
}

pub const SCATTER_HEADER: &str = "unit,t_full,t_crop,m_full,m_crop";

/// One row per unit in (sample, ROI, crop) order.
pub fn scatter_export(units: &[UnitScores]) -> Vec<ScatterRow> {
    let mut sorted: Vec<&UnitScores> = units.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    sorted
        .into_iter()
        .map(|u| ScatterRow {
            unit: u.unit_id(),
            t_full: u.t_full,
            t_crop: u.t_crop,
            m_full: u.m_full,
            m_crop: u.m_crop,
        })
        .collect()
}

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.unit,
            format_f64(r.t_full),
            format_f64(r.t_crop),
            format_f64(r.m_full),
            format_f64(r.m_crop)
        );
    }
    out
}
