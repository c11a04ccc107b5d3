//! The grounded self-distillation loss evaluated offline from teacher and
//! student depth maps, with every term itemized.
//!
//! A branch (full frame or one crop) runs:
//! ring masks → background z-normalization → ring plane mixture →
//! residuals → gating → `hkr` + `nkp` + gating regularizer.

pub mod gating;
pub mod masks;
pub mod plane;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rasterize_roi;
use crate::io::manifest::{BenchmarkManifest, SampleRecord, FULL_VIEW};
use crate::laplacian::laplacian_signed;
use crate::raster::{DepthMap, MaskRaster};
use crate::stats::masked_mean;

pub use gating::{gating_targets, GatingBundle};
pub use masks::{build_ring_masks, ring_local_smooth, z_normalize, z_normalize_with, RingMasks, ZNormalized};
pub use plane::{fit_plane_mixture, mixture_residuals, Plane, PlaneMixture, Residuals};

/// What the seam term compares against the smoothed teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeamTarget {
    /// `|z̃ − z̃_T|`: both fields smoothed over the seam.
    #[default]
    SmoothedBoth,
    /// `|z − z̃_T|`: only the teacher smoothed.
    TeacherOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
    pub alpha7: f64,
    #[serde(rename = "lambda_F")]
    pub lambda_f: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub temperature: f64,
    pub smoothing: f64,
    pub beta_ce: f64,
    #[serde(rename = "beta_H")]
    pub beta_h: f64,
    pub beta_anchor: f64,
    pub ring_width: usize,
    pub guard_width: usize,
    pub smooth_radius: usize,
    pub seam_target: SeamTarget,
    /// Exclude edge-ring pixels from the background as well.
    pub strict_background: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.4,
            alpha3: 1.0,
            alpha4: 0.5,
            alpha5: 0.3,
            alpha6: 0.8,
            alpha7: 0.3,
            lambda_f: 0.5,
            k: 3,
            temperature: 0.1,
            smoothing: 0.1,
            beta_ce: 1.0,
            beta_h: 0.01,
            beta_anchor: 0.1,
            ring_width: 8,
            guard_width: 4,
            smooth_radius: 5,
            seam_target: SeamTarget::SmoothedBoth,
            strict_background: false,
        }
    }
}

impl LossConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: LossConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("alpha5", self.alpha5),
            ("alpha6", self.alpha6),
            ("alpha7", self.alpha7),
            ("lambda_F", self.lambda_f),
            ("beta_ce", self.beta_ce),
            ("beta_H", self.beta_h),
            ("beta_anchor", self.beta_anchor),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite weight ≥ 0, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::InvalidArgument(format!("smoothing must be in [0, 1), got {}", self.smoothing)));
        }
        if self.ring_width == 0 || self.guard_width == 0 {
            return Err(Error::InvalidArgument("ring_width and guard_width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn nkp_alphas(&self) -> [f64; 5] {
        [self.alpha3, self.alpha4, self.alpha5, self.alpha6, self.alpha7]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HkrTerms {
    pub hkr_flat: f64,
    pub hkr_mixture: f64,
    pub hkr: f64,
}

fn mean_over(mask: &MaskRaster, f: impl Fn(usize) -> f64) -> Option<f64> {
    masked_mean(mask.indices().map(f).filter(|v| v.is_finite()))
}

/// Mean of a curvature quantity over `mask` without the frame border,
/// where the padded second differences are not meaningful.
fn curvature_mean(mask: &MaskRaster, f: impl Fn(usize) -> f64) -> Option<f64> {
    mean_over(&mask.and(&MaskRaster::interior(mask.width(), mask.height())), f)
}

/// `hkr_flat = mean_m |𝓛(z)|`, `hkr_mixture = Σ w_k ℓ_k + w_null ℓ_null`.
pub fn hkr_loss(
    z: &DepthMap,
    roi: &MaskRaster,
    gate: &GatingBundle,
    residuals: &Residuals,
    alpha1: f64,
    alpha2: f64,
) -> Result<HkrTerms> {
    z.check_shape(roi.width(), roi.height())?;
    let lap = laplacian_signed(z.width(), z.height(), z.values())?;
    let hkr_flat = curvature_mean(roi, |i| lap[i].abs()).unwrap_or(0.0);
    let k = residuals.ell.len();
    if gate.w.len() != k + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} gating weights for {} experts",
            gate.w.len(),
            k + 1
        )));
    }
    let hkr_mixture = residuals
        .ell
        .iter()
        .chain(std::iter::once(&residuals.ell_null))
        .zip(&gate.w)
        .map(|(l, w)| l * w)
        .sum::<f64>();
    Ok(HkrTerms {
        hkr_flat,
        hkr_mixture,
        hkr: alpha1 * hkr_flat + alpha2 * hkr_mixture,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NkpTerms {
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub t7: f64,
    pub nkp: f64,
    /// Terms whose mask was empty and that contributed 0.
    pub empty_terms: Vec<String>,
}

/// Teacher-preservation terms over the background, seam, edge and guard
/// masks. `seam_student` is compared with `seam_teacher` on `r_f`.
pub fn nkp_loss(
    z: &DepthMap,
    z_t: &DepthMap,
    rings: &RingMasks,
    seam_student: &DepthMap,
    seam_teacher: &DepthMap,
    alphas: [f64; 5],
    strict_background: bool,
) -> Result<NkpTerms> {
    z.check_shape(z_t.width(), z_t.height())?;
    let lap = laplacian_signed(z.width(), z.height(), z.values())?;
    let lap_t = laplacian_signed(z_t.width(), z_t.height(), z_t.values())?;
    let bg = rings.background(strict_background);
    let mut empty_terms = Vec::new();
    let mut term = |name: &str, value: Option<f64>| {
        value.unwrap_or_else(|| {
            empty_terms.push(name.to_string());
            0.0
        })
    };
    let curvature_gap = |i: usize| (lap[i] - lap_t[i]).abs();
    let t3 = term("t3", mean_over(bg, |i| (z.values()[i] - z_t.values()[i]).abs()));
    let t4 = term("t4", curvature_mean(bg, curvature_gap));
    let t5 = term(
        "t5",
        mean_over(&rings.r_f, |i| (seam_student.values()[i] - seam_teacher.values()[i]).abs()),
    );
    let t6 = term("t6", curvature_mean(&rings.r_e, curvature_gap));
    let t7 = term("t7", curvature_mean(&rings.r_g, curvature_gap));
    let t = [t3, t4, t5, t6, t7];
    let nkp = t.iter().zip(alphas).map(|(t, a)| t * a).sum();
    Ok(NkpTerms { t3, t4, t5, t6, t7, nkp, empty_terms })
}

/// All terms of one branch (full frame or a crop).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchLoss {
    pub hkr_flat: f64,
    pub hkr_mixture: f64,
    pub hkr: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub t7: f64,
    pub nkp: f64,
    pub ce: f64,
    pub entropy: f64,
    pub anchor: f64,
    pub gating_reg: f64,
    pub total: f64,
    pub ell: Vec<f64>,
    pub ell_null: f64,
    pub sigmas: Vec<f64>,
    pub planes: Vec<Plane>,
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    /// Mean `|𝓛(z_T)|` over the base ring, a gating-network feature.
    pub ring_curvature: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub positive: bool,
    /// Conditions under which a term was forced to 0.
    pub flags: Vec<String>,
}

impl BranchLoss {
    pub const SCALARS: [&'static str; 14] = [
        "hkr_flat", "hkr_mixture", "hkr", "t3", "t4", "t5", "t6", "t7", "nkp", "ce", "entropy", "anchor",
        "gating_reg", "total",
    ];

    pub fn scalars(&self) -> [f64; 14] {
        [
            self.hkr_flat,
            self.hkr_mixture,
            self.hkr,
            self.t3,
            self.t4,
            self.t5,
            self.t6,
            self.t7,
            self.nkp,
            self.ce,
            self.entropy,
            self.anchor,
            self.gating_reg,
            self.total,
        ]
    }
}

/// One branch from raw depth. An empty `roi` is allowed for negative
/// samples: ROI, ring and gating terms are then 0 and flagged.
pub fn branch_loss(
    teacher: &DepthMap,
    student: &DepthMap,
    roi: &MaskRaster,
    positive: bool,
    logits: Option<&[f64]>,
    cfg: &LossConfig,
) -> Result<BranchLoss> {
    cfg.validate()?;
    teacher.check_shape(roi.width(), roi.height())?;
    student.check_shape(roi.width(), roi.height())?;
    let (w, h) = (roi.width(), roi.height());
    let mut flags = Vec::new();
    if roi.is_empty() {
        if positive {
            return Err(Error::EmptyMask);
        }
        flags.push("no_roi".to_string());
    }
    // Edge ranking uses raw teacher curvature; the order is scale-free.
    let raw_lap = laplacian_signed(w, h, teacher.values())?;
    let rings = if roi.is_empty() {
        let none = MaskRaster::empty(w, h);
        RingMasks {
            base_ring: none.clone(),
            r_f: none.clone(),
            r_e: none.clone(),
            r_g: none,
            m_bg: MaskRaster::full(w, h),
            m_bg_strict: MaskRaster::full(w, h),
        }
    } else {
        build_ring_masks(roi, &raw_lap, cfg.ring_width, cfg.guard_width)?
    };
    let zt = z_normalize(teacher, rings.background(cfg.strict_background))?;
    let z = z_normalize_with(student, zt.mu_b, zt.sigma_b)?;

    let seam_teacher = ring_local_smooth(&zt.z, &rings.r_f, cfg.smooth_radius)?;
    let seam_student = match cfg.seam_target {
        SeamTarget::SmoothedBoth => ring_local_smooth(&z.z, &rings.r_f, cfg.smooth_radius)?,
        SeamTarget::TeacherOnly => z.z.clone(),
    };
    let nkp = nkp_loss(&z.z, &zt.z, &rings, &seam_student, &seam_teacher, cfg.nkp_alphas(), cfg.strict_background)?;
    flags.extend(nkp.empty_terms.iter().map(|t| format!("empty_mask:{t}")));

    let lap_t = laplacian_signed(w, h, zt.z.values())?;
    let ring_curvature = curvature_mean(&rings.base_ring, |i| lap_t[i].abs()).unwrap_or(0.0);

    let (hkr, residuals, mix, gate) = if roi.is_empty() {
        let zero = HkrTerms { hkr_flat: 0.0, hkr_mixture: 0.0, hkr: 0.0 };
        (zero, Residuals { ell: Vec::new(), ell_null: 0.0 }, PlaneMixture {
            planes: Vec::new(),
            sigmas: Vec::new(),
            ring_pixels_per_plane: Vec::new(),
        }, None)
    } else {
        let mix = fit_plane_mixture(&zt.z, roi, &rings.base_ring, cfg.k)?;
        let residuals = mixture_residuals(&z.z, &zt.z, roi, &mix)?;
        let gate = gating_targets(
            &mix.sigmas,
            &residuals.ell,
            residuals.ell_null,
            positive,
            cfg.temperature,
            cfg.smoothing,
            logits,
        )?;
        let hkr = hkr_loss(&z.z, roi, &gate, &residuals, cfg.alpha1, cfg.alpha2)?;
        (hkr, residuals, mix, Some(gate))
    };
    let (ce, entropy, anchor, wv, qv) = match &gate {
        Some(g) => (g.ce, g.entropy, g.anchor, g.w.clone(), g.q.clone()),
        None => (0.0, 0.0, 0.0, Vec::new(), Vec::new()),
    };
    let gating_reg = cfg.beta_ce * ce + cfg.beta_h * entropy + cfg.beta_anchor * anchor;
    Ok(BranchLoss {
        hkr_flat: hkr.hkr_flat,
        hkr_mixture: hkr.hkr_mixture,
        hkr: hkr.hkr,
        t3: nkp.t3,
        t4: nkp.t4,
        t5: nkp.t5,
        t6: nkp.t6,
        t7: nkp.t7,
        nkp: nkp.nkp,
        ce,
        entropy,
        anchor,
        gating_reg,
        total: hkr.hkr + nkp.nkp + gating_reg,
        ell: residuals.ell,
        ell_null: residuals.ell_null,
        sigmas: mix.sigmas,
        planes: mix.planes,
        w: wv,
        q: qv,
        ring_curvature,
        mu_b: zt.mu_b,
        sigma_b: zt.sigma_b,
        positive,
        flags,
    })
}

/// Crop and full branches combined as `crop + λ_F·full`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub crop: Option<BranchLoss>,
    pub full: BranchLoss,
    #[serde(rename = "lambda_F")]
    pub lambda_f: f64,
    pub total: f64,
}

/// Combined objective. Without a crop branch the full branch stands alone.
pub fn total_loss(crop: Option<BranchLoss>, full: BranchLoss, lambda_f: f64) -> Result<LossBreakdown> {
    if !(lambda_f >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_F must be ≥ 0, got {lambda_f}")));
    }
    let total = match &crop {
        Some(c) => c.total + lambda_f * full.total,
        None => full.total,
    };
    Ok(LossBreakdown { crop, full, lambda_f, total })
}

/// One (sample, crop) loss unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossUnit {
    pub sample: String,
    pub crop: Option<String>,
    pub breakdown: LossBreakdown,
}

impl LossUnit {
    pub fn unit_id(&self) -> String {
        format!("{}/{}", self.sample, self.crop.as_deref().unwrap_or(FULL_VIEW))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedUnit {
    pub unit: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub units: Vec<LossUnit>,
    pub skipped: Vec<SkippedUnit>,
    /// Unit means: `total`, and each branch scalar as `full.<term>` and
    /// `crop.<term>` (crop means over units that have a crop branch).
    pub means: BTreeMap<String, f64>,
}

/// Union of the sample's ROIs rasterized into a `width×height` view of
/// the frame rectangle `(x0, y0, x1, y1)`.
fn roi_union_in_view(sample: &SampleRecord, rect: (f64, f64, f64, f64), width: usize, height: usize) -> Result<MaskRaster> {
    let (x0, y0, x1, y1) = rect;
    let (sx, sy) = (width as f64 / (x1 - x0), height as f64 / (y1 - y0));
    let mut mask = MaskRaster::empty(width, height);
    for shape in &sample.rois {
        let local = shape.transformed(x0, y0, sx, sy)?;
        mask = mask.or(&rasterize_roi(&local, width, height)?);
    }
    Ok(mask)
}

type Loader<'a> = dyn Fn(&SampleRecord, &str, &str) -> Result<DepthMap> + Sync + 'a;

fn sample_units(
    sample: &SampleRecord,
    student_role: &str,
    teacher_role: &str,
    cfg: &LossConfig,
    loader: &Loader<'_>,
) -> Result<(Vec<LossUnit>, Vec<SkippedUnit>)> {
    let tag = |e: Error, crop: &str| e.in_unit(&sample.id, 0, crop);
    let teacher = loader(sample, teacher_role, FULL_VIEW).map_err(|e| tag(e, FULL_VIEW))?;
    let student = loader(sample, student_role, FULL_VIEW).map_err(|e| tag(e, FULL_VIEW))?;
    let frame = (0.0, 0.0, sample.width as f64, sample.height as f64);
    let roi = roi_union_in_view(sample, frame, sample.width, sample.height).map_err(|e| tag(e, FULL_VIEW))?;
    let full = branch_loss(&teacher, &student, &roi, !sample.negative, None, cfg).map_err(|e| tag(e, FULL_VIEW))?;
    if sample.crops.is_empty() {
        let unit = LossUnit {
            sample: sample.id.clone(),
            crop: None,
            breakdown: total_loss(None, full, cfg.lambda_f)?,
        };
        return Ok((vec![unit], Vec::new()));
    }
    let (mut units, mut skipped) = (Vec::new(), Vec::new());
    for rect in &sample.crops {
        let branch = || -> Result<BranchLoss> {
            let t = loader(sample, teacher_role, &rect.id)?;
            let s = loader(sample, student_role, &rect.id)?;
            let bounds = (rect.x0 as f64, rect.y0 as f64, rect.x1 as f64, rect.y1 as f64);
            let roi = roi_union_in_view(sample, bounds, t.width(), t.height())?;
            branch_loss(&t, &s, &roi, !sample.negative, None, cfg)
        };
        match branch() {
            Ok(crop) => units.push(LossUnit {
                sample: sample.id.clone(),
                crop: Some(rect.id.clone()),
                breakdown: total_loss(Some(crop), full.clone(), cfg.lambda_f)?,
            }),
            Err(e) => skipped.push(SkippedUnit {
                unit: format!("{}/{}", sample.id, rect.id),
                category: e.category().to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok((units, skipped))
}

/// Loss units of every sample in the manifest, reading depth from disk.
pub fn manifest_loss(
    manifest: &BenchmarkManifest,
    student_role: &str,
    teacher_role: &str,
    cfg: &LossConfig,
) -> Result<LossReport> {
    manifest_loss_with(manifest, student_role, teacher_role, cfg, &|s, role, view| {
        crate::benchmark::load_view(manifest, s, role, view)
    })
}

/// As [`manifest_loss`] with depth supplied by `loader(sample, role, view)`.
pub fn manifest_loss_with(
    manifest: &BenchmarkManifest,
    student_role: &str,
    teacher_role: &str,
    cfg: &LossConfig,
    loader: &Loader<'_>,
) -> Result<LossReport> {
    cfg.validate()?;
    for s in &manifest.samples {
        s.binding(student_role)?;
        s.binding(teacher_role)?;
    }
    let per_sample: Vec<(Vec<LossUnit>, Vec<SkippedUnit>)> = manifest
        .samples
        .par_iter()
        .map(|s| sample_units(s, student_role, teacher_role, cfg, loader))
        .collect::<Result<_>>()?;
    let mut units = Vec::new();
    let mut skipped = Vec::new();
    for (u, s) in per_sample {
        units.extend(u);
        skipped.extend(s);
    }
    units.sort_by_key(|u| u.unit_id());
    skipped.sort_by(|a, b| a.unit.cmp(&b.unit));
    let means = unit_means(&units);
    Ok(LossReport { units, skipped, means })
}

fn unit_means(units: &[LossUnit]) -> BTreeMap<String, f64> {
    let mut means = BTreeMap::new();
    if units.is_empty() {
        return means;
    }
    let n = units.len() as f64;
    means.insert("total".into(), units.iter().map(|u| u.breakdown.total).sum::<f64>() / n);
    for (k, name) in BranchLoss::SCALARS.iter().enumerate() {
        let full = units.iter().map(|u| u.breakdown.full.scalars()[k]).sum::<f64>() / n;
        means.insert(format!("full.{name}"), full);
        let crops: Vec<f64> = units
            .iter()
            .filter_map(|u| u.breakdown.crop.as_ref().map(|c| c.scalars()[k]))
            .collect();
        if !crops.is_empty() {
            means.insert(format!("crop.{name}"), crops.iter().sum::<f64>() / crops.len() as f64);
        }
    }
    means
}
