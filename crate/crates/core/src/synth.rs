//! Deterministic synthetic benchmark trees with known ground truth.
//!
//! Every depth value is snapped to a multiple of [`GRID`] and stays below
//! 16 in magnitude, and plane slopes and crop affines are dyadic, so scenes
//! survive the 32-bit float file format without rounding. Planes stay
//! exactly planar on disk.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{generate_crops, rasterize_roi, CropRect, RoiShape};
use crate::io::manifest::{save_manifest, BenchmarkManifest, DepthBinding, SampleRecord, FULL_VIEW};
use crate::io::save_pfm;
use crate::loss::masks::build_ring_masks;
use crate::loss::plane::{fit_plane, roi_centroid, Plane};
use crate::loss::LossConfig;
use crate::laplacian::laplacian_signed;
use crate::raster::{pixel_center, DepthMap, MaskRaster};
use crate::stats::mean_std;

/// Quantization step of every generated depth value.
pub const GRID: f64 = 1.0 / 16384.0;
/// Resolution of plane slopes.
const SLOPE_STEP: f64 = 1.0 / 8192.0;

pub const TEACHER_ROLE: &str = "teacher";
pub const STUDENT_ROLE: &str = "student";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Planar,
    Bump,
    CropOnlyBump,
    PiecewisePlanes,
    Noise,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Planar,
        Preset::Bump,
        Preset::CropOnlyBump,
        Preset::PiecewisePlanes,
        Preset::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Planar => "planar",
            Preset::Bump => "bump",
            Preset::CropOnlyBump => "crop_only_bump",
            Preset::PiecewisePlanes => "piecewise_planes",
            Preset::Noise => "noise",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown preset {s:?}")))
    }
}

/// Student-side modification of the teacher scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Edit {
    None,
    /// ROI replaced by the plane fitted on the teacher's ring.
    FlattenRoi,
    /// Whole frame replaced by the teacher's global least-squares plane.
    FlattenEverywhere,
    /// `+δ` (in background standard deviations) on the loss background.
    OffsetBg(f64),
}

impl FromStr for Edit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Edit::None),
            "flatten_roi" => Ok(Edit::FlattenRoi),
            "flatten_everywhere" => Ok(Edit::FlattenEverywhere),
            "offset_bg" => Ok(Edit::OffsetBg(0.2)),
            _ => match s.strip_prefix("offset_bg:").map(str::parse::<f64>) {
                Some(Ok(d)) if d.is_finite() => Ok(Edit::OffsetBg(d)),
                _ => Err(Error::Spec(format!("unknown edit {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureSpec {
    pub preset: Preset,
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub crops_per_sample: usize,
    pub min_diag_frac: f64,
    /// Circumradius of the hexagonal ROI in pixels.
    pub roi_radius: f64,
    /// Cut a triangular exclusion out of the ROI.
    pub roi_hole: bool,
    /// Bump height in depth units.
    pub bump_amplitude: f64,
    /// Bump standard deviation in pixels.
    pub bump_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(preset: Preset, seed: u64) -> Self {
        Self {
            preset,
            width: 160,
            height: 120,
            samples: 20,
            crops_per_sample: 4,
            min_diag_frac: 0.4,
            roi_radius: 24.0,
            roi_hole: false,
            bump_amplitude: 0.1,
            bump_sigma: 3.0,
            noise_sigma: 0.05,
            seed,
        }
    }

    /// Pixels kept between the ROI and the frame edge.
    fn margin(&self) -> f64 {
        let cfg = LossConfig::default();
        self.roi_radius + (cfg.ring_width + cfg.guard_width) as f64 + 4.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.samples == 0 || self.crops_per_sample == 0 {
            return bad("samples and crops_per_sample must be positive".into());
        }
        if !(self.roi_radius >= 4.0) {
            return bad(format!("roi_radius must be ≥ 4, got {}", self.roi_radius));
        }
        if 2.0 * self.margin() >= self.width.min(self.height) as f64 {
            return bad(format!(
                "{}x{} frame cannot hold a radius-{} ROI with its rings",
                self.width, self.height, self.roi_radius
            ));
        }
        if !(self.min_diag_frac > 0.0 && self.min_diag_frac <= 1.0) {
            return bad(format!("min_diag_frac must be in (0, 1], got {}", self.min_diag_frac));
        }
        if !(self.bump_amplitude >= 0.0 && self.bump_amplitude <= 2.0) {
            return bad(format!("bump_amplitude must be in [0, 2], got {}", self.bump_amplitude));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma <= 1.0) {
            return bad(format!("noise_sigma must be in [0, 1], got {}", self.noise_sigma));
        }
        match self.preset {
            Preset::Bump | Preset::CropOnlyBump if !(self.bump_sigma > 0.0) => {
                bad(format!("bump presets need bump_sigma > 0, got {}", self.bump_sigma))
            }
            Preset::Noise if self.noise_sigma == 0.0 => bad("noise preset needs noise_sigma > 0".into()),
            _ => Ok(()),
        }
    }
}

fn snap(v: f64) -> f64 {
    (v / GRID).round() * GRID
}

/// A crop view: `scale·D[rect] + offset`, both dyadic.
#[derive(Debug, Clone, PartialEq)]
pub struct CropView {
    pub rect: CropRect,
    pub scale: f64,
    pub offset: f64,
}

impl CropView {
    /// Cuts this view out of a full-frame depth map.
    pub fn render(&self, source: &DepthMap) -> Result<DepthMap> {
        let r = &self.rect;
        DepthMap::from_fn(r.width(), r.height(), |row, col| {
            self.scale * source.get(r.y0 + row, r.x0 + col) + self.offset
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub id: String,
    pub roi: RoiShape,
    pub roi_mask: MaskRaster,
    /// Full-frame depth.
    pub full: DepthMap,
    /// Depth that crop views are cut from (differs from `full` only for
    /// crop-only bumps).
    pub crop_source: DepthMap,
    pub crops: Vec<CropView>,
    /// Ground-truth background planes: one, or two split at `crease_y`.
    pub planes: Vec<Plane>,
    pub crease_y: Option<f64>,
}

fn hexagon(cx: f64, cy: f64, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..6)
        .map(|k| {
            let t = phase + k as f64 * std::f64::consts::FRAC_PI_3;
            [cx + radius * t.cos(), cy + radius * t.sin()]
        })
        .collect()
}

/// Generates sample `index` of the spec.
pub fn make_sample(spec: &FixtureSpec, index: usize) -> Result<SceneSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let (w, h) = (spec.width, spec.height);
    let m = spec.margin();
    let cx = rng.random_range(m..w as f64 - m);
    let cy = rng.random_range(m..h as f64 - m);
    let phase = rng.random_range(0.0..std::f64::consts::FRAC_PI_3);
    let exclusions = if spec.roi_hole {
        let r = spec.roi_radius * 0.3;
        vec![vec![[cx - r, cy - r], [cx + r, cy - r], [cx, cy + r]]]
    } else {
        Vec::new()
    };
    let roi = RoiShape::new(hexagon(cx, cy, spec.roi_radius, phase), exclusions)?;
    let roi_mask = rasterize_roi(&roi, w, h)?;

    let slope = |rng: &mut ChaCha8Rng| rng.random_range(-200i32..=200) as f64 * SLOPE_STEP;
    let (alpha, beta) = (slope(&mut rng), slope(&mut rng));
    let gamma = rng.random_range(6 * 64..=8 * 64) as f64 / 64.0;
    let (fx, fy) = ((w / 2) as f64, (h / 2) as f64);
    let base = Plane { a: alpha, b: beta, c: gamma - alpha * fx - beta * fy };
    let plane_at = |x: f64, y: f64| gamma + alpha * (x - fx) + beta * (y - fy);

    let (planes, crease) = if spec.preset == Preset::PiecewisePlanes {
        let (_, centroid_y) = roi_centroid(&roi_mask).ok_or(Error::EmptyMask)?;
        let crease = centroid_y.round();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let kink = sign * rng.random_range(150i32..=300) as f64 * SLOPE_STEP;
        let upper = Plane { a: alpha, b: beta + kink, c: base.c - kink * crease };
        (vec![upper, base], Some((crease, kink)))
    } else {
        (vec![base], None)
    };
    let background = |x: f64, y: f64| match crease {
        Some((c, kink)) if y >= c => plane_at(x, y) + kink * (y - c),
        _ => plane_at(x, y),
    };

    let sigma2 = 2.0 * spec.bump_sigma * spec.bump_sigma;
    let bump = |x: f64, y: f64| spec.bump_amplitude * (-((x - cx).powi(2) + (y - cy).powi(2)) / sigma2).exp();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let noise_field: Vec<f64> = if spec.preset == Preset::Noise {
        (0..w * h).map(|_| noise.sample(&mut rng)).collect()
    } else {
        vec![0.0; w * h]
    };
    let field = |with_bump: bool| {
        DepthMap::from_fn(w, h, |r, c| {
            let (x, y) = pixel_center(r, c);
            let mut v = background(x, y) + noise_field[r * w + c];
            if with_bump {
                v += bump(x, y);
            }
            snap(v)
        })
    };
    let (full, crop_source) = match spec.preset {
        Preset::Bump => {
            let d = field(true)?;
            (d.clone(), d)
        }
        Preset::CropOnlyBump => (field(false)?, field(true)?),
        _ => {
            let d = field(false)?;
            (d.clone(), d)
        }
    };

    let crop_seed: u64 = rng.random();
    let rects = generate_crops(&roi, w, h, spec.crops_per_sample, spec.min_diag_frac, crop_seed)?;
    let crops = rects
        .into_iter()
        .map(|rect| CropView {
            rect,
            scale: [0.5, 1.0, 2.0][rng.random_range(0..3)],
            offset: rng.random_range(-8i32..=8) as f64 / 16.0,
        })
        .collect();
    Ok(SceneSample {
        id: format!("s{index:03}"),
        roi,
        roi_mask,
        full,
        crop_source,
        crops,
        planes,
        crease_y: crease.map(|(c, _)| c),
    })
}

/// Every sample of the spec, generated in parallel.
pub fn make_scene(spec: &FixtureSpec) -> Result<Vec<SceneSample>> {
    spec.validate()?;
    (0..spec.samples).into_par_iter().map(|i| make_sample(spec, i)).collect()
}

/// Full and crop depth of one role.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub full: DepthMap,
    pub crops: Vec<DepthMap>,
}

fn views(sample: &SceneSample, full: DepthMap, crop_source: &DepthMap) -> Result<ViewSet> {
    let crops = sample
        .crops
        .iter()
        .map(|c| c.render(crop_source))
        .collect::<Result<_>>()?;
    Ok(ViewSet { full, crops })
}

fn snapped_plane(p: Plane) -> Plane {
    let step = |v: f64, s: f64| (v / s).round() * s;
    Plane { a: step(p.a, SLOPE_STEP), b: step(p.b, SLOPE_STEP), c: step(p.c, GRID) }
}

fn plane_field(w: usize, h: usize, p: Plane) -> Result<DepthMap> {
    DepthMap::from_fn(w, h, |r, c| {
        let (x, y) = pixel_center(r, c);
        snap(p.at(x, y))
    })
}

fn fit_on(depth: &DepthMap, mask: &MaskRaster) -> Result<Plane> {
    let pts: Vec<(f64, f64, f64)> = mask
        .indices()
        .filter(|&i| depth.is_valid(i))
        .map(|i| {
            let (x, y) = pixel_center(i / depth.width(), i % depth.width());
            (x, y, depth.values()[i])
        })
        .collect();
    fit_plane(&pts)
        .map(|(p, _)| snapped_plane(p))
        .ok_or_else(|| Error::Spec("cannot fit a plane to the teacher".into()))
}

/// Teacher and student views for one sample. `cfg` supplies the ring
/// geometry used by `flatten_roi` and `offset_bg`.
pub fn make_student_teacher(sample: &SceneSample, edit: Edit, cfg: &LossConfig) -> Result<(ViewSet, ViewSet)> {
    let teacher = views(sample, sample.full.clone(), &sample.crop_source)?;
    let (w, h) = (sample.full.width(), sample.full.height());
    let replace = |src: &DepthMap, mask: &MaskRaster, f: &dyn Fn(usize) -> f64| {
        DepthMap::from_fn(w, h, |r, c| {
            let i = r * w + c;
            if mask.contains(i) { f(i) } else { src.values()[i] }
        })
    };
    let student = match edit {
        Edit::None => teacher.clone(),
        Edit::FlattenRoi => {
            let ring = sample.roi_mask.dilate(cfg.ring_width).and_not(&sample.roi_mask);
            let p = fit_on(&sample.full, &ring)?;
            let flat = plane_field(w, h, p)?;
            let f = |i: usize| flat.values()[i];
            let full = replace(&sample.full, &sample.roi_mask, &f)?;
            let src = replace(&sample.crop_source, &sample.roi_mask, &f)?;
            views(sample, full, &src)?
        }
        Edit::FlattenEverywhere => {
            let p = fit_on(&sample.full, &MaskRaster::full(w, h))?;
            let flat = plane_field(w, h, p)?;
            views(sample, flat.clone(), &flat)?
        }
        Edit::OffsetBg(delta) => {
            let raw_lap = laplacian_signed(w, h, sample.full.values())?;
            let rings = build_ring_masks(&sample.roi_mask, &raw_lap, cfg.ring_width, cfg.guard_width)?;
            let bg = rings.background(cfg.strict_background);
            let sample_bg: Vec<f64> = bg.indices().map(|i| sample.full.values()[i]).collect();
            let (_, sigma) = mean_std(&sample_bg);
            let shift = delta * sigma;
            let full = replace(&sample.full, bg, &|i| sample.full.values()[i] + shift)?;
            let src = replace(&sample.crop_source, bg, &|i| sample.crop_source.values()[i] + shift)?;
            views(sample, full, &src)?
        }
    };
    Ok((teacher, student))
}

fn file_name(role: &str, view: &str) -> String {
    format!("{role}_{view}.pfm")
}

fn sample_record(spec: &FixtureSpec, s: &SceneSample) -> SampleRecord {
    let mut depth = BTreeMap::new();
    for role in [TEACHER_ROLE, STUDENT_ROLE] {
        let rel = |view: &str| format!("{}/{}", s.id, file_name(role, view));
        let mut binding = DepthBinding::new(rel(FULL_VIEW));
        for cv in &s.crops {
            binding.crops.insert(cv.rect.id.clone(), rel(&cv.rect.id));
        }
        depth.insert(role.to_string(), binding);
    }
    SampleRecord {
        id: s.id.clone(),
        width: spec.width,
        height: spec.height,
        rois: vec![s.roi.clone()],
        crops: s.crops.iter().map(|c| c.rect.clone()).collect(),
        depth,
        negative: false,
    }
}

/// The manifest [`write_tree`] would write for `spec`, without touching the
/// file system.
pub fn plan_manifest(spec: &FixtureSpec, root: &Path) -> Result<BenchmarkManifest> {
    let samples = make_scene(spec)?;
    let records = samples.iter().map(|s| sample_record(spec, s)).collect();
    Ok(BenchmarkManifest::new(records, root))
}

/// Writes `manifest.json` and one PFM per (sample, role, view) under `dir`.
/// The `teacher` role holds the scene and `student` the edited scene.
pub fn write_tree(spec: &FixtureSpec, edit: Edit, dir: &Path) -> Result<BenchmarkManifest> {
    let samples = make_scene(spec)?;
    let cfg = LossConfig::default();
    let records = samples
        .par_iter()
        .map(|s| -> Result<SampleRecord> {
            let (teacher, student) = make_student_teacher(s, edit, &cfg)?;
            let record = sample_record(spec, s);
            for (role, set) in [(TEACHER_ROLE, &teacher), (STUDENT_ROLE, &student)] {
                let binding = &record.depth[role];
                save_pfm(&set.full, &dir.join(&binding.full))?;
                for (cv, d) in s.crops.iter().zip(&set.crops) {
                    save_pfm(d, &dir.join(&binding.crops[&cv.rect.id]))?;
                }
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = BenchmarkManifest::new(records, dir);
    save_manifest(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(preset: Preset) -> FixtureSpec {
        FixtureSpec { samples: 3, ..FixtureSpec::new(preset, 42) }
    }

    #[test]
    fn values_are_on_the_grid() {
        for preset in Preset::ALL {
            let s = make_sample(&small(preset), 1).unwrap();
            for d in [&s.full, &s.crop_source] {
                for &v in d.values() {
                    assert_eq!(v, (v as f32) as f64, "{preset:?}");
                    assert!(v.abs() < 16.0);
                }
            }
            for c in &s.crops {
                for &v in c.render(&s.crop_source).unwrap().values() {
                    assert_eq!(v, (v as f32) as f64);
                }
            }
        }
    }

    #[test]
    fn planar_is_exactly_planar() {
        let s = make_sample(&small(Preset::Planar), 0).unwrap();
        let lap = laplacian_signed(160, 120, s.full.values()).unwrap();
        for r in 1..119 {
            for c in 1..159 {
                assert_eq!(lap[r * 160 + c], 0.0);
            }
        }
    }

    #[test]
    fn piecewise_planes_meet_at_the_crease() {
        let s = make_sample(&small(Preset::PiecewisePlanes), 2).unwrap();
        let crease = s.crease_y.unwrap();
        let (upper, lower) = (s.planes[0], s.planes[1]);
        for x in [3.5, 50.5, 120.5] {
            assert!((upper.at(x, crease) - lower.at(x, crease)).abs() < 1e-12);
        }
        for (r, c) in [(5usize, 7usize), (110, 150)] {
            let (x, y) = pixel_center(r, c);
            let p = if y >= crease { upper } else { lower };
            assert!((s.full.get(r, c) - p.at(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = make_scene(&small(Preset::Bump)).unwrap();
        let b = make_scene(&small(Preset::Bump)).unwrap();
        assert_eq!(a, b);
        let c = make_scene(&FixtureSpec { seed: 43, ..small(Preset::Bump) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_errors() {
        let mut s = small(Preset::Bump);
        s.bump_amplitude = -1.0;
        assert!(matches!(make_scene(&s), Err(Error::Spec(_))));
        let mut s = small(Preset::Noise);
        s.noise_sigma = 0.0;
        assert!(matches!(make_scene(&s), Err(Error::Spec(_))));
        let mut s = small(Preset::Planar);
        s.width = 50;
        assert!(matches!(make_scene(&s), Err(Error::Spec(_))));
        assert!("zigzag".parse::<Preset>().is_err());
        assert_eq!("offset_bg:0.5".parse::<Edit>().unwrap(), Edit::OffsetBg(0.5));
    }

    #[test]
    fn bump_clears_the_roi_boundary() {
        let spec = small(Preset::Bump);
        let s = make_sample(&spec, 0).unwrap();
        let plane = make_sample(&FixtureSpec { preset: Preset::Planar, ..spec }, 0).unwrap();
        let ring = s.roi_mask.dilate(8).and_not(&s.roi_mask);
        for i in ring.indices() {
            assert_eq!(s.full.values()[i], plane.full.values()[i]);
        }
    }

    #[test]
    fn edits() {
        let cfg = LossConfig::default();
        let s = make_sample(&small(Preset::Bump), 0).unwrap();
        let (t, st) = make_student_teacher(&s, Edit::None, &cfg).unwrap();
        assert_eq!(t, st);
        let (t, st) = make_student_teacher(&s, Edit::FlattenRoi, &cfg).unwrap();
        for i in 0..t.full.len() {
            if !s.roi_mask.contains(i) {
                assert_eq!(t.full.values()[i], st.full.values()[i]);
            }
        }
        let (_, st) = make_student_teacher(&s, Edit::FlattenEverywhere, &cfg).unwrap();
        let lap = laplacian_signed(160, 120, st.full.values()).unwrap();
        let interior = MaskRaster::interior(160, 120);
        let worst = interior.indices().fold(0.0f64, |m, i| m.max(lap[i].abs()));
        assert!(worst < 1e-12, "{worst}");
    }
}
