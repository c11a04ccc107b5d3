//! Subcommands of the `mirage` binary. Each one validates its flags, runs a
//! deterministic pipeline, writes its outputs atomically and returns a short
//! human-readable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mirage_core::alignment::{error_heatmap, fit_affine_background, HEATMAP_PERCENTILES};
use mirage_core::benchmark::{benchmark_scores, scatter_csv, scatter_export, MetricConfig, NormalizationScope, ScatterRow};
use mirage_core::geometry::{generate_crops, rasterize_roi};
use mirage_core::io::manifest::{save_manifest, SampleRecord, FULL_VIEW};
use mirage_core::io::png16::PngScaling;
use mirage_core::io::results::{load_results, save_results, write_atomic};
use mirage_core::io::{load_depth, load_manifest, save_pfm};
use mirage_core::loss::{manifest_loss, LossConfig};
use mirage_core::metrics::{TOP_DECILE_PCT, TRIM_PCT};
use mirage_core::ordinal::{pairwise_accuracy, DEFAULT_PAIRS, DEFAULT_TAU};
use mirage_core::report::{delta_report, delta_rows, render_table};
use mirage_core::synth::{write_tree, Edit, FixtureSpec, Preset};
use mirage_core::{benchmark::load_view, Error, MaskRaster, Result, RoiShape, TOOLKIT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "mirage", version, about = "Planarity metrics and self-distillation diagnostics for depth maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark tree (manifest plus PFM depth files).
    Synth(SynthArgs),
    /// Regenerate the context-restricted crops of every sample in a manifest.
    Crops(CropsArgs),
    /// Score one model role with DCS/CCS.
    Eval(EvalArgs),
    /// Background affine fit of student to teacher, with error heatmaps.
    Align(AlignArgs),
    /// Pairwise ordinal accuracy of a prediction against ground truth.
    Ordinal(OrdinalArgs),
    /// Itemized self-distillation loss terms for a student/teacher pair.
    Loss(LossArgs),
    /// Relative-change table between two result documents.
    Report(ReportArgs),
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_edit(s: &str) -> std::result::Result<Edit, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn parse_tau(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// planar, bump, crop_only_bump, piecewise_planes or noise.
    #[arg(long, value_parser = parse_preset)]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Student edit: none, flatten_roi, flatten_everywhere, offset_bg[:delta].
    #[arg(long, value_parser = parse_edit, default_value = "none")]
    pub edit: Edit,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 4)]
    pub crops_per_sample: usize,
    #[arg(long, value_parser = parse_fraction, default_value_t = 0.4)]
    pub min_diag_frac: f64,
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 120)]
    pub height: usize,
    #[arg(long)]
    pub roi_radius: Option<f64>,
    #[arg(long)]
    pub roi_hole: bool,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub bump_sigma: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

impl SynthArgs {
    pub fn spec(&self) -> FixtureSpec {
        let d = FixtureSpec::new(self.preset, self.seed);
        FixtureSpec {
            width: self.width,
            height: self.height,
            samples: self.samples,
            crops_per_sample: self.crops_per_sample,
            min_diag_frac: self.min_diag_frac,
            roi_radius: self.roi_radius.unwrap_or(d.roi_radius),
            roi_hole: self.roi_hole,
            bump_amplitude: self.amplitude.unwrap_or(d.bump_amplitude),
            bump_sigma: self.bump_sigma.unwrap_or(d.bump_sigma),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct CropsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..=64))]
    pub per_sample: u64,
    #[arg(long, value_parser = parse_fraction, default_value_t = 0.4)]
    pub min_diag_frac: f64,
    #[arg(long)]
    pub seed: u64,
    /// Where to write the new manifest; defaults to rewriting `--manifest`.
    /// Must sit in the same directory so relative paths stay valid.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    PerView,
    PerRoi,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub role: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Scatter rows as CSV.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Scatter plot as a static SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Where normalization percentiles are estimated.
    #[arg(long, value_enum, default_value_t = Scope::PerView)]
    pub scope: Scope,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub student: String,
    #[arg(long)]
    pub teacher: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one heatmap PFM per sample.
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrdinalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PAIRS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: u64,
    #[arg(long, value_parser = parse_tau, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long)]
    pub seed: u64,
    /// Results document; the summary is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Linear scale for 16-bit PNG inputs.
    #[arg(long)]
    pub png_scale: Option<f64>,
    #[arg(long, requires = "png_scale")]
    pub png_offset: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub student: String,
    #[arg(long)]
    pub teacher: String,
    /// JSON loss configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda_f: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub ring_width: Option<usize>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub alpha3: Option<f64>,
    #[arg(long)]
    pub alpha4: Option<f64>,
    #[arg(long)]
    pub alpha5: Option<f64>,
    #[arg(long)]
    pub alpha6: Option<f64>,
    #[arg(long)]
    pub alpha7: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub ours: PathBuf,
    /// Comma-separated metric keys; defaults to every numeric baseline metric.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Crops(a) => crops(a),
        Command::Eval(a) => eval(a),
        Command::Align(a) => align(a),
        Command::Ordinal(a) => ordinal(a),
        Command::Loss(a) => loss(a),
        Command::Report(a) => report(a),
    }
}

fn document(command: &str, config: Value) -> serde_json::Map<String, Value> {
    let mut doc = serde_json::Map::new();
    doc.insert("command".into(), json!(command));
    doc.insert("toolkit".into(), json!(TOOLKIT_VERSION));
    doc.insert("config".into(), config);
    doc
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let spec = a.spec();
    spec.validate()?;
    let manifest = write_tree(&spec, a.edit, &a.out)?;
    let mut doc = document("synth", json!({"spec": to_value(&spec), "edit": to_value(&a.edit), "out": path_str(&a.out)}));
    doc.insert("manifest".into(), json!("manifest.json"));
    doc.insert("samples".into(), json!(manifest.samples.len()));
    save_results(&Value::Object(doc), &a.out.join("synth.json"))?;
    let crops: usize = manifest.samples.iter().map(|s| s.crops.len()).sum();
    Ok(format!(
        "synth: {} samples, {crops} crops, preset {}, written to {}\n",
        manifest.samples.len(),
        spec.preset.name(),
        a.out.display()
    ))
}

/// Per-sample seed: SplitMix64 of the run seed and the sample index.
fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bounding rectangle of all ROIs of a sample; crops only depend on it.
fn roi_union_box(sample: &SampleRecord) -> Option<Result<RoiShape>> {
    let boxes: Vec<_> = sample.rois.iter().map(RoiShape::bounding_box).collect();
    let first = *boxes.first()?;
    let (x0, y0, x1, y1) = boxes.iter().fold(first, |acc, b| {
        (acc.0.min(b.0), acc.1.min(b.1), acc.2.max(b.2), acc.3.max(b.3))
    });
    Some(RoiShape::rect(x0, y0, x1, y1))
}

pub fn crops(a: &CropsArgs) -> Result<String> {
    let out = a.out.clone().unwrap_or_else(|| a.manifest.clone());
    let dir_of = |p: &Path| -> Result<PathBuf> {
        let abs = std::path::absolute(p).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
        Ok(abs.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    if dir_of(&out)? != dir_of(&a.manifest)? {
        return Err(Error::InvalidArgument(
            "--out must be in the manifest's directory so relative paths stay valid".into(),
        ));
    }
    let mut manifest = load_manifest(&a.manifest)?;
    let (mut generated, mut dropped) = (0usize, 0usize);
    for (i, sample) in manifest.samples.iter_mut().enumerate() {
        let Some(shape) = roi_union_box(sample) else {
            continue;
        };
        let rects = generate_crops(
            &shape?,
            sample.width,
            sample.height,
            a.per_sample as usize,
            a.min_diag_frac,
            sample_seed(a.seed, i),
        )
        .map_err(|e| e.in_unit(&sample.id, 0, "full"))?;
        // Depth files of crops whose rectangle changed are stale.
        for binding in sample.depth.values_mut() {
            let before = binding.crops.len();
            binding.crops.retain(|id, _| {
                let old = sample.crops.iter().find(|c| &c.id == id);
                let new = rects.iter().find(|c| &c.id == id);
                matches!((old, new), (Some(o), Some(n)) if (o.x0, o.y0, o.x1, o.y1) == (n.x0, n.y0, n.x1, n.y1))
            });
            dropped += before - binding.crops.len();
        }
        generated += rects.len();
        sample.crops = rects;
    }
    save_manifest(&manifest, &out)?;
    Ok(format!(
        "crops: {generated} crops over {} samples, {dropped} stale crop bindings removed, written to {}\n",
        manifest.samples.len(),
        out.display()
    ))
}

pub fn eval(a: &EvalArgs) -> Result<String> {
    let config = MetricConfig {
        scope: match a.scope {
            Scope::PerView => NormalizationScope::PerView,
            Scope::PerRoi => NormalizationScope::PerRoi,
        },
        ..Default::default()
    };
    let manifest = load_manifest(&a.manifest)?;
    let scores = benchmark_scores(&manifest, &a.role, &config)?;
    let mut doc = document(
        "eval",
        json!({
            "manifest": path_str(&a.manifest),
            "role": a.role,
            "scope": to_value(&config.scope),
            "lo_pct": config.lo_pct,
            "hi_pct": config.hi_pct,
            "top_decile_pct": TOP_DECILE_PCT,
            "trim_pct": TRIM_PCT,
            "aggregation": "mean over (sample, roi, crop) units",
            "border_excluded_px": 1,
        }),
    );
    doc.insert("aggregate".into(), scores.aggregate.as_ref().map_or(Value::Null, to_value));
    let units: Vec<Value> = scores
        .units
        .iter()
        .map(|u| {
            let mut v = to_value(u);
            v["unit"] = json!(u.unit_id());
            v
        })
        .collect();
    doc.insert("unit_count".into(), json!(units.len()));
    doc.insert("units".into(), Value::Array(units));
    doc.insert("negatives_skipped".into(), json!(scores.negatives_skipped));
    save_results(&Value::Object(doc), &a.out)?;
    let rows = scatter_export(&scores.units);
    if let Some(path) = &a.scatter {
        write_atomic(path, scatter_csv(&rows).as_bytes())?;
    }
    if let Some(path) = &a.svg {
        write_atomic(path, scatter_svg(&rows).as_bytes())?;
    }
    let mut summary = format!("eval: role {}, {} units\n", a.role, scores.units.len());
    if let Some(agg) = scores.aggregate {
        let _ = writeln!(summary, "  DCS {:.6e} (d_cluster {:.6e}, d_avg {:.6e})", agg.dcs, agg.d_cluster, agg.d_avg);
        let _ = writeln!(summary, "  CCS {:.6e} (D_cluster {:.6e}, D_avg {:.6e})", agg.ccs, agg.c_cluster, agg.c_avg);
    }
    Ok(summary)
}

/// `t_crop` against `t_full` with the diagonal drawn in.
pub fn scatter_svg(rows: &[ScatterRow]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let max = rows
        .iter()
        .flat_map(|r| [r.t_full, r.t_crop])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let max = if max > 0.0 { max } else { 1.0 };
    let span = SIZE - 2.0 * PAD;
    let px = |v: f64| PAD + v / max * span;
    let py = |v: f64| SIZE - PAD - v / max * span;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{PAD}\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>",
        SIZE - PAD,
        SIZE - PAD
    );
    let _ = writeln!(
        svg,
        "<polyline points=\"{PAD},{PAD} {PAD},{b} {b},{b}\" fill=\"none\" stroke=\"black\"/>",
        b = SIZE - PAD
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">t_full</text>", SIZE / 2.0, SIZE - 10.0);
    let _ = writeln!(
        svg,
        "<text x=\"12\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {})\">t_crop</text>",
        SIZE / 2.0,
        SIZE / 2.0
    );
    for r in rows.iter().filter(|r| r.t_full.is_finite() && r.t_crop.is_finite()) {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#c33\"><title>{}</title></circle>",
            px(r.t_full),
            py(r.t_crop),
            r.unit
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn roi_union(sample: &SampleRecord) -> Result<MaskRaster> {
    let mut mask = MaskRaster::empty(sample.width, sample.height);
    for shape in &sample.rois {
        mask = mask.or(&rasterize_roi(shape, sample.width, sample.height)?);
    }
    Ok(mask)
}

pub fn align(a: &AlignArgs) -> Result<String> {
    let manifest = load_manifest(&a.manifest)?;
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for sample in &manifest.samples {
        let student = load_view(&manifest, sample, &a.student, FULL_VIEW)?;
        let teacher = load_view(&manifest, sample, &a.teacher, FULL_VIEW)?;
        let tag = |e: Error| e.in_unit(&sample.id, 0, FULL_VIEW);
        let background = roi_union(sample).map_err(tag)?.not();
        let fit = match fit_affine_background(&student, &teacher, &background) {
            Ok(fit) => fit,
            // Reported per sample rather than aborting the batch.
            Err(e @ Error::DegenerateFit(_)) => {
                skipped.push(json!({"sample": sample.id, "category": e.category(), "message": e.to_string()}));
                continue;
            }
            Err(e) => return Err(tag(e)),
        };
        if let Some(dir) = &a.heatmaps {
            let heat = error_heatmap(&student, &teacher, &fit, HEATMAP_PERCENTILES).map_err(tag)?;
            save_pfm(&heat, &dir.join(format!("{}.pfm", sample.id)))?;
        }
        fits.push(json!({"sample": sample.id, "a": fit.a, "b": fit.b, "r2_percent": fit.r2_percent(), "n": fit.n}));
    }
    let n = fits.len() as f64;
    let summary = if fits.is_empty() {
        Value::Null
    } else {
        let mean = |k: &str| fits.iter().map(|f| f[k].as_f64().unwrap_or(f64::NAN)).sum::<f64>() / n;
        let mean_a = mean("a");
        json!({"count": fits.len(), "mean_a": mean_a, "slope_bias": (1.0 - mean_a).abs(), "mean_r2_percent": mean("r2_percent")})
    };
    let mut doc = document(
        "align",
        json!({
            "manifest": path_str(&a.manifest),
            "student": a.student,
            "teacher": a.teacher,
            "background": "complement of the ROI union",
            "heatmap_percentiles": [HEATMAP_PERCENTILES.0, HEATMAP_PERCENTILES.1],
            "heatmaps": a.heatmaps.as_deref().map(path_str),
        }),
    );
    doc.insert("samples".into(), Value::Array(fits.clone()));
    doc.insert("skipped".into(), Value::Array(skipped.clone()));
    doc.insert("summary".into(), summary.clone());
    save_results(&Value::Object(doc), &a.out)?;
    let mut text = format!("align: {} samples fitted, {} degenerate\n", fits.len(), skipped.len());
    if !summary.is_null() {
        let _ = writeln!(
            text,
            "  mean a {:.6}, slope bias {:.6}, mean R² {:.2}%",
            summary["mean_a"].as_f64().unwrap_or(f64::NAN),
            summary["slope_bias"].as_f64().unwrap_or(f64::NAN),
            summary["mean_r2_percent"].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(text)
}

pub fn ordinal(a: &OrdinalArgs) -> Result<String> {
    let png = a.png_scale.map(|scale| PngScaling { scale, offset: a.png_offset.unwrap_or(0.0) });
    let gt = load_depth(&a.gt, png)?;
    let pred = load_depth(&a.pred, png)?;
    let r = pairwise_accuracy(&gt, &pred, a.pairs as usize, a.tau, a.seed)?;
    if let Some(out) = &a.out {
        let mut doc = document(
            "ordinal",
            json!({
                "gt": path_str(&a.gt),
                "pred": path_str(&a.pred),
                "pairs": a.pairs,
                "tau": a.tau,
                "seed": a.seed,
                "png_scale": a.png_scale,
                "png_offset": a.png_offset,
                "prediction_ties": "incorrect",
            }),
        );
        doc.insert("accuracy".into(), json!(r.accuracy));
        doc.insert("pairs_retained".into(), json!(r.pairs_retained));
        doc.insert("tau".into(), json!(r.tau));
        doc.insert("seed".into(), json!(r.seed));
        save_results(&Value::Object(doc), out)?;
    }
    Ok(format!(
        "ordinal: accuracy {:.6} over {} of {} sampled pairs (tau {}, seed {})\n",
        r.accuracy, r.pairs_retained, r.pairs_requested, r.tau, r.seed
    ))
}

impl LossArgs {
    pub fn config(&self) -> Result<LossConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
                LossConfig::from_json(&text)?
            }
            None => LossConfig::default(),
        };
        let overrides = [
            (self.alpha1, &mut cfg.alpha1),
            (self.alpha2, &mut cfg.alpha2),
            (self.alpha3, &mut cfg.alpha3),
            (self.alpha4, &mut cfg.alpha4),
            (self.alpha5, &mut cfg.alpha5),
            (self.alpha6, &mut cfg.alpha6),
            (self.alpha7, &mut cfg.alpha7),
            (self.lambda_f, &mut cfg.lambda_f),
        ];
        for (value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(w) = self.ring_width {
            cfg.ring_width = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn loss(a: &LossArgs) -> Result<String> {
    let cfg = a.config()?;
    let manifest = load_manifest(&a.manifest)?;
    let report = manifest_loss(&manifest, &a.student, &a.teacher, &cfg)?;
    let mut doc = document(
        "loss",
        json!({
            "manifest": path_str(&a.manifest),
            "student": a.student,
            "teacher": a.teacher,
            "loss": to_value(&cfg),
        }),
    );
    let units: Vec<Value> = report
        .units
        .iter()
        .map(|u| {
            let mut v = to_value(u);
            v["unit"] = json!(u.unit_id());
            v
        })
        .collect();
    doc.insert("units".into(), Value::Array(units));
    doc.insert("skipped".into(), to_value(&report.skipped));
    doc.insert("means".into(), to_value(&report.means));
    save_results(&Value::Object(doc), &a.out)?;
    let mut text = format!("loss: {} units, {} skipped\n", report.units.len(), report.skipped.len());
    for key in ["total", "full.hkr", "full.nkp", "full.gating_reg", "crop.hkr", "crop.nkp"] {
        if let Some(v) = report.means.get(key) {
            let _ = writeln!(text, "  {key:<16} {v:.6e}");
        }
    }
    Ok(text)
}

pub fn report(a: &ReportArgs) -> Result<String> {
    let baseline = load_results(&a.baseline)?;
    let ours = load_results(&a.ours)?;
    let rows = if a.metrics.is_empty() {
        delta_report(&baseline, &ours)?
    } else {
        let keys: Vec<&str> = a.metrics.iter().map(String::as_str).collect();
        delta_rows(&baseline, &ours, &keys)?
    };
    if let Some(out) = &a.out {
        let mut doc = document(
            "report",
            json!({
                "baseline": path_str(&a.baseline),
                "ours": path_str(&a.ours),
                "metrics": a.metrics,
                "delta": "(ours - baseline) / baseline * 100",
            }),
        );
        doc.insert("rows".into(), to_value(&rows));
        save_results(&Value::Object(doc), out)?;
    }
    Ok(render_table(&rows))
}
