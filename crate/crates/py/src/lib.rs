//! Python bindings: depth maps, ROI geometry, the planarity metrics, ordinal
//! accuracy, background alignment, the self-distillation loss and fixture
//! generation. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use mirage_core::alignment;
use mirage_core::benchmark::{self, MetricConfig, NormalizationScope};
use mirage_core::geometry;
use mirage_core::io;
use mirage_core::loss::{manifest_loss, LossConfig};
use mirage_core::ordinal;
use mirage_core::report;
use mirage_core::synth::{self, Edit, FixtureSpec, Preset};
use mirage_core::Error;

fn py_err(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.category());
    match e {
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// Serializable value to Python objects through the json module.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scope(name: &str) -> PyResult<NormalizationScope> {
    match name {
        "per_view" | "per-view" => Ok(NormalizationScope::PerView),
        "per_roi" | "per-roi" => Ok(NormalizationScope::PerRoi),
        other => Err(PyValueError::new_err(format!("unknown scope {other:?}"))),
    }
}

/// Dense depth map; NaN marks invalid pixels.
#[pyclass(name = "DepthMap", module = "mirage_py", frozen)]
struct PyDepthMap(mirage_core::DepthMap);

#[pymethods]
impl PyDepthMap {
    #[new]
    fn new(width: usize, height: usize, values: Vec<f64>) -> PyResult<Self> {
        mirage_core::DepthMap::new(width, height, values).map(Self).map_err(py_err)
    }

    /// Loads a PFM file, or a 16-bit PNG when `png_scale` is given.
    #[staticmethod]
    #[pyo3(signature = (path, png_scale=None, png_offset=0.0))]
    fn load(path: PathBuf, png_scale: Option<f64>, png_offset: f64) -> PyResult<Self> {
        let png = png_scale.map(|scale| io::PngScaling { scale, offset: png_offset });
        io::load_depth(&path, png).map(Self).map_err(py_err)
    }

    fn save_pfm(&self, path: PathBuf) -> PyResult<()> {
        io::save_pfm(&self.0, &path).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("DepthMap({}x{}, {} valid)", self.0.width(), self.0.height(), self.0.valid_count())
    }
}

/// Outer polygon with optional exclusion polygons, in pixel-center coordinates.
#[pyclass(name = "RoiShape", module = "mirage_py", frozen)]
struct PyRoiShape(mirage_core::RoiShape);

#[pymethods]
impl PyRoiShape {
    #[new]
    #[pyo3(signature = (outer, exclusions=Vec::new()))]
    fn new(outer: Vec<[f64; 2]>, exclusions: Vec<Vec<[f64; 2]>>) -> PyResult<Self> {
        mirage_core::RoiShape::new(outer, exclusions).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> PyResult<Self> {
        mirage_core::RoiShape::rect(x0, y0, x1, y1).map(Self).map_err(py_err)
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.0.bounding_box()
    }

    fn area(&self) -> f64 {
        geometry::polygon_area(&self.0)
    }

    /// Row-major membership of every pixel of a `width×height` frame.
    fn rasterize(&self, width: usize, height: usize) -> PyResult<Vec<bool>> {
        Ok(geometry::rasterize_roi(&self.0, width, height).map_err(py_err)?.bits().to_vec())
    }
}

fn mask(width: usize, height: usize, bits: Vec<bool>) -> PyResult<mirage_core::MaskRaster> {
    mirage_core::MaskRaster::from_bits(width, height, bits).map_err(py_err)
}

/// Crop rectangles `(id, x0, y0, x1, y1, seed)` around `shape`.
#[pyfunction]
#[pyo3(signature = (shape, width, height, count=4, min_diag_frac=0.4, seed=0))]
fn generate_crops(
    shape: &PyRoiShape,
    width: usize,
    height: usize,
    count: usize,
    min_diag_frac: f64,
    seed: u64,
) -> PyResult<Vec<(String, usize, usize, usize, usize, u64)>> {
    let crops = geometry::generate_crops(&shape.0, width, height, count, min_diag_frac, seed).map_err(py_err)?;
    Ok(crops.into_iter().map(|c| (c.id, c.x0, c.y0, c.x1, c.y1, c.seed)).collect())
}

/// Composite scores of one full view against a crop view placed in the
/// full frame, over the ROI given as row-major membership.
#[pyfunction]
#[pyo3(signature = (full, crop_in_full, roi, scope_name="per_view"))]
fn evaluate_pair<'py>(
    py: Python<'py>,
    full: &PyDepthMap,
    crop_in_full: &PyDepthMap,
    roi: Vec<bool>,
    scope_name: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let roi = mask(full.0.width(), full.0.height(), roi)?;
    let cfg = MetricConfig { scope: scope(scope_name)?, ..Default::default() };
    let (_, scores) = benchmark::evaluate_pair(&full.0, &crop_in_full.0, &roi, &cfg).map_err(py_err)?;
    to_py(py, &scores)
}

/// Aggregate and per-unit scores for one depth role of a manifest.
#[pyfunction]
#[pyo3(signature = (manifest, role, scope_name="per_view"))]
fn benchmark_scores<'py>(py: Python<'py>, manifest: PathBuf, role: &str, scope_name: &str) -> PyResult<Bound<'py, PyDict>> {
    let m = io::load_manifest(&manifest).map_err(py_err)?;
    let cfg = MetricConfig { scope: scope(scope_name)?, ..Default::default() };
    let s = benchmark::benchmark_scores(&m, role, &cfg).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("aggregate", to_py(py, &s.aggregate)?)?;
    out.set_item("units", to_py(py, &s.units)?)?;
    out.set_item("negatives_skipped", s.negatives_skipped)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (gt, pred, pairs=ordinal::DEFAULT_PAIRS, tau=ordinal::DEFAULT_TAU, seed=0))]
fn pairwise_accuracy<'py>(
    py: Python<'py>,
    gt: &PyDepthMap,
    pred: &PyDepthMap,
    pairs: usize,
    tau: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = ordinal::pairwise_accuracy(&gt.0, &pred.0, pairs, tau, seed).map_err(py_err)?;
    to_py(py, &r)
}

/// Least-squares `teacher ≈ a·student + b` over the background pixels;
/// returns `(a, b, r2)`.
#[pyfunction]
fn fit_affine_background(student: &PyDepthMap, teacher: &PyDepthMap, background: Vec<bool>) -> PyResult<(f64, f64, f64)> {
    let bg = mask(student.0.width(), student.0.height(), background)?;
    let fit = alignment::fit_affine_background(&student.0, &teacher.0, &bg).map_err(py_err)?;
    Ok((fit.a, fit.b, fit.r2))
}

/// Loss report for a manifest; `config` is a JSON object of overrides.
#[pyfunction]
#[pyo3(signature = (manifest, student, teacher, config=None))]
fn loss_report<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    student: &str,
    teacher: &str,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = match config {
        Some(text) => LossConfig::from_json(text).map_err(py_err)?,
        None => LossConfig::default(),
    };
    let m = io::load_manifest(&manifest).map_err(py_err)?;
    let r = manifest_loss(&m, student, teacher, &cfg).map_err(py_err)?;
    to_py(py, &r)
}

/// Writes a fixture tree and returns the number of samples.
#[pyfunction]
#[pyo3(signature = (preset, out, seed=0, edit="none", samples=None))]
fn write_fixtures(preset: &str, out: PathBuf, seed: u64, edit: &str, samples: Option<usize>) -> PyResult<usize> {
    let preset: Preset = preset.parse().map_err(py_err)?;
    let edit: Edit = edit.parse().map_err(py_err)?;
    let mut spec = FixtureSpec::new(preset, seed);
    if let Some(n) = samples {
        spec.samples = n;
    }
    let m = synth::write_tree(&spec, edit, &out).map_err(py_err)?;
    Ok(m.samples.len())
}

/// `(ours − baseline)/baseline·100`.
#[pyfunction]
fn delta_pct(baseline: f64, ours: f64) -> PyResult<f64> {
    report::delta_pct(baseline, ours).map_err(py_err)
}

#[pymodule]
fn mirage_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDepthMap>()?;
    m.add_class::<PyRoiShape>()?;
    m.add_function(wrap_pyfunction!(generate_crops, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_scores, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(fit_affine_background, m)?)?;
    m.add_function(wrap_pyfunction!(loss_report, m)?)?;
    m.add_function(wrap_pyfunction!(write_fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(delta_pct, m)?)?;
    Ok(())
}
