//! Benchmark manifest: a JSON document binding samples, ROIs, crops and the
//! depth files each model role produced for every view.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{roi_covers_pixel, CropRect, RoiShape, Vertex};
use crate::io::png16::PngScaling;
use crate::io::results::write_atomic;

pub const MANIFEST_VERSION: u32 = 1;

/// View key of the uncropped image in depth bindings.
pub const FULL_VIEW: &str = "full";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: u32,
    samples: Vec<RawSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    width: usize,
    height: usize,
    #[serde(default)]
    rois: Vec<RawRoi>,
    #[serde(default)]
    crops: Vec<RawCrop>,
    #[serde(default)]
    depth: BTreeMap<String, RawBinding>,
    #[serde(default)]
    negative: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoi {
    polygon: Vec<Vertex>,
    #[serde(default)]
    exclusions: Vec<Vec<Vertex>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrop {
    id: String,
    rect: [usize; 4],
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBinding {
    full: String,
    #[serde(default)]
    crops: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_offset: Option<f64>,
}

/// Depth files one model role produced for a sample, manifest-relative.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBinding {
    pub full: String,
    pub crops: BTreeMap<String, String>,
    pub png: Option<PngScaling>,
}

impl DepthBinding {
    pub fn new(full: impl Into<String>) -> Self {
        Self {
            full: full.into(),
            crops: BTreeMap::new(),
            png: None,
        }
    }

    /// Relative path for a view: [`FULL_VIEW`] or a crop id.
    pub fn view(&self, view: &str) -> Option<&str> {
        if view == FULL_VIEW {
            Some(&self.full)
        } else {
            self.crops.get(view).map(String::as_str)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rois: Vec<RoiShape>,
    pub crops: Vec<CropRect>,
    /// Role name (e.g. "student", "teacher") to its depth files.
    pub depth: BTreeMap<String, DepthBinding>,
    pub negative: bool,
}

impl SampleRecord {
    pub fn binding(&self, role: &str) -> Result<&DepthBinding> {
        self.depth.get(role).ok_or_else(|| Error::MissingBinding {
            sample: self.id.clone(),
            role: role.to_string(),
            view: FULL_VIEW.to_string(),
        })
    }

    pub fn view_path(&self, role: &str, view: &str) -> Result<&str> {
        self.binding(role)?
            .view(view)
            .ok_or_else(|| Error::MissingBinding {
                sample: self.id.clone(),
                role: role.to_string(),
                view: view.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub version: u32,
    pub samples: Vec<SampleRecord>,
    /// Directory that relative paths resolve against.
    pub root: PathBuf,
}

impl BenchmarkManifest {
    pub fn new(samples: Vec<SampleRecord>, root: impl Into<PathBuf>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            samples,
            root: root.into(),
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn sample(&self, id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.id == id)
    }

    fn to_raw(&self) -> RawManifest {
        RawManifest {
            version: self.version,
            samples: self.samples.iter().map(sample_to_raw).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_raw()).expect("manifest serializes")
    }
}

fn sample_to_raw(s: &SampleRecord) -> RawSample {
    RawSample {
        id: s.id.clone(),
        width: s.width,
        height: s.height,
        rois: s
            .rois
            .iter()
            .map(|r| RawRoi {
                polygon: r.outer().to_vec(),
                exclusions: r.exclusions().to_vec(),
            })
            .collect(),
        crops: s
            .crops
            .iter()
            .map(|c| RawCrop {
                id: c.id.clone(),
                rect: [c.x0, c.y0, c.x1, c.y1],
                seed: c.seed,
            })
            .collect(),
        depth: s
            .depth
            .iter()
            .map(|(role, b)| {
                (
                    role.clone(),
                    RawBinding {
                        full: b.full.clone(),
                        crops: b.crops.clone(),
                        png_scale: b.png.map(|p| p.scale),
                        png_offset: b.png.map(|p| p.offset),
                    },
                )
            })
            .collect(),
        negative: s.negative,
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn check_relative(path: &str, field: &str) -> Result<()> {
    if path.is_empty() {
        return Err(schema(field, "path is empty"));
    }
    if Path::new(path).is_absolute() {
        return Err(schema(field, format!("path {path:?} must be relative to the manifest")));
    }
    Ok(())
}

fn validate_sample(raw: RawSample, at: &str) -> Result<SampleRecord> {
    if raw.id.is_empty() {
        return Err(schema(format!("{at}.id"), "sample id is empty"));
    }
    if raw.width == 0 || raw.height == 0 {
        return Err(schema(format!("{at}.width"), "frame dimensions must be positive"));
    }
    let mut rois = Vec::with_capacity(raw.rois.len());
    for (j, roi) in raw.rois.into_iter().enumerate() {
        let field = format!("{at}.rois[{j}]");
        let shape = RoiShape::new(roi.polygon, roi.exclusions)
            .map_err(|e| schema(field.clone(), e.to_string()))?;
        if !roi_covers_pixel(&shape, raw.width, raw.height) {
            return Err(schema(field, Error::EmptyMask.to_string()));
        }
        rois.push(shape);
    }
    if rois.is_empty() && !raw.negative {
        return Err(schema(format!("{at}.rois"), "positive sample needs at least one ROI"));
    }
    let mut crops = Vec::with_capacity(raw.crops.len());
    let mut crop_ids = BTreeSet::new();
    for (j, c) in raw.crops.into_iter().enumerate() {
        let field = format!("{at}.crops[{j}]");
        if c.id.is_empty() || c.id == FULL_VIEW {
            return Err(schema(format!("{field}.id"), format!("invalid crop id {:?}", c.id)));
        }
        if !crop_ids.insert(c.id.clone()) {
            return Err(schema(format!("{field}.id"), format!("duplicate crop id {:?}", c.id)));
        }
        let [x0, y0, x1, y1] = c.rect;
        let rect = CropRect::new(c.id, x0, y0, x1, y1, c.seed);
        rect.validate(raw.width, raw.height)
            .map_err(|e| schema(format!("{field}.rect"), e.to_string()))?;
        crops.push(rect);
    }
    let mut depth = BTreeMap::new();
    for (role, b) in raw.depth {
        let field = format!("{at}.depth.{role}");
        if role.is_empty() {
            return Err(schema(field, "role name is empty"));
        }
        check_relative(&b.full, &format!("{field}.full"))?;
        for (crop_id, path) in &b.crops {
            if !crop_ids.contains(crop_id) {
                return Err(Error::DanglingCropRef(raw.id.clone(), crop_id.clone()));
            }
            check_relative(path, &format!("{field}.crops.{crop_id}"))?;
        }
        let png = match (b.png_scale, b.png_offset) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(schema(format!("{field}.png_offset"), "png_offset requires png_scale"))
            }
            (Some(scale), offset) => {
                let offset = offset.unwrap_or(0.0);
                if !scale.is_finite() || scale == 0.0 {
                    return Err(schema(format!("{field}.png_scale"), "must be finite and non-zero"));
                }
                if !offset.is_finite() {
                    return Err(schema(format!("{field}.png_offset"), "must be finite"));
                }
                Some(PngScaling { scale, offset })
            }
        };
        depth.insert(
            role,
            DepthBinding {
                full: b.full,
                crops: b.crops,
                png,
            },
        );
    }
    Ok(SampleRecord {
        id: raw.id,
        width: raw.width,
        height: raw.height,
        rois,
        crops,
        depth,
        negative: raw.negative,
    })
}

/// Parses and fully validates a manifest document. `root` is the directory
/// relative paths resolve against.
pub fn parse_manifest(text: &str, root: impl Into<PathBuf>) -> Result<BenchmarkManifest> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawManifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { "$".to_string() } else { path }, e.inner().to_string())
    })?;
    if raw.version != MANIFEST_VERSION {
        return Err(schema(
            "version",
            format!("unsupported version {}, expected {MANIFEST_VERSION}", raw.version),
        ));
    }
    let mut seen = BTreeSet::new();
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, s) in raw.samples.into_iter().enumerate() {
        if !seen.insert(s.id.clone()) {
            return Err(Error::DuplicateSampleId(s.id));
        }
        samples.push(validate_sample(s, &format!("samples[{i}]"))?);
    }
    Ok(BenchmarkManifest {
        version: raw.version,
        samples,
        root: root.into(),
    })
}

pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    parse_manifest(&text, root)
}

pub fn save_manifest(manifest: &BenchmarkManifest, path: &Path) -> Result<()> {
    let text = crate::io::results::to_canonical_string(&manifest.to_json());
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> serde_json::Value {
        json!({
            "version": 1,
            "samples": [{
                "id": "s0001",
                "width": 16,
                "height": 12,
                "rois": [{"polygon": [[2, 2], [10, 2], [10, 9], [2, 9]],
                          "exclusions": [[[4, 4], [6, 4], [6, 6]]]}],
                "crops": [{"id": "c0", "rect": [1, 1, 13, 11], "seed": 7}],
                "depth": {"model": {"full": "d/full.pfm", "crops": {"c0": "d/c0.pfm"}}}
            }]
        })
    }

    #[test]
    fn minimal_manifest_parses_field_for_field() {
        let m = parse_manifest(&minimal().to_string(), "/tmp/x").unwrap();
        assert_eq!(m.samples.len(), 1);
        let s = &m.samples[0];
        assert_eq!((s.id.as_str(), s.width, s.height, s.negative), ("s0001", 16, 12, false));
        assert_eq!(s.rois[0].outer()[1], [10.0, 2.0]);
        assert_eq!(s.rois[0].exclusions().len(), 1);
        assert_eq!(s.crops[0], CropRect::new("c0", 1, 1, 13, 11, 7));
        assert_eq!(s.view_path("model", "c0").unwrap(), "d/c0.pfm");
        assert_eq!(m.resolve(s.view_path("model", FULL_VIEW).unwrap()), Path::new("/tmp/x/d/full.pfm"));
    }

    #[test]
    fn dangling_crop_reference() {
        let mut doc = minimal();
        doc["samples"][0]["depth"]["model"]["crops"]["c9"] = json!("d/c9.pfm");
        match parse_manifest(&doc.to_string(), ".") {
            Err(Error::DanglingCropRef(s, c)) => assert_eq!((s.as_str(), c.as_str()), ("s0001", "c9")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids() {
        let mut doc = minimal();
        let sample = doc["samples"][0].clone();
        doc["samples"].as_array_mut().unwrap().push(sample);
        assert!(matches!(
            parse_manifest(&doc.to_string(), "."),
            Err(Error::DuplicateSampleId(id)) if id == "s0001"
        ));
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let mut doc = minimal();
        doc["samples"][0]["width"] = json!("wide");
        match parse_manifest(&doc.to_string(), ".") {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "samples[0].width"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = parse_manifest(&minimal().to_string(), dir.path()).unwrap();
        save_manifest(&m, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back, m);
        save_manifest(&back, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }
}
