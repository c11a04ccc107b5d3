use std::time::{Duration, Instant};

use mirage_core::io::manifest::{parse_manifest, save_manifest};
use mirage_core::io::load_manifest;
use mirage_core::synth::{plan_manifest, FixtureSpec, Preset};
use mirage_core::Error;
use serde_json::{json, Value};

fn valid() -> Value {
    json!({
        "version": 1,
        "samples": [
            {
                "id": "s0001",
                "width": 32,
                "height": 24,
                "rois": [{
                    "polygon": [[4.0, 4.0], [20.0, 4.0], [20.0, 18.0], [4.0, 18.0]],
                    "exclusions": [[[8.0, 8.0], [12.0, 8.0], [10.0, 12.0]]]
                }],
                "crops": [
                    {"id": "c0", "rect": [2, 2, 22, 20], "seed": 7},
                    {"id": "c1", "rect": [0, 0, 32, 24], "seed": 7}
                ],
                "depth": {
                    "student": {"full": "s0001/student.pfm", "crops": {"c0": "s0001/student_c0.pfm"}},
                    "teacher": {
                        "full": "s0001/teacher.png",
                        "crops": {"c1": "s0001/teacher_c1.png"},
                        "png_scale": 0.001,
                        "png_offset": 0.0
                    }
                },
                "negative": false
            },
            {"id": "n0001", "width": 16, "height": 16, "negative": true}
        ]
    })
}

/// Keys whose absence leaves a manifest valid.
const OPTIONAL: [&str; 6] = ["exclusions", "crops", "depth", "negative", "png_scale", "png_offset"];

fn leaf_mutations(path: &str, v: &Value) -> Vec<Value> {
    // Real-valued fields accept any finite number, so only their type can be broken.
    let real = path.contains("/polygon/") || path.contains("/exclusions/") || path.contains("/png_");
    match v {
        Value::String(_) => vec![json!(7), Value::Null],
        Value::Number(_) if path.ends_with("/png_offset") => vec![json!("x")],
        Value::Number(_) if real => vec![json!("x"), Value::Null],
        Value::Number(_) => vec![json!("x"), Value::Null, json!(-1), json!(1.5)],
        Value::Bool(_) => vec![json!("yes"), json!(1)],
        Value::Array(_) => vec![json!({}), json!("x")],
        Value::Object(_) => vec![json!([]), json!(3)],
        Value::Null => vec![],
    }
}

/// Every single-field corruption of `doc`, labelled by JSON pointer.
fn corruptions(doc: &Value) -> Vec<(String, Value)> {
    fn walk(root: &Value, node: &Value, path: String, out: &mut Vec<(String, Value)>) {
        let replace = |with: Value| {
            let mut d = root.clone();
            *d.pointer_mut(&path).unwrap() = with;
            d
        };
        if !path.is_empty() {
            for m in leaf_mutations(&path, node) {
                out.push((format!("{path} <- {m}"), replace(m)));
            }
        }
        match node {
            Value::Object(map) => {
                let mut d = root.clone();
                d.pointer_mut(&path).unwrap().as_object_mut().unwrap().insert("bogus".into(), json!(1));
                out.push((format!("{path}/bogus added"), d));
                for (k, child) in map {
                    let child_path = format!("{path}/{k}");
                    let in_binding_map = path.ends_with("/depth") || path.ends_with("/crops") && map.values().all(Value::is_string);
                    if !OPTIONAL.contains(&k.as_str()) && !in_binding_map {
                        let mut d = root.clone();
                        d.pointer_mut(&path).unwrap().as_object_mut().unwrap().remove(k);
                        out.push((format!("{child_path} removed"), d));
                    }
                    walk(root, child, child_path, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(root, child, format!("{path}/{i}"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(doc, doc, String::new(), &mut out);
    out
}

fn semantic_corruptions() -> Vec<(&'static str, Value)> {
    let mut out = Vec::new();
    let mut push = |label, f: &dyn Fn(&mut Value)| {
        let mut d = valid();
        f(&mut d);
        out.push((label, d));
    };
    push("version 2", &|d| d["version"] = json!(2));
    push("duplicate sample id", &|d| d["samples"][1]["id"] = json!("s0001"));
    push("empty sample id", &|d| d["samples"][0]["id"] = json!(""));
    push("zero width", &|d| d["samples"][0]["width"] = json!(0));
    push("positive without ROI", &|d| d["samples"][0]["rois"] = json!([]));
    push("two-vertex polygon", &|d| d["samples"][0]["rois"][0]["polygon"] = json!([[0.0, 0.0], [4.0, 4.0]]));
    push("ROI outside frame", &|d| {
        d["samples"][0]["rois"][0]["polygon"] = json!([[100.0, 100.0], [120.0, 100.0], [120.0, 120.0]])
    });
    push("exclusion outside bbox", &|d| {
        d["samples"][0]["rois"][0]["exclusions"][0][0] = json!([30.0, 22.0])
    });
    push("crop past the frame", &|d| d["samples"][0]["crops"][0]["rect"] = json!([2, 2, 40, 20]));
    push("empty crop", &|d| d["samples"][0]["crops"][0]["rect"] = json!([5, 2, 5, 20]));
    push("crop rect of 3", &|d| d["samples"][0]["crops"][0]["rect"] = json!([2, 2, 20]));
    push("duplicate crop id", &|d| d["samples"][0]["crops"][1]["id"] = json!("c0"));
    push("crop named full", &|d| d["samples"][0]["crops"][1]["id"] = json!("full"));
    push("dangling crop ref", &|d| {
        d["samples"][0]["depth"]["student"]["crops"]["c9"] = json!("s0001/student_c9.pfm")
    });
    push("absolute path", &|d| d["samples"][0]["depth"]["student"]["full"] = json!("/tmp/x.pfm"));
    push("empty path", &|d| d["samples"][0]["depth"]["student"]["full"] = json!(""));
    push("empty role", &|d| {
        let b = d["samples"][0]["depth"]["student"].take();
        d["samples"][0]["depth"][""] = b;
    });
    push("offset without scale", &|d| {
        d["samples"][0]["depth"]["teacher"].as_object_mut().unwrap().remove("png_scale");
    });
    push("zero png scale", &|d| d["samples"][0]["depth"]["teacher"]["png_scale"] = json!(0.0));
    out
}

#[test]
fn the_base_document_is_valid() {
    let m = parse_manifest(&valid().to_string(), "/data").unwrap();
    assert_eq!(m.samples.len(), 2);
    assert_eq!(m.samples[0].crops[0].seed, 7);
    assert_eq!(m.samples[0].depth["teacher"].png.unwrap().scale, 0.001);
    assert!(m.samples[1].negative && m.samples[1].rois.is_empty());
    let again = parse_manifest(&m.to_json().to_string(), "/data").unwrap();
    assert_eq!(again, m);
}

#[test]
fn every_single_field_corruption_is_rejected() {
    let base = valid();
    let structural = corruptions(&base);
    assert!(structural.len() > 150, "{}", structural.len());
    let mut accepted = Vec::new();
    for (label, doc) in &structural {
        if parse_manifest(&doc.to_string(), "/data").is_ok() {
            accepted.push(label.clone());
        }
    }
    assert!(accepted.is_empty(), "accepted corruptions: {accepted:#?}");
    for (label, doc) in semantic_corruptions() {
        let err = parse_manifest(&doc.to_string(), "/data").expect_err(label);
        assert!(
            matches!(err, Error::Schema { .. } | Error::DuplicateSampleId(_) | Error::DanglingCropRef(..)),
            "{label}: {err:?}"
        );
    }
}

#[test]
fn dangling_crop_reference_names_sample_and_crop() {
    let mut d = valid();
    d["samples"][0]["depth"]["student"]["crops"]["c9"] = json!("s0001/student_c9.pfm");
    match parse_manifest(&d.to_string(), "/data") {
        Err(Error::DanglingCropRef(s, c)) => assert_eq!((s.as_str(), c.as_str()), ("s0001", "c9")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn full_size_manifest_parses_quickly_and_round_trips() {
    let spec = FixtureSpec { samples: 1872, ..FixtureSpec::new(Preset::Planar, 3) };
    let dir = tempfile::tempdir().unwrap();
    let planned = plan_manifest(&spec, dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    save_manifest(&planned, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let mut best = Duration::MAX;
    let mut parsed = None;
    for _ in 0..3 {
        let t = Instant::now();
        let m = parse_manifest(&text, dir.path()).unwrap();
        best = best.min(t.elapsed());
        parsed = Some(m);
    }
    let parsed = parsed.unwrap();
    assert_eq!(parsed.samples.len(), 1872);
    assert!(best < Duration::from_millis(100), "parse took {best:?}");

    assert_eq!(parsed, planned);
    let again = dir.path().join("again.json");
    save_manifest(&load_manifest(&path).unwrap(), &again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&path).unwrap());
}
