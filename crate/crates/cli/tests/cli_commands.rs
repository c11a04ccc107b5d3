use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mirage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirage")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mirage(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, preset: &str, extra: &[&str]) -> std::path::PathBuf {
    let mut args = vec!["synth", "--preset", preset, "--out", p(dir), "--seed", "3", "--samples", "4"];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("manifest.json")
}

#[test]
fn eval_on_planar_fixture_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "planar", &[]);
    let out = dir.path().join("eval.json");
    let text = ok(&["eval", "--manifest", p(&m), "--role", "teacher", "--out", p(&out)]);
    assert!(text.starts_with("eval:"), "{text}");
    let doc = json(&out);
    assert_eq!(doc["command"], "eval");
    assert_eq!(doc["aggregate"]["dcs"].as_f64(), Some(0.0));
    assert_eq!(doc["units"].as_array().unwrap().len(), doc["unit_count"].as_u64().unwrap() as usize);
}

#[test]
fn scatter_and_svg_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "crop_only_bump", &[]);
    let (out, csv, svg) = (dir.path().join("e.json"), dir.path().join("s.csv"), dir.path().join("s.svg"));
    ok(&["eval", "--manifest", p(&m), "--role", "teacher", "--out", p(&out), "--scatter", p(&csv), "--svg", p(&svg)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("unit,t_full,t_crop,m_full,m_crop"));
    assert_eq!(text.lines().count() - 1, json(&out)["unit_count"].as_u64().unwrap() as usize);
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn crops_are_deterministic_and_drop_stale_bindings() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "bump", &[]);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        ok(&["crops", "--manifest", p(&m), "--per-sample", "2", "--seed", "9", "--out", p(out)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let doc = json(&a);
    for sample in doc["samples"].as_array().unwrap() {
        assert!(sample["crops"].as_array().unwrap().len() <= 2);
        for binding in sample["depth"].as_object().unwrap().values() {
            assert!(binding.get("crops").map_or(true, |c| c.as_object().unwrap().is_empty()));
        }
    }
    ok(&["crops", "--manifest", p(&m), "--per-sample", "2", "--seed", "10", "--out", p(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn loss_align_ordinal_and_report_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = synth(d, "bump", &["--edit", "offset_bg:0.25"]);
    let loss = d.join("loss.json");
    ok(&["loss", "--manifest", p(&m), "--student", "student", "--teacher", "teacher", "--out", p(&loss), "--k", "2"]);
    let doc = json(&loss);
    assert_eq!(doc["config"]["loss"]["K"], 2);
    assert!(doc["means"]["total"].as_f64().unwrap() > 0.0);

    let align = d.join("align.json");
    ok(&["align", "--manifest", p(&m), "--student", "student", "--teacher", "teacher", "--out", p(&align)]);
    let summary = &json(&align)["summary"];
    assert!(summary["mean_r2_percent"].as_f64().unwrap() > 99.0);

    let manifest = json(&m);
    let t = d.join(manifest["samples"][0]["depth"]["teacher"]["full"].as_str().unwrap());
    let ord = d.join("ord.json");
    let text = ok(&["ordinal", "--gt", p(&t), "--pred", p(&t), "--seed", "1", "--pairs", "1000", "--out", p(&ord)]);
    assert!(text.contains("accuracy 1.000000"), "{text}");
    assert_eq!(json(&ord)["accuracy"].as_f64(), Some(1.0));

    let e1 = d.join("e1.json");
    let e2 = d.join("e2.json");
    ok(&["eval", "--manifest", p(&m), "--role", "teacher", "--out", p(&e1)]);
    ok(&["eval", "--manifest", p(&m), "--role", "student", "--out", p(&e2)]);
    let table = ok(&["report", "--baseline", p(&e1), "--ours", p(&e2), "--metrics", "dcs,ccs"]);
    assert!(table.contains("dcs") && table.contains("ccs") && table.contains('%'), "{table}");
}

#[test]
fn errors_map_to_categories_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mirage(&["eval", "--manifest", "/nonexistent/manifest.json", "--role", "t", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("io_error:"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 1, "samples": [{"id": "a"}]}"#).unwrap();
    let out = mirage(&["eval", "--manifest", p(&bad), "--role", "t", "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("schema_error:"));

    let out = mirage(&["eval", "--role", "t"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("usage_error:") && err.contains("--manifest"), "{err}");

    let out = mirage(&["ordinal", "--gt", "a", "--pred", "b", "--seed", "1", "--tau", "2"]);
    assert_eq!(out.status.code(), Some(2));

    assert!(mirage(&["--help"]).status.success());
    assert!(mirage(&["--version"]).status.success());
}
