//! Relative-change tables between a baseline and a candidate result set.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub metric: String,
    pub baseline: f64,
    pub ours: f64,
    /// `(ours − baseline)/baseline·100`, unrounded.
    pub delta_pct: f64,
    /// `delta_pct` to two decimals with a `%` sign.
    pub rendered: String,
}

/// Relative change in percent. Negative means a decrease.
pub fn delta_pct(baseline: f64, ours: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::ZeroBaseline(format!("baseline is 0 (ours = {ours})")));
    }
    Ok((ours - baseline) / baseline * 100.0)
}

/// Two-decimal percentage; values that round to zero print as `0.00%`.
pub fn render_pct(pct: f64) -> String {
    let text = format!("{pct:.2}");
    if text == "-0.00" {
        "0.00%".to_string()
    } else {
        format!("{text}%")
    }
}

/// The metric map of a result document: its `aggregate` object when
/// present, else `metrics`, else the document itself.
fn metric_map(doc: &Value) -> Option<&serde_json::Map<String, Value>> {
    doc.get("aggregate")
        .filter(|v| v.is_object())
        .or_else(|| doc.get("metrics").filter(|v| v.is_object()))
        .unwrap_or(doc)
        .as_object()
}

fn lookup(doc: &Value, key: &str, which: &str) -> Result<f64> {
    metric_map(doc)
        .and_then(|m| m.get(key))
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::MissingMetric(format!("{which} has no numeric {key:?}")))
}

/// Rows for `keys`, each of which must be numeric in both documents.
pub fn delta_rows(baseline: &Value, ours: &Value, keys: &[&str]) -> Result<Vec<DeltaRow>> {
    keys.iter()
        .map(|&key| {
            let b = lookup(baseline, key, "baseline")?;
            let o = lookup(ours, key, "ours")?;
            let pct = delta_pct(b, o).map_err(|_| Error::ZeroBaseline(key.to_string()))?;
            Ok(DeltaRow {
                metric: key.to_string(),
                baseline: b,
                ours: o,
                delta_pct: pct,
                rendered: render_pct(pct),
            })
        })
        .collect()
}

/// Rows for every numeric metric of the baseline, in key order.
pub fn delta_report(baseline: &Value, ours: &Value) -> Result<Vec<DeltaRow>> {
    let map = metric_map(baseline).ok_or_else(|| Error::MissingMetric("baseline is not an object".into()))?;
    let mut keys: Vec<&str> = map
        .iter()
        .filter(|(_, v)| v.is_number())
        .map(|(k, _)| k.as_str())
        .collect();
    keys.sort_unstable();
    if keys.is_empty() {
        return Err(Error::MissingMetric("baseline has no numeric metrics".into()));
    }
    delta_rows(baseline, ours, &keys)
}

/// Fixed-width text table.
pub fn render_table(rows: &[DeltaRow]) -> String {
    let width = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>14}  {:>14}  {:>10}\n", "metric", "baseline", "ours", "delta");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>14.6e}  {:>14.6e}  {:>10}",
            r.metric, r.baseline, r.ours, r.rendered
        );
    }
    out
}
