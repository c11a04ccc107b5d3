//! Order statistics with linear interpolation between closest ranks
//! (Hyndman–Fan type 7, the default of most numeric libraries).

/// Percentile `pct ∈ [0, 100]` of an ascending-sorted, non-empty slice.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let (lo, frac) = rank(sorted.len(), pct);
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Same value as [`percentile_sorted`] on the sorted data, but computed with
/// two selections instead of a full sort. Reorders `values`.
pub fn percentile_select(values: &mut [f64], pct: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let (lo, frac) = rank(values.len(), pct);
    let (_, &mut at_lo, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return at_lo;
    }
    let next = upper
        .iter()
        .copied()
        .min_by(f64::total_cmp)
        .expect("upper partition is non-empty");
    at_lo + frac * (next - at_lo)
}

fn rank(n: usize, pct: f64) -> (usize, f64) {
    let h = (n - 1) as f64 * (pct.clamp(0.0, 100.0) / 100.0);
    let lo = h.floor();
    (lo as usize, h - lo)
}

/// Two-pass mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean of the selected entries; `None` when nothing is selected.
pub fn masked_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
