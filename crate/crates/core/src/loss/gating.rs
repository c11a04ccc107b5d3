//! Soft gating targets over the plane experts and the null expert.

use serde::Serialize;

use crate::error::{Error, Result};

/// Floor applied to `w` inside the cross-entropy logarithm.
pub const CE_FLOOR: f64 = 1e-12;

/// Mixture weights and targets over `K` planes followed by the null slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingBundle {
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    pub ce: f64,
    pub entropy: f64,
    pub anchor: f64,
    pub null_masked: bool,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn cross_entropy(w: &[f64], q: &[f64]) -> f64 {
    -q.iter()
        .zip(w)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &wi)| qi * wi.max(CE_FLOOR).ln())
        .sum::<f64>()
}

pub fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Gating targets from residual scales `sigmas` and ROI residuals `ell`
/// (one per plane) plus `ell_null`.
///
/// Positive samples mask the null expert in both `q` and `w`. Without
/// `logits`, `w = softmax(−ℓ/temperature)`.
pub fn gating_targets(
    sigmas: &[f64],
    ell: &[f64],
    ell_null: f64,
    positive: bool,
    temperature: f64,
    smoothing: f64,
    logits: Option<&[f64]>,
) -> Result<GatingBundle> {
    let k = sigmas.len();
    if k == 0 || ell.len() != k {
        return Err(Error::InvalidArgument(format!(
            "need one residual per plane, got {} planes and {} residuals",
            k,
            ell.len()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidArgument(format!("smoothing must be in [0, 1), got {smoothing}")));
    }
    let q = if positive {
        let plane_logits: Vec<f64> = sigmas.iter().map(|s| -s / temperature).collect();
        let mut q = softmax(&plane_logits);
        q.push(0.0);
        q
    } else {
        let mut q = vec![smoothing / k as f64; k];
        q.push(1.0 - smoothing);
        q
    };
    let logits: Vec<f64> = match logits {
        Some(l) if l.len() != k + 1 => {
            return Err(Error::InvalidArgument(format!("expected {} gating logits, got {}", k + 1, l.len())))
        }
        Some(l) => l.to_vec(),
        None => ell.iter().chain(std::iter::once(&ell_null)).map(|l| -l / temperature).collect(),
    };
    let w = if positive {
        let mut w = softmax(&logits[..k]);
        w.push(0.0);
        w
    } else {
        softmax(&logits)
    };
    Ok(GatingBundle {
        ce: cross_entropy(&w, &q),
        entropy: entropy(&w),
        anchor: ell.iter().copied().fold(f64::INFINITY, f64::min),
        w,
        q,
        null_masked: positive,
    })
}
