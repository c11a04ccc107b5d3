//! Sampled pairwise ordinal accuracy of a prediction against ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::resample_bilinear;
use crate::raster::DepthMap;

pub const DEFAULT_PAIRS: usize = 50_000;
pub const DEFAULT_TAU: f64 = 0.01;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrdinalResult {
    pub accuracy: f64,
    pub pairs_requested: usize,
    pub pairs_retained: usize,
    pub tau: f64,
    pub seed: u64,
}

/// Draws the pixel pair for sample `k`. Every `k` owns its own ChaCha
/// stream, so the draw does not depend on evaluation order.
fn pair(base: &ChaCha8Rng, k: u64, n: usize) -> (usize, usize) {
    let mut rng = base.clone();
    rng.set_stream(k);
    (rng.random_range(0..n), rng.random_range(0..n))
}

/// Fraction of sampled pairs whose prediction order matches the ground truth.
///
/// Pairs whose ground-truth gap is within `tau` of the ground-truth range are
/// discarded; prediction ties count as wrong. `gt` is resampled bilinearly
/// onto `pred`'s grid when the shapes differ.
pub fn pairwise_accuracy(
    gt: &DepthMap,
    pred: &DepthMap,
    pairs: usize,
    tau: f64,
    seed: u64,
) -> Result<OrdinalResult> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must be in [0, 1), got {tau}")));
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument("pair budget must be positive".into()));
    }
    let gt = if gt.same_shape(pred) {
        gt.clone()
    } else {
        resample_bilinear(gt, pred.width(), pred.height())?
    };
    let joint: Vec<(f64, f64)> = (0..pred.len())
        .filter(|&i| gt.is_valid(i) && pred.is_valid(i))
        .map(|i| (gt.values()[i], pred.values()[i]))
        .collect();
    if joint.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} jointly valid pixels, need 2",
            joint.len()
        )));
    }
    let (g_min, g_max) = joint
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(g, _)| (lo.min(g), hi.max(g)));
    let band = tau * (g_max - g_min);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let n = joint.len();
    let chunks = pairs.div_ceil(CHUNK);
    let (retained, correct) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut kept, mut right) = (0usize, 0usize);
            for k in c * CHUNK..((c + 1) * CHUNK).min(pairs) {
                let (i, j) = pair(&base, k as u64, n);
                let (gi, pi) = joint[i];
                let (gj, pj) = joint[j];
                if (gi - gj).abs() <= band {
                    continue;
                }
                kept += 1;
                if pi != pj && (pi > pj) == (gi > gj) {
                    right += 1;
                }
            }
            (kept, right)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if retained == 0 {
        return Err(Error::NoValidPairs);
    }
    Ok(OrdinalResult {
        accuracy: correct as f64 / retained as f64,
        pairs_requested: pairs,
        pairs_retained: retained,
        tau,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> DepthMap {
        DepthMap::from_fn(16, 12, |r, c| ((r * 7 + c * 11) % 23) as f64 + 0.01 * c as f64).unwrap()
    }

    #[test]
    fn perfect_and_inverted() {
        let g = gt();
        assert_eq!(pairwise_accuracy(&g, &g, 5000, 0.01, 1).unwrap().accuracy, 1.0);
        let inv = g.map(|v| -v).unwrap();
        assert_eq!(pairwise_accuracy(&g, &inv, 5000, 0.01, 1).unwrap().accuracy, 0.0);
    }

    #[test]
    fn constant_prediction_gets_no_credit() {
        let g = DepthMap::from_fn(3, 3, |r, c| (r * 3 + c) as f64).unwrap();
        let flat = DepthMap::constant(3, 3, 2.0).unwrap();
        // Exhaustive: every retained pair ties in the prediction.
        let r = pairwise_accuracy(&g, &flat, 20_000, 0.01, 9).unwrap();
        assert!((r.accuracy - 0.0).abs() <= 0.02);
    }

    #[test]
    fn deterministic_to_the_bit() {
        let g = gt();
        let p = g.map(|v| (v * 0.37).sin()).unwrap();
        let a = pairwise_accuracy(&g, &p, 30_000, 0.01, 77).unwrap();
        let b = pairwise_accuracy(&g, &p, 30_000, 0.01, 77).unwrap();
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        assert_eq!(a.pairs_retained, b.pairs_retained);
    }

    #[test]
    fn monotone_transforms_do_not_matter() {
        let g = gt();
        let p = g.map(|v| v + (v * 1.3).cos()).unwrap();
        let q = p.map(|v| (0.5 * v).exp() + 3.0).unwrap();
        let a = pairwise_accuracy(&g, &p, 20_000, 0.01, 5).unwrap();
        let b = pairwise_accuracy(&g, &q, 20_000, 0.01, 5).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn all_pairs_in_band() {
        let g = DepthMap::constant(4, 4, 1.0).unwrap();
        assert!(matches!(
            pairwise_accuracy(&g, &g, 100, 0.01, 0),
            Err(Error::NoValidPairs)
        ));
    }

    #[test]
    fn shapes_are_reconciled() {
        let g = DepthMap::from_fn(8, 8, |r, c| (r + c) as f64).unwrap();
        let p = DepthMap::from_fn(4, 4, |r, c| (r + c) as f64).unwrap();
        assert_eq!(pairwise_accuracy(&g, &p, 2000, 0.01, 3).unwrap().accuracy, 1.0);
    }
}
