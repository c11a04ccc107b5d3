//! Background-only affine alignment of a student depth map to its teacher.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplacian::percentile_normalize_with;
use crate::raster::{DepthMap, MaskRaster};

/// Default percentile bounds for heatmap normalization.
pub const HEATMAP_PERCENTILES: (f64, f64) = (2.0, 98.0);

/// Least-squares `teacher ≈ a·student + b` over background pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination; may be negative for poor fits.
    pub r2: f64,
    pub n: usize,
}

impl AffineFit {
    pub fn r2_percent(&self) -> f64 {
        100.0 * self.r2
    }

    pub fn apply(&self, student: f64) -> f64 {
        self.a * student + self.b
    }
}

pub fn fit_affine_background(
    student: &DepthMap,
    teacher: &DepthMap,
    background: &MaskRaster,
) -> Result<AffineFit> {
    if !student.same_shape(teacher)
        || student.width() != background.width()
        || student.height() != background.height()
    {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", student.width(), student.height()),
            got: format!(
                "teacher {}x{}, background {}x{}",
                teacher.width(),
                teacher.height(),
                background.width(),
                background.height()
            ),
        });
    }
    let pairs: Vec<(f64, f64)> = background
        .indices()
        .filter(|&i| student.is_valid(i) && teacher.is_valid(i))
        .map(|i| (student.values()[i], teacher.values()[i]))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} background pixels, need 2")));
    }
    let nf = n as f64;
    // Moments about the first pair, then about the shifted means. An exact
    // affine relation on float-exact data survives both shifts unrounded.
    let (s0, t0) = pairs[0];
    let s_mean = pairs.iter().map(|p| p.0 - s0).sum::<f64>() / nf;
    let t_mean = pairs.iter().map(|p| p.1 - t0).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut ss_tot) = (0.0, 0.0, 0.0);
    let mut s_scale = 0.0f64;
    for &(s, t) in &pairs {
        let ds = (s - s0) - s_mean;
        let dt = (t - t0) - t_mean;
        sxx += ds * ds;
        sxy += ds * dt;
        ss_tot += dt * dt;
        s_scale = s_scale.max(s.abs());
    }
    if sxx <= nf * (1e-12 * s_scale.max(f64::MIN_POSITIVE)).powi(2) {
        return Err(Error::DegenerateFit(
            "student is constant on the background".into(),
        ));
    }
    let a = sxy / sxx;
    let b = (t0 - a * s0) + (t_mean - a * s_mean);
    let ss_res: f64 = pairs
        .iter()
        .map(|&(s, t)| {
            let r = a * s + b - t;
            r * r
        })
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        return Err(Error::DegenerateFit("teacher is constant on the background".into()));
    };
    Ok(AffineFit { a, b, r2, n })
}

/// `|a·s + b − t|` per pixel, rescaled to the given percentile range of the
/// image and clamped to `[0, 1]`.
pub fn error_heatmap(
    student: &DepthMap,
    teacher: &DepthMap,
    fit: &AffineFit,
    bounds: (f64, f64),
) -> Result<DepthMap> {
    student.check_shape(teacher.width(), teacher.height())?;
    let residual: Vec<f64> = student
        .values()
        .iter()
        .zip(teacher.values())
        .map(|(&s, &t)| (fit.apply(s) - t).abs())
        .collect();
    let residual = DepthMap::new(student.width(), student.height(), residual)?;
    let normalized = percentile_normalize_with(&residual, bounds, None)?;
    let clamped = normalized
        .values
        .iter()
        .map(|&v| if v.is_finite() { v.clamp(0.0, 1.0) } else { f64::NAN })
        .collect();
    DepthMap::new(student.width(), student.height(), clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn student() -> DepthMap {
        DepthMap::from_fn(8, 8, |r, c| ((r * 5 + c * 3) % 7) as f64 + r as f64).unwrap()
    }

    fn lower_half() -> MaskRaster {
        MaskRaster::from_fn(8, 8, |r, _| r >= 4)
    }

    #[test]
    fn exact_affine_relation() {
        let s = student();
        let t = s.map(|v| 2.0 * v + 1.0).unwrap();
        let fit = fit_affine_background(&s, &t, &lower_half()).unwrap();
        assert_eq!((fit.a, fit.b, fit.r2_percent(), fit.n), (2.0, 1.0, 100.0, 32));
    }

    #[test]
    fn identity() {
        let s = student();
        let fit = fit_affine_background(&s, &s, &MaskRaster::full(8, 8)).unwrap();
        assert_eq!((fit.a, fit.b, fit.r2), (1.0, 0.0, 1.0));
    }

    #[test]
    fn constant_student_is_degenerate() {
        let s = DepthMap::constant(4, 4, 0.1).unwrap();
        let t = student_like(4);
        assert!(matches!(
            fit_affine_background(&s, &t, &MaskRaster::full(4, 4)),
            Err(Error::DegenerateFit(_))
        ));
    }

    fn student_like(n: usize) -> DepthMap {
        DepthMap::from_fn(n, n, |r, c| (r + 2 * c) as f64).unwrap()
    }

    #[test]
    fn noisy_teacher_r2_close_to_analytic() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let noise = Normal::new(0.0, 0.1).unwrap();
        let s: Vec<f64> = (0..10_000).map(|_| unit.sample(&mut rng)).collect();
        let t: Vec<f64> = s.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let s = DepthMap::new(100, 100, s).unwrap();
        let t = DepthMap::new(100, 100, t).unwrap();
        let fit = fit_affine_background(&s, &t, &MaskRaster::full(100, 100)).unwrap();
        // 1 − 0.01/1.01 ≈ 0.990
        assert!((0.98..=1.0).contains(&fit.r2), "{fit:?}");
    }

    #[test]
    fn heatmaps() {
        let s = student();
        let fit = fit_affine_background(&s, &s, &MaskRaster::full(8, 8)).unwrap();
        let h = error_heatmap(&s, &s, &fit, HEATMAP_PERCENTILES).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));

        let shifted = s.map(|v| v + 3.25).unwrap();
        let fit = fit_affine_background(&s, &shifted, &MaskRaster::full(8, 8)).unwrap();
        let h = error_heatmap(&s, &shifted, &fit, HEATMAP_PERCENTILES).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_confined_to_disagreement() {
        let t = student();
        let roi = MaskRaster::from_fn(8, 8, |r, c| (2..5).contains(&r) && (3..6).contains(&c));
        let s = DepthMap::from_fn(8, 8, |r, c| if roi.get(r, c) { 0.0 } else { t.get(r, c) }).unwrap();
        let fit = fit_affine_background(&s, &t, &roi.not()).unwrap();
        let h = error_heatmap(&s, &t, &fit, HEATMAP_PERCENTILES).unwrap();
        for i in 0..64 {
            if h.values()[i] > 0.0 {
                assert!(roi.contains(i), "pixel {i} lit outside the ROI");
            }
        }
        assert!(h.values().iter().any(|&v| v > 0.0));
    }

    proptest! {
        #[test]
        fn exact_relation_on_fixture_grid(codes in proptest::collection::vec(-40_000i32..40_000, 64 * 48)) {
            let s = DepthMap::new(64, 48, codes.iter().map(|&k| 2.0 + k as f64 / 16384.0).collect()).unwrap();
            let t = s.map(|v| 2.0 * v + 1.0).unwrap();
            let fit = fit_affine_background(&s, &t, &MaskRaster::full(64, 48)).unwrap();
            prop_assert_eq!((fit.a, fit.b, fit.r2_percent()), (2.0, 1.0, 100.0));
        }

        #[test]
        fn affine_equivariance(p in 0.1f64..10.0, q in -20.0f64..20.0, a in 0.2f64..5.0, b in -3.0f64..3.0) {
            let s = student();
            let t = DepthMap::from_fn(8, 8, |r, c| a * s.get(r, c) + b + 0.05 * ((r * c) % 3) as f64).unwrap();
            let bg = lower_half();
            let base = fit_affine_background(&s, &t, &bg).unwrap();
            let moved = s.map(|v| p * v + q).unwrap();
            let fit = fit_affine_background(&moved, &t, &bg).unwrap();
            prop_assert!((fit.a - base.a / p).abs() < 1e-9 * base.a.abs().max(1.0));
            prop_assert!((fit.b - (base.b - base.a * q / p)).abs() < 1e-8 * base.b.abs().max(1.0));
            prop_assert!((fit.r2 - base.r2).abs() < 1e-9);
            let h0 = error_heatmap(&s, &t, &base, HEATMAP_PERCENTILES).unwrap();
            let h1 = error_heatmap(&moved, &t, &fit, HEATMAP_PERCENTILES).unwrap();
            for (x, y) in h0.values().iter().zip(h1.values()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
