//! Plane experts fitted on the ROI ring, and per-expert ROI residuals.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{pixel_center, DepthMap, MaskRaster};

/// `z = a·x + b·y + c` in pixel-center coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Plane {
    #[inline]
    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    /// Value at the center of pixel `index` of a `width`-wide grid.
    #[inline]
    pub fn at_pixel(&self, index: usize, width: usize) -> f64 {
        let (x, y) = pixel_center(index / width, index % width);
        self.at(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneMixture {
    pub planes: Vec<Plane>,
    /// RMS residual of each fit.
    pub sigmas: Vec<f64>,
    pub ring_pixels_per_plane: Vec<usize>,
}

impl PlaneMixture {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

/// Centroid of the ROI's pixel centers.
pub fn roi_centroid(roi: &MaskRaster) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for i in roi.indices() {
        let (x, y) = pixel_center(i / roi.width(), i % roi.width());
        sx += x;
        sy += y;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Sector of `(x, y)` among `k` equal angular sectors about `center`,
/// counted from the +x axis towards +y.
pub fn sector_of(x: f64, y: f64, center: (f64, f64), k: usize) -> usize {
    let theta = (y - center.1).atan2(x - center.0).rem_euclid(TAU);
    ((theta * k as f64 / TAU) as usize).min(k - 1)
}

/// Least-squares plane through `points` with its RMS residual; `None` for
/// fewer than three points or collinear points.
pub fn fit_plane(points: &[(f64, f64, f64)]) -> Option<(Plane, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my, mz) = points.iter().fold((0.0, 0.0, 0.0), |(a, b, c), p| (a + p.0, b + p.1, c + p.2));
    let (mx, my, mz) = (mx / n, my / n, mz / n);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in points {
        let (dx, dy, dz) = (x - mx, y - my, z - mz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-10 * (sxx + syy) * (sxx + syy)) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    let plane = Plane { a, b, c: mz - a * mx - b * my };
    let sse: f64 = points
        .iter()
        .map(|&(x, y, z)| {
            let r = z - plane.at(x, y);
            r * r
        })
        .sum();
    Some((plane, (sse / n).sqrt()))
}

/// Fits one plane per angular sector of the ring. A sector that cannot
/// support a plane is merged into the next one; leftovers at the end join
/// the first fitted group.
pub fn fit_plane_mixture(z_t: &DepthMap, roi: &MaskRaster, ring: &MaskRaster, k: usize) -> Result<PlaneMixture> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if ring.is_empty() {
        return Err(Error::RingEmpty);
    }
    z_t.check_shape(ring.width(), ring.height())?;
    let center = roi_centroid(roi).ok_or(Error::EmptyMask)?;
    let w = ring.width();
    let mut sectors: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); k];
    for i in ring.indices().filter(|&i| z_t.is_valid(i)) {
        let (x, y) = pixel_center(i / w, i % w);
        sectors[sector_of(x, y, center, k)].push((x, y, z_t.values()[i]));
    }
    let mut groups: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let mut pending: Vec<(f64, f64, f64)> = Vec::new();
    for sector in sectors {
        pending.extend(sector);
        if fit_plane(&pending).is_some() {
            groups.push(std::mem::take(&mut pending));
        }
    }
    if groups.is_empty() {
        return Err(Error::AllSectorsDegenerate);
    }
    if !pending.is_empty() {
        groups[0].extend(pending);
    }
    let mut mixture = PlaneMixture {
        planes: Vec::with_capacity(groups.len()),
        sigmas: Vec::with_capacity(groups.len()),
        ring_pixels_per_plane: Vec::with_capacity(groups.len()),
    };
    for g in &groups {
        let (plane, sigma) = fit_plane(g).ok_or(Error::AllSectorsDegenerate)?;
        mixture.planes.push(plane);
        mixture.sigmas.push(sigma);
        mixture.ring_pixels_per_plane.push(g.len());
    }
    Ok(mixture)
}

/// ROI residuals `ℓ_k` against each plane and `ℓ_null` against the teacher.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub ell: Vec<f64>,
    pub ell_null: f64,
}

pub fn mixture_residuals(z: &DepthMap, z_t: &DepthMap, roi: &MaskRaster, mix: &PlaneMixture) -> Result<Residuals> {
    z.check_shape(roi.width(), roi.height())?;
    z_t.check_shape(roi.width(), roi.height())?;
    let w = roi.width();
    let px: Vec<usize> = roi.indices().filter(|&i| z.is_valid(i)).collect();
    if px.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = px.len() as f64;
    let ell = mix
        .planes
        .iter()
        .map(|p| px.iter().map(|&i| (z.values()[i] - p.at_pixel(i, w)).abs()).sum::<f64>() / n)
        .collect();
    let (sum, count) = px
        .iter()
        .filter(|&&i| z_t.is_valid(i))
        .fold((0.0, 0usize), |(s, c), &i| (s + (z.values()[i] - z_t.values()[i]).abs(), c + 1));
    let ell_null = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(Residuals { ell, ell_null })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> MaskRaster {
        MaskRaster::from_fn(w, h, |row, col| {
            let (x, y) = pixel_center(row, col);
            (x - cx).hypot(y - cy) <= r
        })
    }

    fn plane_field(w: usize, h: usize, p: Plane) -> DepthMap {
        DepthMap::from_fn(w, h, |r, c| {
            let (x, y) = pixel_center(r, c);
            p.at(x, y)
        })
        .unwrap()
    }

    #[test]
    fn exact_plane_recovery() {
        let p = Plane { a: 0.5, b: -0.25, c: 3.0 };
        let roi = disk(48, 48, 24.0, 24.0, 8.0);
        let ring = roi.dilate(6).and_not(&roi);
        let mix = fit_plane_mixture(&plane_field(48, 48, p), &roi, &ring, 3).unwrap();
        assert_eq!(mix.len(), 3);
        for (q, s) in mix.planes.iter().zip(&mix.sigmas) {
            assert!((q.a - 0.5).abs() < 1e-6 && (q.b + 0.25).abs() < 1e-6 && (q.c - 3.0).abs() < 1e-6);
            assert!(*s < 1e-6);
        }
        assert_eq!(mix.ring_pixels_per_plane.iter().sum::<usize>(), ring.count());
    }

    #[test]
    fn noisy_ring_sigma() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let p = Plane { a: 0.02, b: 0.01, c: 1.0 };
        let roi = disk(96, 96, 48.0, 48.0, 16.0);
        let ring = roi.dilate(8).and_not(&roi);
        let base = plane_field(96, 96, p);
        let noisy = DepthMap::from_fn(96, 96, |r, c| base.get(r, c) + noise.sample(&mut rng)).unwrap();
        let mix = fit_plane_mixture(&noisy, &roi, &ring, 3).unwrap();
        assert!(mix.ring_pixels_per_plane.iter().sum::<usize>() >= 1000);
        for s in &mix.sigmas {
            assert!((0.09..=0.11).contains(s), "{s}");
        }
    }

    #[test]
    fn two_half_rings() {
        let (cx, cy) = (32.0, 32.0);
        let roi = disk(64, 64, cx, cy, 10.0);
        let ring = roi.dilate(6).and_not(&roi);
        let upper = Plane { a: 0.3, b: 0.8, c: 1.0 };
        let lower = Plane { a: 0.3, b: -0.4, c: 1.0 + 1.2 * cy };
        let z = DepthMap::from_fn(64, 64, |r, c| {
            let (x, y) = pixel_center(r, c);
            if y >= cy { upper.at(x, y) } else { lower.at(x, y) }
        })
        .unwrap();
        let mix = fit_plane_mixture(&z, &roi, &ring, 2).unwrap();
        for (got, want) in mix.planes.iter().zip([upper, lower]) {
            assert!((got.a - want.a).abs() < 1e-3 && (got.b - want.b).abs() < 1e-3 && (got.c - want.c).abs() < 1e-3,
                "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn degenerate_sectors_merge_forward() {
        // Three ring pixels in one line and one more elsewhere.
        let roi = MaskRaster::from_fn(9, 9, |r, c| r == 4 && c == 4);
        let ring = MaskRaster::from_fn(9, 9, |r, c| (r == 4 && c >= 6) || (r == 2 && c == 2));
        let z = DepthMap::from_fn(9, 9, |r, c| (r + c) as f64).unwrap();
        let mix = fit_plane_mixture(&z, &roi, &ring, 4).unwrap();
        assert_eq!(mix.len(), 1);
        assert_eq!(mix.ring_pixels_per_plane, vec![4]);
        let line = MaskRaster::from_fn(9, 9, |r, c| r == 4 && c >= 6);
        assert!(matches!(fit_plane_mixture(&z, &roi, &line, 2), Err(Error::AllSectorsDegenerate)));
    }

    #[test]
    fn residual_examples() {
        let p = Plane { a: 0.1, b: 0.2, c: -1.0 };
        let roi = disk(20, 20, 10.0, 10.0, 4.0);
        let mix = PlaneMixture { planes: vec![p], sigmas: vec![0.0], ring_pixels_per_plane: vec![0] };
        let z = plane_field(20, 20, p);
        let res = mixture_residuals(&z, &z, &roi, &mix).unwrap();
        assert!(res.ell[0] < 1e-12 && res.ell_null == 0.0);
        let shifted = z.map(|v| v + 0.3).unwrap();
        let res = mixture_residuals(&shifted, &z, &roi, &mix).unwrap();
        assert!((res.ell[0] - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_design(seed in 0u64..1000, n in 3usize..60) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), rng.random_range(-5.0..5.0)))
                .collect();
            if let Some((p, _)) = fit_plane(&pts) {
                let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
                for &(x, y, z) in &pts {
                    let r = z - p.at(x, y);
                    g0 += r * x;
                    g1 += r * y;
                    g2 += r;
                }
                prop_assert!(g0.abs() < 1e-8 && g1.abs() < 1e-8 && g2.abs() < 1e-8, "{g0} {g1} {g2}");
            }
        }
    }
}
