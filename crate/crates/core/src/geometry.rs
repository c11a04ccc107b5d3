//! ROI polygons, crop rectangles and the crop-to-full coordinate mapping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{pixel_center, DepthMap, MaskRaster};

/// A point in the full-image frame, `[x, y]` in pixels.
pub type Vertex = [f64; 2];

/// Attempts per crop before giving up on it.
const CROP_ATTEMPTS: usize = 256;

/// An annotated region: an outer polygon with optional nested exclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiShape {
    outer: Vec<Vertex>,
    exclusions: Vec<Vec<Vertex>>,
}

impl RoiShape {
    pub fn new(outer: Vec<Vertex>, exclusions: Vec<Vec<Vertex>>) -> Result<Self> {
        check_polygon(&outer, "outer polygon")?;
        let (x0, y0, x1, y1) = bounds(&outer);
        for (k, hole) in exclusions.iter().enumerate() {
            check_polygon(hole, &format!("exclusion {k}"))?;
            for &[x, y] in hole {
                if x < x0 || x > x1 || y < y0 || y > y1 {
                    return Err(Error::DegeneratePolygon(format!(
                        "exclusion {k} vertex ({x}, {y}) lies outside the outer bounding box"
                    )));
                }
            }
        }
        Ok(Self { outer, exclusions })
    }

    pub fn polygon(outer: Vec<Vertex>) -> Result<Self> {
        Self::new(outer, Vec::new())
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn outer(&self) -> &[Vertex] {
        &self.outer
    }

    pub fn exclusions(&self) -> &[Vec<Vertex>] {
        &self.exclusions
    }

    /// Bounding box `(x0, y0, x1, y1)` of the outer polygon.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        bounds(&self.outer)
    }

    /// Applies `(x, y) ↦ ((x − dx)·sx, (y − dy)·sy)` to every vertex.
    pub fn transformed(&self, dx: f64, dy: f64, sx: f64, sy: f64) -> Result<Self> {
        let map = |poly: &[Vertex]| -> Vec<Vertex> {
            poly.iter()
                .map(|&[x, y]| [(x - dx) * sx, (y - dy) * sy])
                .collect()
        };
        Self::new(
            map(&self.outer),
            self.exclusions.iter().map(|h| map(h)).collect(),
        )
    }
}

fn check_polygon(poly: &[Vertex], what: &str) -> Result<()> {
    if poly.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::DegeneratePolygon(format!("{what} has a non-finite vertex")));
    }
    let mut distinct: Vec<Vertex> = Vec::new();
    for v in poly {
        if !distinct.contains(v) {
            distinct.push(*v);
        }
    }
    if distinct.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{what} has {} distinct vertices, need 3",
            distinct.len()
        )));
    }
    Ok(())
}

fn bounds(poly: &[Vertex]) -> (f64, f64, f64, f64) {
    poly.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), &[x, y]| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
    )
}

/// Sorted x-coordinates where the polygon boundary crosses the horizontal
/// line at `y`. Edges are half-open in y so vertices are never counted twice.
fn crossings(poly: &[Vertex], y: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = poly.len();
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        if (y0 > y) != (y1 > y) {
            out.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    out.sort_by(f64::total_cmp);
}

/// Even-odd membership of `x` given the sorted crossings of its scanline.
#[inline]
fn inside(sorted_crossings: &[f64], x: f64) -> bool {
    sorted_crossings.partition_point(|&c| c <= x) % 2 == 1
}

/// Rasterizes the ROI: a pixel is set iff its center lies inside the outer
/// polygon and inside none of the exclusions (even-odd rule for each).
pub fn rasterize_roi(shape: &RoiShape, width: usize, height: usize) -> Result<MaskRaster> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "frame must be non-empty, got {width}x{height}"
        )));
    }
    let mut bits = vec![false; width * height];
    let mut outer_x = Vec::new();
    let mut hole_x: Vec<Vec<f64>> = vec![Vec::new(); shape.exclusions.len()];
    for row in 0..height {
        let (_, y) = pixel_center(row, 0);
        crossings(&shape.outer, y, &mut outer_x);
        if outer_x.is_empty() {
            continue;
        }
        for (hole, xs) in shape.exclusions.iter().zip(hole_x.iter_mut()) {
            crossings(hole, y, xs);
        }
        for col in 0..width {
            let (x, _) = pixel_center(row, col);
            if inside(&outer_x, x) && !hole_x.iter().any(|xs| inside(xs, x)) {
                bits[row * width + col] = true;
            }
        }
    }
    let mask = MaskRaster::from_bits(width, height, bits)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// True when at least one pixel center of the frame falls inside the ROI.
/// Stops at the first hit, so it is much cheaper than a full rasterization.
pub fn roi_covers_pixel(shape: &RoiShape, width: usize, height: usize) -> bool {
    let mut outer_x = Vec::new();
    let mut hole_x: Vec<Vec<f64>> = vec![Vec::new(); shape.exclusions.len()];
    for row in 0..height {
        let (_, y) = pixel_center(row, 0);
        crossings(&shape.outer, y, &mut outer_x);
        if outer_x.is_empty() {
            continue;
        }
        for (hole, xs) in shape.exclusions.iter().zip(hole_x.iter_mut()) {
            crossings(hole, y, xs);
        }
        for col in 0..width {
            let (x, _) = pixel_center(row, col);
            if inside(&outer_x, x) && !hole_x.iter().any(|xs| inside(xs, x)) {
                return true;
            }
        }
    }
    false
}

fn shoelace(poly: &[Vertex]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    (twice / 2.0).abs()
}

/// Outer shoelace area minus the exclusion areas, in squared pixels.
pub fn polygon_area(shape: &RoiShape) -> f64 {
    shoelace(&shape.outer) - shape.exclusions.iter().map(|h| shoelace(h)).sum::<f64>()
}

/// Half-open integer rectangle `[x0, x1) × [y0, y1)` in the full-image frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropRect {
    pub id: String,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub seed: u64,
}

impl CropRect {
    pub fn new(id: impl Into<String>, x0: usize, y0: usize, x1: usize, y1: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            x0,
            y0,
            x1,
            y1,
            seed,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn validate(&self, frame_width: usize, frame_height: usize) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > frame_width || self.y1 > frame_height
        {
            return Err(Error::InvalidArgument(format!(
                "crop {:?} rect [{}, {}, {}, {}] is not a non-empty rectangle inside {}x{}",
                self.id, self.x0, self.y0, self.x1, self.y1, frame_width, frame_height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        col >= self.x0 && col < self.x1 && row >= self.y0 && row < self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }
}

/// ROI bounding box clipped to the frame, or `None` if nothing remains.
fn clipped_bbox(shape: &RoiShape, width: usize, height: usize) -> Option<(f64, f64, f64, f64)> {
    let (x0, y0, x1, y1) = shape.bounding_box();
    let (x0, y0) = (x0.max(0.0), y0.max(0.0));
    let (x1, y1) = (x1.min(width as f64), y1.min(height as f64));
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
}

/// Diagonal of `rect ∩ bbox`, zero when they do not overlap.
pub fn retained_diagonal(rect: &CropRect, bbox: (f64, f64, f64, f64)) -> f64 {
    let (bx0, by0, bx1, by1) = bbox;
    let w = (rect.x1 as f64).min(bx1) - (rect.x0 as f64).max(bx0);
    let h = (rect.y1 as f64).min(by1) - (rect.y0 as f64).max(by0);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    w.hypot(h)
}

/// Whether `rect` keeps at least `min_diag_frac` of the ROI bounding-box
/// diagonal and has its center inside that box.
pub fn crop_is_admissible(
    rect: &CropRect,
    shape: &RoiShape,
    width: usize,
    height: usize,
    min_diag_frac: f64,
) -> bool {
    let Some(bbox) = clipped_bbox(shape, width, height) else {
        return false;
    };
    let (bx0, by0, bx1, by1) = bbox;
    let (cx, cy) = rect.center();
    let centered = cx >= bx0 && cx <= bx1 && cy >= by0 && cy <= by1;
    let bbox_diag = (bx1 - bx0).hypot(by1 - by0);
    centered && retained_diagonal(rect, bbox) >= min_diag_frac * bbox_diag
}

/// Draws up to `count` distinct context-restricted crops around the ROI.
///
/// Centers are uniform in the ROI bounding box; side lengths are uniform in
/// `[⌈f·side⌉, min(frame side, 2·side)]` and the rectangle is shifted to fit
/// the frame. Each crop gets [`CROP_ATTEMPTS`] rejection-sampling attempts.
pub fn generate_crops(
    shape: &RoiShape,
    width: usize,
    height: usize,
    count: usize,
    min_diag_frac: f64,
    seed: u64,
) -> Result<Vec<CropRect>> {
    if !(min_diag_frac > 0.0 && min_diag_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "min_diag_frac must be in (0, 1], got {min_diag_frac}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("crop count must be at least 1".into()));
    }
    let (bx0, by0, bx1, by1) = clipped_bbox(shape, width, height)
        .ok_or_else(|| Error::InfeasibleCrop("ROI bounding box lies outside the frame".into()))?;
    let (bw, bh) = (bx1 - bx0, by1 - by0);
    let side_range = |side: f64, frame: usize| {
        let lo = ((min_diag_frac * side).ceil() as usize).clamp(1, frame);
        let hi = ((2.0 * side).ceil() as usize).min(frame).max(lo);
        (lo, hi)
    };
    let (w_lo, w_hi) = side_range(bw, width);
    let (h_lo, h_hi) = side_range(bh, height);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crops: Vec<CropRect> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..CROP_ATTEMPTS {
            let cx = rng.random_range(bx0..=bx1);
            let cy = rng.random_range(by0..=by1);
            let w = rng.random_range(w_lo..=w_hi);
            let h = rng.random_range(h_lo..=h_hi);
            let x0 = ((cx - w as f64 / 2.0).round().max(0.0) as usize).min(width - w);
            let y0 = ((cy - h as f64 / 2.0).round().max(0.0) as usize).min(height - h);
            let rect = CropRect::new(format!("c{}", crops.len()), x0, y0, x0 + w, y0 + h, seed);
            let duplicate = crops
                .iter()
                .any(|c| (c.x0, c.y0, c.x1, c.y1) == (rect.x0, rect.y0, rect.x1, rect.y1));
            if !duplicate && crop_is_admissible(&rect, shape, width, height, min_diag_frac) {
                accepted = Some(rect);
                break;
            }
        }
        match accepted {
            Some(rect) => crops.push(rect),
            None => break,
        }
    }
    if crops.is_empty() {
        return Err(Error::InfeasibleCrop(format!(
            "no rectangle in {width}x{height} retains {min_diag_frac} of the ROI diagonal"
        )));
    }
    Ok(crops)
}

/// Separable bilinear resampling with the half-pixel-center convention and
/// edge clamping. A target pixel is invalid if any source sample with
/// non-zero weight is invalid.
pub fn resample_bilinear(src: &DepthMap, width: usize, height: usize) -> Result<DepthMap> {
    if src.width() == width && src.height() == height {
        return Ok(src.clone());
    }
    let taps = |n_src: usize, n_dst: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_src as f64 / n_dst as f64;
        (0..n_dst)
            .map(|j| {
                let u = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_src - 1) as f64);
                let j0 = u.floor() as usize;
                let j1 = (j0 + 1).min(n_src - 1);
                (j0, j1, u - j0 as f64)
            })
            .collect()
    };
    let cols = taps(src.width(), width);
    let rows = taps(src.height(), height);
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { (1.0 - t) * a + t * b };
    DepthMap::from_fn(width, height, |r, c| {
        let (r0, r1, fv) = rows[r];
        let (c0, c1, fu) = cols[c];
        let top = lerp(src.get(r0, c0), src.get(r0, c1), fu);
        if fv == 0.0 {
            return top;
        }
        let bottom = lerp(src.get(r1, c0), src.get(r1, c1), fu);
        lerp(top, bottom, fv)
    })
}

/// Places a crop-view prediction into the full frame: the crop is resampled
/// to the rectangle's footprint; pixels outside the rectangle are invalid.
pub fn map_crop_to_full(
    crop_depth: &DepthMap,
    rect: &CropRect,
    full_width: usize,
    full_height: usize,
) -> Result<DepthMap> {
    rect.validate(full_width, full_height)?;
    let placed = resample_bilinear(crop_depth, rect.width(), rect.height())?;
    DepthMap::from_fn(full_width, full_height, |r, c| {
        if rect.contains(r, c) {
            placed.get(r - rect.y0, c - rect.x0)
        } else {
            f64::NAN
        }
    })
}
