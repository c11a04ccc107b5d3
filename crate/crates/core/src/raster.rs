//! Dense row-major grids shared by every module: depth maps and binary masks.
//!
//! Pixel `(row, col)` has continuous coordinates `(col + 0.5, row + 0.5)`;
//! every module that converts between pixels and geometry uses that
//! convention through [`pixel_center`].

use crate::error::{Error, Result};

/// Continuous coordinates `(x, y)` of the center of pixel `(row, col)`.
#[inline]
pub fn pixel_center(row: usize, col: usize) -> (f64, f64) {
    (col as f64 + 0.5, row as f64 + 0.5)
}

/// A row-major grid of depth values. Invalid pixels hold `NaN`; every
/// finite entry is a valid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    /// Builds a map from row-major values. Non-finite entries (NaN or ±inf)
    /// are stored as `NaN` and treated as invalid.
    pub fn new(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "depth map must be non-empty, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values for {width}x{height}", width * height),
                got: values.len().to_string(),
            });
        }
        for v in &mut values {
            if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(row, col));
            }
        }
        Self::new(width, height, values)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        self.values[index].is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    pub fn validity(&self) -> MaskRaster {
        MaskRaster::from_bits(
            self.width,
            self.height,
            self.values.iter().map(|v| v.is_finite()).collect(),
        )
        .expect("dimensions are consistent by construction")
    }

    /// Applies `f` to every valid value; invalid pixels stay invalid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|&v| if v.is_finite() { f(v) } else { f64::NAN })
            .collect();
        Self::new(self.width, self.height, values)
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height}"),
                got: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }
}

/// A binary pixel mask with a cached population count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRaster {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    count: usize,
}

impl MaskRaster {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bits for {width}x{height}", width * height),
                got: bits.len().to_string(),
            });
        }
        let count = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            width,
            height,
            bits,
            count,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            count: 0,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
            count: width * height,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(row, col));
            }
        }
        Self::from_bits(width, height, bits).expect("dimensions are consistent by construction")
    }

    /// Pixels at least one pixel away from every frame edge.
    pub fn interior(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |r, c| {
            r > 0 && c > 0 && r + 1 < height && c + 1 < width
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.bits[index]
    }

    /// Row-major indices of set pixels.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    fn zip_with(&self, other: &MaskRaster, f: impl Fn(bool, bool) -> bool) -> MaskRaster {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask frames differ"
        );
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| f(a, b))
            .collect();
        MaskRaster::from_bits(self.width, self.height, bits).expect("same frame")
    }

    pub fn and(&self, other: &MaskRaster) -> MaskRaster {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &MaskRaster) -> MaskRaster {
        self.zip_with(other, |a, b| a || b)
    }

    /// Set difference `self \ other`.
    pub fn and_not(&self, other: &MaskRaster) -> MaskRaster {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> MaskRaster {
        let bits = self.bits.iter().map(|b| !b).collect();
        MaskRaster::from_bits(self.width, self.height, bits).expect("same frame")
    }

    /// Dilation by a `(2r+1)×(2r+1)` square (chessboard distance ≤ r),
    /// clipped to the frame. Runs as two separable passes over prefix counts.
    pub fn dilate(&self, radius: usize) -> MaskRaster {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let mut horizontal = vec![false; w * h];
        let mut prefix = vec![0usize; w.max(h) + 1];
        for row in 0..h {
            for col in 0..w {
                prefix[col + 1] = prefix[col] + self.bits[row * w + col] as usize;
            }
            for col in 0..w {
                let lo = col.saturating_sub(radius);
                let hi = (col + radius + 1).min(w);
                horizontal[row * w + col] = prefix[hi] > prefix[lo];
            }
        }
        let mut bits = vec![false; w * h];
        for col in 0..w {
            for row in 0..h {
                prefix[row + 1] = prefix[row] + horizontal[row * w + col] as usize;
            }
            for row in 0..h {
                let lo = row.saturating_sub(radius);
                let hi = (row + radius + 1).min(h);
                bits[row * w + col] = prefix[hi] > prefix[lo];
            }
        }
        MaskRaster::from_bits(w, h, bits).expect("same frame")
    }
}
