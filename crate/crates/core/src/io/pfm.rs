//! Grayscale portable float maps ("Pf").
//!
//! Header: `Pf\n<width> <height>\n<scale>\n`, then `width·height` 32-bit
//! floats stored bottom row first. A negative scale marks little-endian data.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub fn is_pfm(bytes: &[u8]) -> bool {
    bytes.starts_with(b"Pf") || bytes.starts_with(b"PF")
}

/// Reads the next whitespace-delimited header token; returns it and the
/// offset just past the single whitespace byte that terminates it.
fn token(bytes: &[u8], mut pos: usize) -> Option<(&str, usize)> {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos || pos >= bytes.len() {
        return None;
    }
    let text = std::str::from_utf8(&bytes[start..pos]).ok()?;
    Some((text, pos + 1))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let corrupt = |reason: &str| Error::corrupt(path, reason);
    let (magic, pos) = token(bytes, 0).ok_or_else(|| corrupt("truncated header"))?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(Error::UnsupportedFormat(
                "colour PFM (\"PF\"); only grayscale \"Pf\" depth maps are accepted".into(),
            ))
        }
        _ => return Err(corrupt("bad magic")),
    }
    let (w, pos) = token(bytes, pos).ok_or_else(|| corrupt("missing width"))?;
    let (h, pos) = token(bytes, pos).ok_or_else(|| corrupt("missing height"))?;
    let (scale, pos) = token(bytes, pos).ok_or_else(|| corrupt("missing scale"))?;
    let width: usize = w.parse().map_err(|_| corrupt("bad width"))?;
    let height: usize = h.parse().map_err(|_| corrupt("bad height"))?;
    let scale: f64 = scale.parse().map_err(|_| corrupt("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(corrupt("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(corrupt("scale must be non-zero and finite"));
    }
    let endian = if scale < 0.0 { Endian::Little } else { Endian::Big };
    let payload = &bytes[pos..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    if payload.len() != expected {
        return Err(corrupt(&format!(
            "expected {expected} payload bytes for {width}x{height}, found {}",
            payload.len()
        )));
    }
    let mut values = vec![0.0f64; width * height];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("chunk of four bytes");
        let v = match endian {
            Endian::Little => f32::from_le_bytes(raw),
            Endian::Big => f32::from_be_bytes(raw),
        };
        // File rows run bottom to top.
        let (file_row, col) = (k / width, k % width);
        values[(height - 1 - file_row) * width + col] = f64::from(v);
    }
    DepthMap::new(width, height, values)
}

/// Encodes with the given byte order. Values are narrowed to `f32`; invalid
/// pixels are written as NaN.
pub fn encode(depth: &DepthMap, endian: Endian) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let scale = match endian {
        Endian::Little => "-1.0",
        Endian::Big => "1.0",
    };
    let mut out = format!("Pf\n{w} {h}\n{scale}\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let v = depth.get(row, col) as f32;
            match endian {
                Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
                Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
            }
        }
    }
    out
}
