//! 16-bit grayscale PNG depth, mapped to depth units as `(raw − offset)·scale`.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::DepthMap;

const SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

pub fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(SIGNATURE)
}

/// Linear mapping from stored 16-bit codes to depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PngScaling {
    pub scale: f64,
    pub offset: f64,
}

impl PngScaling {
    pub fn apply(&self, raw: u16) -> f64 {
        (f64::from(raw) - self.offset) * self.scale
    }
}

pub fn decode(bytes: &[u8], scaling: PngScaling, path: &Path) -> Result<DepthMap> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat(format!(
            "PNG depth must be 16-bit grayscale, found {color:?} at {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let values = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|b| scaling.apply(u16::from_be_bytes([b[0], b[1]])))
        .collect();
    DepthMap::new(width, height, values)
}

/// Encodes raw 16-bit codes (row-major) as a grayscale PNG.
pub fn encode(width: usize, height: usize, codes: &[u16]) -> Result<Vec<u8>> {
    if codes.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: format!("{} codes", width * height),
            got: codes.len().to_string(),
        });
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let data: Vec<u8> = codes.iter().flat_map(|c| c.to_be_bytes()).collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_mapping() {
        let bytes = encode(2, 1, &[1234, 0]).unwrap();
        let s = PngScaling {
            scale: 0.001,
            offset: 0.0,
        };
        let d = decode(&bytes, s, Path::new("d.png")).unwrap();
        assert!((d.get(0, 0) - 1.234).abs() < 1e-15);
        assert_eq!(d.get(0, 1), 0.0);

        let shifted = PngScaling {
            scale: 0.5,
            offset: 1000.0,
        };
        assert_eq!(decode(&bytes, shifted, Path::new("d.png")).unwrap().get(0, 0), 117.0);
    }

    #[test]
    fn eight_bit_rejected() {
        let mut out = Vec::new();
        {
            let mut e = png::Encoder::new(&mut out, 1, 1);
            e.set_color(png::ColorType::Grayscale);
            e.set_depth(png::BitDepth::Eight);
            e.write_header().unwrap().write_image_data(&[7]).unwrap();
        }
        let s = PngScaling {
            scale: 1.0,
            offset: 0.0,
        };
        assert!(matches!(
            decode(&out, s, Path::new("e.png")),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
