//! Binary PPM (P6) color images and 16-bit PGM (P5) label maps.

use std::path::Path;

use super::header::HeaderCursor;
use crate::error::{Error, Result};
use crate::grid::RgbImage;

/// Label raster as read from a P5 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

struct PnmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8]) -> Result<PnmHeader> {
    let mut cur = HeaderCursor::new(bytes);
    let m = cur.token()?;
    if m != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(m)
            ),
        });
    }
    let width = cur.usize_field("width")?;
    let height = cur.usize_field("height")?;
    let max_at = cur.offset();
    let maxval = cur.usize_field("maxval")?;
    cur.single_whitespace()?;
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: max_at,
            message: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format {
            offset: max_at,
            message: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    Ok(PnmHeader {
        width,
        height,
        maxval,
        data_start: cur.offset(),
    })
}

fn samples(bytes: &[u8], hdr: &PnmHeader, per_pixel: usize) -> Result<Vec<u32>> {
    let wide = hdr.maxval > 255;
    let n = hdr.width * hdr.height * per_pixel;
    let need = if wide { n * 2 } else { n };
    let data = &bytes[hdr.data_start..];
    if data.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!(
                "truncated payload: expected {need} bytes, found {}",
                data.len()
            ),
        });
    }
    let out: Vec<u32> = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    } else {
        data[..need].iter().map(|&b| b as u32).collect()
    };
    if let Some(pos) = out.iter().position(|&v| v as usize > hdr.maxval) {
        let offset = hdr.data_start + if wide { pos * 2 } else { pos };
        return Err(Error::Format {
            offset,
            message: format!("sample {} exceeds maxval {}", out[pos], hdr.maxval),
        });
    }
    Ok(out)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let hdr = parse_header(bytes, b"P6")?;
    let raw = samples(bytes, &hdr, 3)?;
    let scale = hdr.maxval as f64;
    let data = raw
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / scale, c[1] as f64 / scale, c[2] as f64 / scale])
        .collect();
    RgbImage::new(hdr.height, hdr.width, data)
}

/// Encode with maxval 255.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for px in img.pixels() {
        for &v in px {
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn decode_label_map(bytes: &[u8]) -> Result<LabelMap> {
    let hdr = parse_header(bytes, b"P5")?;
    let labels = samples(bytes, &hdr, 1)?;
    Ok(LabelMap {
        height: hdr.height,
        width: hdr.width,
        labels,
    })
}

/// Encode as P5 with maxval 65535.
pub fn encode_label_map(map: &LabelMap) -> Result<Vec<u8>> {
    if map.labels.len() != map.height * map.width {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {}x{}",
            map.labels.len(),
            map.height,
            map.width
        )));
    }
    let mut out = format!("P5\n{} {}\n65535\n", map.width, map.height).into_bytes();
    out.reserve(map.labels.len() * 2);
    for &l in &map.labels {
        let v = u16::try_from(l).map_err(|_| {
            Error::InvalidInput(format!("label {l} does not fit in 16 bits"))
        })?;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_map(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_label_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_label_map(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
