//! Single-channel Portable Float Map (`Pf`).
//!
//! Rows are stored bottom-up as 32-bit floats; a negative scale token marks
//! little-endian data. Missing pixels are written as 0. A sidecar file
//! `<path>.nodata` next to the map declares that zeros mean "no data";
//! without it every finite pixel is valid.

use std::path::{Path, PathBuf};

use super::header::HeaderCursor;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// Sidecar flag path for a float map.
pub fn nodata_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".nodata");
    PathBuf::from(s)
}

/// Read a float map, honoring the `.nodata` sidecar.
pub fn read_float_map(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let zero_is_missing = nodata_sidecar(path).exists();
    decode_float_map(&bytes, zero_is_missing).map_err(|e| e.in_file(path))
}

/// Write a float map (little-endian). Creates the `.nodata` sidecar when the
/// grid has invalid pixels and removes a stale one otherwise.
pub fn write_float_map(path: impl AsRef<Path>, grid: &ScalarGrid) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_float_map(grid)).map_err(|e| Error::io(path, e))?;
    let sidecar = nodata_sidecar(path);
    if grid.valid_count() < grid.len() {
        std::fs::write(&sidecar, b"0\n").map_err(|e| Error::io(&sidecar, e))?;
    } else if sidecar.exists() {
        std::fs::remove_file(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}

pub fn encode_float_map(grid: &ScalarGrid) -> Vec<u8> {
    let (h, w) = grid.shape();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for r in (0..h).rev() {
        for c in 0..w {
            let v = grid.get(r, c).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decode a `Pf` payload. With `zero_is_missing`, exact zeros become invalid.
pub fn decode_float_map(bytes: &[u8], zero_is_missing: bool) -> Result<ScalarGrid> {
    let mut cur = HeaderCursor::new(bytes);
    let magic = cur.token()?;
    if magic != b"Pf" {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "expected magic \"Pf\", found {:?}",
                String::from_utf8_lossy(magic)
            ),
        });
    }
    let width = cur.usize_field("width")?;
    let height = cur.usize_field("height")?;
    let scale_at = cur.offset();
    let scale: f64 = cur.parse_field("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format {
            offset: scale_at,
            message: format!("scale must be finite and non-zero, got {scale}"),
        });
    }
    cur.single_whitespace()?;
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: scale_at,
            message: format!("zero dimension {width}x{height}"),
        });
    }
    let little_endian = scale < 0.0;
    let start = cur.offset();
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format {
            offset: start,
            message: "dimensions overflow".into(),
        })?;
    let data = &bytes[start..];
    if data.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!(
                "truncated payload: expected {need} bytes of float data, found {}",
                data.len()
            ),
        });
    }

    let mut values = vec![0.0; width * height];
    let mut valid = vec![false; width * height];
    for (k, chunk) in data[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = k / width;
        let c = k % width;
        let idx = (height - 1 - file_row) * width + c;
        values[idx] = v as f64;
        valid[idx] = v.is_finite() && !(zero_is_missing && v == 0.0);
    }
    ScalarGrid::from_parts(height, width, values, valid)
}
