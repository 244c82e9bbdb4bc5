//! Dense rasters and sparse seed lists shared by every stage.
//!
//! Grids are stored row-major. Columns run along `u`, rows along `v`.

use crate::error::{Error, Result};

/// H×W grid of reals with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl ScalarGrid {
    /// Grid filled with `value`, every pixel valid.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        check_dims(height, width)?;
        Self::from_parts(
            height,
            width,
            vec![value; height * width],
            vec![value.is_finite(); height * width],
        )
    }

    /// Grid with every pixel invalid.
    pub fn invalid(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            values: vec![0.0; height * width],
            valid: vec![false; height * width],
        })
    }

    /// All finite values are marked valid.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::from_parts(height, width, values, valid)
    }

    /// Build from explicit values and mask. Non-finite values are forced invalid.
    pub fn from_parts(
        height: usize,
        width: usize,
        mut values: Vec<f64>,
        mut valid: Vec<bool>,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let n = height * width;
        if values.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} values for {height}x{width}, got {} values and {} flags",
                values.len(),
                valid.len()
            )));
        }
        for (v, ok) in values.iter_mut().zip(valid.iter_mut()) {
            if !v.is_finite() {
                *ok = false;
                *v = 0.0;
            }
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::from_values(height, width, values)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Raw value, regardless of validity.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[self.index(row, col)]
    }

    /// Value if valid.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.valid[i].then(|| self.values[i])
    }

    /// Store a value; non-finite values invalidate the pixel.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.set_at(i, value);
    }

    #[inline]
    pub fn set_at(&mut self, idx: usize, value: f64) {
        if value.is_finite() {
            self.values[idx] = value;
            self.valid[idx] = true;
        } else {
            self.values[idx] = 0.0;
            self.valid[idx] = false;
        }
    }

    #[inline]
    pub fn invalidate(&mut self, row: usize, col: usize) {
        let i = self.index(row, col);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Iterate `(row, col, value)` over valid pixels in raster order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(move |(i, (v, _))| (i / w, i % w, *v))
    }

    /// Min and max over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.iter_valid().fold(None, |acc, (_, _, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Pointwise map over valid pixels; invalid pixels stay invalid.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> f64) -> ScalarGrid {
        let mut out = ScalarGrid {
            height: self.height,
            width: self.width,
            values: vec![0.0; self.len()],
            valid: vec![false; self.len()],
        };
        for i in 0..self.len() {
            if self.valid[i] {
                out.set_at(i, f(self.values[i]));
            }
        }
        out
    }

    pub fn same_shape(&self, other: &ScalarGrid) -> bool {
        self.shape() == other.shape()
    }
}

/// RGB image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .flatten()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(height, width, vec![rgb; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        self.data[row * self.width + col]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    /// Rec. 601 luma per pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }
}

/// A metric depth measurement projected onto a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub row: usize,
    pub col: usize,
    /// Metric depth in meters.
    pub value: f64,
}

/// Sparse seeds with unique coordinates and positive finite depths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedSet {
    entries: Vec<Seed>,
}

impl SeedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = Seed>) -> Result<Self> {
        let mut set = Self::new();
        for s in entries {
            set.push(s)?;
        }
        Ok(set)
    }

    /// Append a seed, rejecting non-positive depths and duplicate coordinates.
    pub fn push(&mut self, seed: Seed) -> Result<()> {
        if !(seed.value.is_finite() && seed.value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "seed ({}, {}) has non-positive or non-finite depth {}",
                seed.row, seed.col, seed.value
            )));
        }
        if self.contains(seed.row, seed.col) {
            return Err(Error::InvalidInput(format!(
                "duplicate seed at ({}, {})",
                seed.row, seed.col
            )));
        }
        self.entries.push(seed);
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.iter().any(|s| s.row == row && s.col == col)
    }

    pub fn entries(&self) -> &[Seed] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Seed> {
        self.entries.iter()
    }

    /// Every seed must fall inside a `height`×`width` grid.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|s| s.row >= height || s.col >= width)
        {
            Some(s) => Err(Error::InvalidInput(format!(
                "seed ({}, {}) outside {height}x{width} grid",
                s.row, s.col
            ))),
            None => Ok(()),
        }
    }

    /// Pixel coordinates as `(row, col)`.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|s| (s.row, s.col)).collect()
    }
}

impl<'a> IntoIterator for &'a SeedSet {
    type Item = &'a Seed;
    type IntoIter = std::slice::Iter<'a, Seed>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::DegenerateSize {
            height,
            width,
            min: 1,
        });
    }
    Ok(())
}

/// Central second differences `(z_uu, z_vv)`.
///
/// `z_uu` differences along columns, `z_vv` along rows. Border pixels reuse
/// the stencil of the nearest interior pixel (the differences themselves are
/// replicated outward), so affine grids give zero everywhere. An output pixel
/// is invalid if any of the three samples it reads is invalid.
pub fn second_differences(g: &ScalarGrid) -> Result<(ScalarGrid, ScalarGrid)> {
    let (h, w) = g.shape();
    if h < 3 || w < 3 {
        return Err(Error::DegenerateSize {
            height: h,
            width: w,
            min: 3,
        });
    }
    let mut zuu = ScalarGrid::invalid(h, w)?;
    let mut zvv = ScalarGrid::invalid(h, w)?;
    for r in 0..h {
        let rm = r.clamp(1, h - 2);
        for c in 0..w {
            let cm = c.clamp(1, w - 2);
            if let (Some(a), Some(m), Some(b)) = (g.get(r, cm - 1), g.get(r, cm), g.get(r, cm + 1)) {
                zuu.set(r, c, a - 2.0 * m + b);
            }
            if let (Some(a), Some(m), Some(b)) = (g.get(rm - 1, c), g.get(rm, c), g.get(rm + 1, c)) {
                zvv.set(r, c, a - 2.0 * m + b);
            }
        }
    }
    Ok((zuu, zvv))
}
