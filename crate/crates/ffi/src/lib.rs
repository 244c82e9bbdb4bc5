//! C ABI over the `sparsedepth` library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `sd_*_new`/`sd_*_read*` function and released with the matching
//! `sd_*_free`. Fallible calls return an [`SdStatus`]; the message for the
//! most recent failure on the calling thread is available from
//! [`sd_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sparsedepth::io::{
    read_config, read_float_map, read_ppm, read_seeds, write_float_map, PipelineConfig,
};
use sparsedepth::pipeline::{run_pipeline, PipelineInputs, StageOptions};
use sparsedepth::segmentation::SegmentMap;
use sparsedepth::{evaluate, Error, RgbImage, ScalarGrid, Seed, SeedSet};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Malformed or inconsistent input (bad shape, bad value, bad file).
    Input = 2,
    /// The solver failed to converge.
    Numerical = 3,
    /// Evaluation found no pixel inside the mask.
    EmptyMask = 4,
    /// A file could not be read or written.
    Io = 5,
    /// The library panicked; this is a bug.
    Panic = 6,
}

/// Skip the pixel-wise refinement stage.
pub const SD_NO_REFINE: u32 = 1;
/// Skip graph propagation; unseeded segments take one global fit.
pub const SD_NO_GRAPH: u32 = 2;

/// Dense depth-like raster with a validity mask.
pub struct SdGrid(ScalarGrid);
/// RGB image with intensities in [0, 1].
pub struct SdImage(RgbImage);
/// Sparse metric seeds.
pub struct SdSeeds(SeedSet);
/// Pipeline parameters.
pub struct SdConfig(PipelineConfig);

/// Evaluation metrics, mirroring the library report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SdMetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub absrel: f64,
    pub sqrel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub silog: f64,
    pub valid_count: usize,
    pub clamped: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> SdStatus {
    match e.root() {
        Error::Numerical(_) => SdStatus::Numerical,
        Error::EmptyMask => SdStatus::EmptyMask,
        Error::Io { .. } => SdStatus::Io,
        _ => SdStatus::Input,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("{name} is null"));
            SdStatus::NullArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SdStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn non_null_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn path_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidInput(format!("{name} is not valid UTF-8"))))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = non_null_mut(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a grid from `height·width` row-major values. `valid` may be null
/// (every finite value is valid); otherwise nonzero bytes mark valid pixels.
///
/// # Safety
/// `values` must point to `height·width` doubles and `valid`, when non-null,
/// to as many bytes. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_new(
    height: usize,
    width: usize,
    values: *const f64,
    valid: *const u8,
    out: *mut *mut SdGrid,
) -> SdStatus {
    guard(|| {
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::InvalidInput("grid size overflows".into()))?;
        let vals = std::slice::from_raw_parts(values, n).to_vec();
        let mask = if valid.is_null() {
            vec![true; n]
        } else {
            std::slice::from_raw_parts(valid, n).iter().map(|&b| b != 0).collect()
        };
        let grid = ScalarGrid::from_parts(height, width, vals, mask)?;
        emit(out, SdGrid(grid))
    })
}

/// Read a PFM float map (with its optional no-data sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_read_pfm(path: *const c_char, out: *mut *mut SdGrid) -> SdStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, SdGrid(read_float_map(path)?))
    })
}

/// Write a grid as PFM.
///
/// # Safety
/// `grid` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_write_pfm(grid: *const SdGrid, path: *const c_char) -> SdStatus {
    guard(|| {
        let grid = non_null(grid, "grid")?;
        let path = path_arg(path, "path")?;
        write_float_map(path, &grid.0)?;
        Ok(())
    })
}

/// Grid dimensions.
///
/// # Safety
/// `grid` must come from this library; `height` and `width` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_shape(
    grid: *const SdGrid,
    height: *mut usize,
    width: *mut usize,
) -> SdStatus {
    guard(|| {
        let grid = non_null(grid, "grid")?;
        *non_null_mut(height, "height")? = grid.0.height();
        *non_null_mut(width, "width")? = grid.0.width();
        Ok(())
    })
}

/// Copy values out in row-major order; invalid pixels read as NaN. `valid`
/// may be null. `len` must equal `height·width`.
///
/// # Safety
/// `values` (and `valid` when non-null) must have room for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_copy(
    grid: *const SdGrid,
    values: *mut f64,
    valid: *mut u8,
    len: usize,
) -> SdStatus {
    guard(|| {
        let grid = &non_null(grid, "grid")?.0;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        if len != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "buffer holds {len} values but grid has {}",
                grid.len()
            ))
            .into());
        }
        let dst = std::slice::from_raw_parts_mut(values, len);
        for (i, d) in dst.iter_mut().enumerate() {
            *d = if grid.valid_mask()[i] { grid.values()[i] } else { f64::NAN };
        }
        if !valid.is_null() {
            let flags = std::slice::from_raw_parts_mut(valid, len);
            for (f, &ok) in flags.iter_mut().zip(grid.valid_mask()) {
                *f = u8::from(ok);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sd_grid_free(grid: *mut SdGrid) {
    free(grid)
}

/// Create an image from `3·height·width` interleaved RGB doubles in [0, 1].
///
/// # Safety
/// `rgb` must point to `3·height·width` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_image_new(
    height: usize,
    width: usize,
    rgb: *const f64,
    out: *mut *mut SdImage,
) -> SdStatus {
    guard(|| {
        if rgb.is_null() {
            return Err(Failure::Null("rgb"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::InvalidInput("image size overflows".into()))?;
        let data = std::slice::from_raw_parts(rgb, n)
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        emit(out, SdImage(RgbImage::new(height, width, data)?))
    })
}

/// Read a binary PPM image.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_image_read_ppm(path: *const c_char, out: *mut *mut SdImage) -> SdStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, SdImage(read_ppm(path)?))
    })
}

/// # Safety
/// `image` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sd_image_free(image: *mut SdImage) {
    free(image)
}

/// Create an empty seed set.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_seeds_new(out: *mut *mut SdSeeds) -> SdStatus {
    guard(|| emit(out, SdSeeds(SeedSet::new())))
}

/// Add a seed. Fails on a non-positive depth or a repeated pixel.
///
/// # Safety
/// `seeds` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn sd_seeds_push(
    seeds: *mut SdSeeds,
    row: usize,
    col: usize,
    depth: f64,
) -> SdStatus {
    guard(|| {
        let seeds = non_null_mut(seeds, "seeds")?;
        seeds.0.push(Seed { row, col, value: depth })?;
        Ok(())
    })
}

/// Number of seeds, or 0 for a null handle.
///
/// # Safety
/// `seeds` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sd_seeds_len(seeds: *const SdSeeds) -> usize {
    seeds.as_ref().map_or(0, |s| s.0.len())
}

/// Read a `row,col,depth` CSV seed file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_seeds_read_csv(path: *const c_char, out: *mut *mut SdSeeds) -> SdStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, SdSeeds(read_seeds(path)?))
    })
}

/// # Safety
/// `seeds` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sd_seeds_free(seeds: *mut SdSeeds) {
    free(seeds)
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_config_new(out: *mut *mut SdConfig) -> SdStatus {
    guard(|| emit(out, SdConfig(PipelineConfig::default())))
}

/// Read a `key = value` configuration file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_config_read(path: *const c_char, out: *mut *mut SdConfig) -> SdStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, SdConfig(read_config(path)?))
    })
}

/// Set one configuration key from its text form, e.g. `("knn", "6")`.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sd_config_set(
    config: *mut SdConfig,
    key: *const c_char,
    value: *const c_char,
) -> SdStatus {
    guard(|| {
        let config = non_null_mut(config, "config")?;
        let key = path_arg(key, "key")?;
        let value = path_arg(value, "value")?;
        let mut next = config.0.clone();
        next.set(key, value)?;
        next.validate()?;
        config.0 = next;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sd_config_free(config: *mut SdConfig) {
    free(config)
}

/// Run the full pipeline and return the metric depth. `config` may be null
/// for defaults; `flags` combines `SD_NO_REFINE` and `SD_NO_GRAPH`.
/// `labels` may be null to segment the image internally; otherwise it holds
/// one segment label per pixel in row-major order.
///
/// # Safety
/// Handles must come from this library; `labels`, when non-null, must point
/// to `height·width` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_run_pipeline(
    image: *const SdImage,
    relative: *const SdGrid,
    seeds: *const SdSeeds,
    config: *const SdConfig,
    labels: *const u32,
    flags: u32,
    out: *mut *mut SdGrid,
) -> SdStatus {
    guard(|| {
        let image = non_null(image, "image")?;
        let relative = non_null(relative, "relative")?;
        let seeds = non_null(seeds, "seeds")?;
        let default_cfg;
        let cfg = match config.as_ref() {
            Some(c) => &c.0,
            None => {
                default_cfg = PipelineConfig::default();
                &default_cfg
            }
        };
        let segments = if labels.is_null() {
            None
        } else {
            let (h, w) = relative.0.shape();
            let raw = std::slice::from_raw_parts(labels, h * w);
            Some(SegmentMap::from_labels(h, w, raw)?)
        };
        let inputs = PipelineInputs {
            rgb: &image.0,
            relative: &relative.0,
            seeds: &seeds.0,
            segments: segments.as_ref(),
        };
        let opts = StageOptions {
            refine: flags & SD_NO_REFINE == 0,
            graph: flags & SD_NO_GRAPH == 0,
        };
        let result = run_pipeline(&inputs, cfg, opts)?;
        emit(out, SdGrid(result.depth))
    })
}

/// Compare `pred` to `gt` over pixels with `gt ∈ (min_depth, max_depth]`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_evaluate(
    pred: *const SdGrid,
    gt: *const SdGrid,
    min_depth: f64,
    max_depth: f64,
    out: *mut SdMetricReport,
) -> SdStatus {
    guard(|| {
        let pred = non_null(pred, "pred")?;
        let gt = non_null(gt, "gt")?;
        let slot = non_null_mut(out, "out")?;
        let r = evaluate(&pred.0, &gt.0, min_depth, max_depth)?;
        *slot = SdMetricReport {
            rmse: r.rmse,
            mae: r.mae,
            absrel: r.absrel,
            sqrel: r.sqrel,
            delta1: r.delta1,
            delta2: r.delta2,
            delta3: r.delta3,
            silog: r.silog,
            valid_count: r.valid_count,
            clamped: r.clamped,
        };
        Ok(())
    })
}
