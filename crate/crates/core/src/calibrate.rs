//! Per-segment calibration of relative depth against metric seeds.
//!
//! Metric depth `z` is mapped to a proxy `ξ = κ / (z + ε)` (inverse-depth
//! like), in which the relation to relative depth `d` is modelled per
//! segment as `g(x) = max(a·x + b, d_min)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{RgbImage, ScalarGrid, SeedSet};
use crate::io::PipelineConfig;
use crate::segmentation::SegmentMap;

/// `ξ = κ / (z + ε)`.
pub fn depth_to_proxy(z: f64, kappa: f64, epsilon: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidInput(format!(
            "depth must be positive and finite, got {z}"
        )));
    }
    Ok(kappa / (z + epsilon))
}

/// `z = κ / ξ − ε`, clamped below at zero.
pub fn proxy_to_depth(xi: f64, kappa: f64, epsilon: f64) -> Result<f64> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::InvalidInput(format!(
            "proxy must be positive and finite, got {xi}"
        )));
    }
    Ok((kappa / xi - epsilon).max(0.0))
}

/// Domain in which segments are calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthDomain {
    /// Inverse-depth proxy `κ / (z + ε)`.
    #[default]
    Inverse,
    /// Metric depth used directly.
    Depth,
}

impl DepthDomain {
    pub fn to_proxy(self, z: f64, kappa: f64, epsilon: f64) -> Result<f64> {
        match self {
            DepthDomain::Inverse => depth_to_proxy(z, kappa, epsilon),
            DepthDomain::Depth if z.is_finite() && z > 0.0 => Ok(z),
            DepthDomain::Depth => Err(Error::InvalidInput(format!(
                "depth must be positive and finite, got {z}"
            ))),
        }
    }

    pub fn to_depth(self, xi: f64, kappa: f64, epsilon: f64) -> Result<f64> {
        match self {
            DepthDomain::Inverse => proxy_to_depth(xi, kappa, epsilon),
            DepthDomain::Depth if xi.is_finite() && xi > 0.0 => Ok(xi),
            DepthDomain::Depth => Err(Error::InvalidInput(format!(
                "proxy must be positive and finite, got {xi}"
            ))),
        }
    }
}

impl fmt::Display for DepthDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepthDomain::Inverse => "inverse",
            DepthDomain::Depth => "depth",
        })
    }
}

impl FromStr for DepthDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(DepthDomain::Inverse),
            "depth" => Ok(DepthDomain::Depth),
            other => Err(Error::Config(format!("unknown domain {other:?}"))),
        }
    }
}

/// How a segment's affine calibration is estimated from its seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    #[default]
    LeastSquares,
    Median,
    Mean,
    Moment,
    Quantile,
}

impl FitMode {
    pub const ALL: [FitMode; 5] = [
        FitMode::LeastSquares,
        FitMode::Median,
        FitMode::Mean,
        FitMode::Moment,
        FitMode::Quantile,
    ];
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::LeastSquares => "least_squares",
            FitMode::Median => "median",
            FitMode::Mean => "mean",
            FitMode::Moment => "moment",
            FitMode::Quantile => "quantile",
        })
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FitMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown fit mode {s:?}")))
    }
}

/// Affine calibration `ξ ≈ a·d + b` of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibParams {
    pub a: f64,
    pub b: f64,
    /// Fitted directly from seeds inside the segment.
    pub anchored: bool,
}

impl CalibParams {
    pub fn anchored(a: f64, b: f64) -> Self {
        Self { a, b, anchored: true }
    }

    pub fn unanchored() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            anchored: false,
        }
    }

    /// `max(a·x + b, d_min)`.
    #[inline]
    pub fn apply(&self, x: f64, d_min: f64) -> f64 {
        (self.a * x + self.b).max(d_min)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
fn sample_std(xs: &[f64], mu: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - mu).powi(2)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Ratio scaling `a = num/den, b = 0`; a zero denominator yields the constant
/// map `b = num`.
fn ratio_scaling(num: f64, den: f64) -> (f64, f64) {
    if den == 0.0 {
        (0.0, num)
    } else {
        (num / den, 0.0)
    }
}

fn is_spread(d: &[f64]) -> bool {
    if d.len() < 2 {
        return false;
    }
    let mu = mean(d);
    let sxx: f64 = d.iter().map(|x| (x - mu).powi(2)).sum();
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    sxx > d.len() as f64 * (16.0 * f64::EPSILON * scale).powi(2)
}

/// Fit one segment's calibration from paired relative depths and proxies.
///
/// Least squares, moment and quantile matching need spread in `d`; with a
/// single sample or constant `d` they fall back to mean scaling.
pub fn fit_segment(d: &[f64], xi: &[f64], mode: FitMode) -> Result<CalibParams> {
    if d.is_empty() {
        return Err(Error::InvalidInput("no calibration samples".into()));
    }
    if d.len() != xi.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} relative depths vs {} proxies",
            d.len(),
            xi.len()
        )));
    }
    if let Some(bad) = xi.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "proxy samples must be positive and finite, got {bad}"
        )));
    }
    if let Some(bad) = d.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "relative depth samples must be finite, got {bad}"
        )));
    }

    let needs_spread = matches!(
        mode,
        FitMode::LeastSquares | FitMode::Moment | FitMode::Quantile
    );
    let mode = if needs_spread && !is_spread(d) {
        FitMode::Mean
    } else {
        mode
    };

    let (a, b) = match mode {
        FitMode::LeastSquares => {
            let (md, mx) = (mean(d), mean(xi));
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (&x, &y) in d.iter().zip(xi) {
                sxy += (x - md) * (y - mx);
                sxx += (x - md) * (x - md);
            }
            let a = sxy / sxx;
            (a, mx - a * md)
        }
        FitMode::Moment => {
            let (md, mx) = (mean(d), mean(xi));
            let a = sample_std(xi, mx) / sample_std(d, md);
            (a, mx - a * md)
        }
        FitMode::Quantile => {
            let (sd, sx) = (sorted(d), sorted(xi));
            let iqr_d = quantile(&sd, 0.75) - quantile(&sd, 0.25);
            if iqr_d == 0.0 {
                ratio_scaling(mean(xi), mean(d))
            } else {
                let a = (quantile(&sx, 0.75) - quantile(&sx, 0.25)) / iqr_d;
                (a, quantile(&sx, 0.5) - a * quantile(&sd, 0.5))
            }
        }
        FitMode::Median => ratio_scaling(quantile(&sorted(xi), 0.5), quantile(&sorted(d), 0.5)),
        FitMode::Mean => ratio_scaling(mean(xi), mean(d)),
    };
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical(format!(
            "calibration fit produced non-finite parameters ({a}, {b})"
        )));
    }
    Ok(CalibParams::anchored(a, b))
}

/// Pixel grid of calibrated proxy values; invalid pixels have no calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMap {
    grid: ScalarGrid,
}

impl TransferMap {
    pub fn from_grid(grid: ScalarGrid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.grid
    }
}

/// Result of calibrating the seeded segments.
#[derive(Debug, Clone)]
pub struct AnchoredCalibration {
    pub transfer: TransferMap,
    /// One entry per segment; unanchored segments carry placeholder zeros.
    pub params: Vec<CalibParams>,
    /// Seeds that landed on invalid relative depth and were ignored.
    pub dropped_seeds: usize,
}

impl AnchoredCalibration {
    pub fn anchor_count(&self) -> usize {
        self.params.iter().filter(|p| p.anchored).count()
    }
}

/// `(relative, proxy)` sample columns for one segment.
pub(crate) type SegmentSamples = (Vec<f64>, Vec<f64>);

/// Relative depth and proxy pairs at the usable seeds, grouped by segment.
pub(crate) fn seed_samples(
    d: &ScalarGrid,
    seeds: &SeedSet,
    seg: &SegmentMap,
    cfg: &PipelineConfig,
) -> Result<(Vec<SegmentSamples>, usize)> {
    if d.shape() != seg.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relative depth is {}x{} but segments are {}x{}",
            d.height(),
            d.width(),
            seg.height(),
            seg.width()
        )));
    }
    seeds.check_bounds(d.height(), d.width())?;
    let mut groups = vec![(Vec::new(), Vec::new()); seg.len()];
    let mut dropped = 0;
    for s in seeds {
        match d.get(s.row, s.col) {
            Some(dv) => {
                let xi = cfg.domain.to_proxy(s.value, cfg.kappa, cfg.epsilon)?;
                let g = &mut groups[seg.label(s.row, s.col)];
                g.0.push(dv);
                g.1.push(xi);
            }
            None => dropped += 1,
        }
    }
    Ok((groups, dropped))
}

/// Fit every segment that contains at least one usable seed and paint its
/// calibrated proxy `g(d(p))` into the transfer map.
pub fn calibrate_anchored(
    d: &ScalarGrid,
    seeds: &SeedSet,
    seg: &SegmentMap,
    cfg: &PipelineConfig,
) -> Result<AnchoredCalibration> {
    let (groups, dropped) = seed_samples(d, seeds, seg, cfg)?;
    if dropped > 0 {
        log::warn!("{dropped} seed(s) fall on invalid relative depth and were dropped");
    }
    let params = groups
        .par_iter()
        .map(|(ds, xs)| {
            if ds.is_empty() {
                Ok(CalibParams::unanchored())
            } else {
                fit_segment(ds, xs, cfg.fit_mode)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut transfer = ScalarGrid::invalid(d.height(), d.width())?;
    for (id, p) in params.iter().enumerate() {
        if !p.anchored {
            continue;
        }
        for &idx in seg.pixels(id) {
            if d.valid_mask()[idx] {
                transfer.set_at(idx, p.apply(d.values()[idx], cfg.d_min));
            }
        }
    }
    Ok(AnchoredCalibration {
        transfer: TransferMap::from_grid(transfer),
        params,
        dropped_seeds: dropped,
    })
}

/// Iterated bilateral soft-min over defined transfer values:
/// `T'(p) = −log( Σ k(q)·exp(−T(q)) / Σ k(q) )` with
/// `k(q) = exp(−|p−q|²/2σ₁² − (Y(p)−Y(q))²/2σ₂²)`, `Y` the luma of the image,
/// over a square window of half-width ⌈2σ₁⌉ restricted to defined pixels.
/// Undefined pixels with a defined neighbor acquire a value.
pub fn bilateral_suppress(
    t: &TransferMap,
    img: &RgbImage,
    cfg: &PipelineConfig,
) -> Result<TransferMap> {
    let grid = t.grid();
    if grid.shape() != img.shape() {
        return Err(Error::ShapeMismatch(format!(
            "transfer map is {}x{} but image is {}x{}",
            grid.height(),
            grid.width(),
            img.height(),
            img.width()
        )));
    }
    let (h, w) = grid.shape();
    let luma = img.luminance();
    let radius = (2.0 * cfg.sigma_spatial).ceil() as isize;
    let inv_s1 = 1.0 / (2.0 * cfg.sigma_spatial * cfg.sigma_spatial);
    let inv_s2 = 1.0 / (2.0 * cfg.sigma_range * cfg.sigma_range);

    let side = (2 * radius + 1) as usize;
    let spatial: Vec<f64> = (0..side * side)
        .map(|k| {
            let dr = (k / side) as isize - radius;
            let dc = (k % side) as isize - radius;
            -((dr * dr + dc * dc) as f64) * inv_s1
        })
        .collect();

    let mut cur = grid.clone();
    for _ in 0..cfg.bilateral_iters {
        let prev = &cur;
        let vals = prev.values();
        let mask = prev.valid_mask();
        let Some((gmin, _)) = prev.valid_range() else {
            break;
        };
        // e^{−(t − min t)}; windows far above the global minimum underflow
        // here and take the shifted path instead
        let expo: Vec<f64> = vals
            .iter()
            .zip(mask)
            .map(|(&t, &ok)| if ok { (gmin - t).exp() } else { 0.0 })
            .collect();
        let rows: Vec<Vec<Option<f64>>> = (0..h)
            .into_par_iter()
            .map(|r| {
                let mut scratch = Vec::new();
                (0..w)
                    .map(|c| {
                        let yp = luma[r * w + c];
                        let r0 = (r as isize - radius).max(0) as usize;
                        let r1 = (r as isize + radius).min(h as isize - 1) as usize;
                        let c0 = (c as isize - radius).max(0) as usize;
                        let c1 = (c as isize + radius).min(w as isize - 1) as usize;
                        let (mut num, mut den) = (0.0, 0.0);
                        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                        let mut any = false;
                        for rr in r0..=r1 {
                            let krow = (rr as isize - r as isize + radius) as usize * side;
                            for cc in c0..=c1 {
                                let q = rr * w + cc;
                                if !mask[q] {
                                    continue;
                                }
                                let dy = yp - luma[q];
                                let ks = spatial[krow + (cc as isize - c as isize + radius) as usize];
                                let k = (ks - dy * dy * inv_s2).exp();
                                den += k;
                                num += k * expo[q];
                                lo = lo.min(vals[q]);
                                hi = hi.max(vals[q]);
                                any = true;
                            }
                        }
                        if !any {
                            return None;
                        }
                        if num > f64::MIN_POSITIVE && den > f64::MIN_POSITIVE {
                            return Some((gmin - (num / den).ln()).clamp(lo, hi));
                        }
                        scratch.clear();
                        for rr in r0..=r1 {
                            let krow = (rr as isize - r as isize + radius) as usize * side;
                            for cc in c0..=c1 {
                                let q = rr * w + cc;
                                if mask[q] {
                                    let dy = yp - luma[q];
                                    let ks = spatial[krow + (cc as isize - c as isize + radius) as usize];
                                    scratch.push((ks - dy * dy * inv_s2, vals[q]));
                                }
                            }
                        }
                        soft_min(&scratch)
                    })
                    .collect()
            })
            .collect();
        let mut next = ScalarGrid::invalid(h, w)?;
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row.into_iter().enumerate() {
                if let Some(v) = v {
                    next.set(r, c, v);
                }
            }
        }
        cur = next;
    }
    Ok(TransferMap::from_grid(cur))
}

/// `−log(Σ kᵢ e^{−tᵢ} / Σ kᵢ)` from `(log kᵢ, tᵢ)` pairs, computed with
/// shifts so neither sum under- or overflows. Clamped to `[min t, max t]`.
fn soft_min(samples: &[(f64, f64)]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, t)| {
            (lo.min(t), hi.max(t))
        });
    let kmax = samples
        .iter()
        .fold(f64::NEG_INFINITY, |m, &(lk, _)| m.max(lk));
    let (mut num, mut den) = (0.0, 0.0);
    for &(lk, t) in samples {
        let k = (lk - kmax).exp();
        den += k;
        num += k * (-(t - lo)).exp();
    }
    Some((lo - (num / den).ln()).clamp(lo, hi))
}
