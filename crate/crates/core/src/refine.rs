//! Pixel-wise refinement of the coarse metric depth.
//!
//! 1. `potential`: discontinuity density `φ = √(z_uu² + z_vv²)`.
//! 2. `geodesic_dp`: minimum accumulated `Σ ℓ·φ(dest)` over 8-connected pixel
//!    paths from the seeds, by alternating raster sweeps.
//! 3. `refine_depth`: visit pixels in geodesic settle order and blend each
//!    with a local prediction made from its predecessor's neighborhood,
//!    `z ← (1 − 1/(k+1))·z + 1/(k+1)·ẑ` for passes `k = 0..dp_order`.
//!
//! Predictions are made in the residual domain: a small model is fitted to
//! `z − z_coarse` around the predecessor and added back to the coarse depth
//! at the target pixel. Seeds never change.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{second_differences, ScalarGrid, SeedSet};
use crate::io::PipelineConfig;

/// 8-neighborhood offsets `(drow, dcol)`; predecessors index into this.
pub const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

const CAUSAL: [usize; 4] = [0, 1, 2, 3];
const ANTICAUSAL: [usize; 4] = [7, 6, 5, 4];

#[inline]
fn step_length(k: usize) -> f64 {
    let (dr, dc) = NEIGHBORS[k];
    if dr != 0 && dc != 0 {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// Local model family for predictions on the one-step domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    /// `[1, Δu, Δv]`.
    #[default]
    Polynomial,
    /// Degree-1 tensor B-spline over the 3×3 window (bilinear, 4 functions).
    BSpline,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Polynomial => "polynomial",
            Basis::BSpline => "bspline",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polynomial" => Ok(Basis::Polynomial),
            "bspline" => Ok(Basis::BSpline),
            other => Err(Error::Config(format!("unknown basis {other:?}"))),
        }
    }
}

/// Discontinuity potential of a depth map.
///
/// Pixels whose stencil touches an invalid depth (and invalid pixels
/// themselves) get the largest finite potential in the grid, so holes act as
/// walls.
pub fn potential(z: &ScalarGrid) -> Result<ScalarGrid> {
    let (zuu, zvv) = second_differences(z)?;
    let mut phi = ScalarGrid::invalid(z.height(), z.width())?;
    let mut max_phi = 0.0f64;
    for i in 0..z.len() {
        if zuu.valid_mask()[i] && zvv.valid_mask()[i] {
            let v = zuu.values()[i].hypot(zvv.values()[i]);
            if v.is_finite() {
                phi.set_at(i, v);
                max_phi = max_phi.max(v);
            }
        }
    }
    for i in 0..z.len() {
        if !phi.valid_mask()[i] {
            phi.set_at(i, max_phi);
        }
    }
    Ok(phi)
}

/// Central-difference gradient `(z_u, z_v)`; one-sided at borders and next
/// to invalid pixels. Invalid where no difference is available.
pub fn gradient(z: &ScalarGrid) -> Result<(ScalarGrid, ScalarGrid)> {
    let (h, w) = z.shape();
    let mut gu = ScalarGrid::invalid(h, w)?;
    let mut gv = ScalarGrid::invalid(h, w)?;
    let diff = |a: Option<f64>, m: Option<f64>, b: Option<f64>| match (a, m, b) {
        (Some(a), _, Some(b)) => Some(0.5 * (b - a)),
        (None, Some(m), Some(b)) => Some(b - m),
        (Some(a), Some(m), None) => Some(m - a),
        _ => None,
    };
    for r in 0..h {
        for c in 0..w {
            let m = z.get(r, c);
            let left = if c > 0 { z.get(r, c - 1) } else { None };
            let right = if c + 1 < w { z.get(r, c + 1) } else { None };
            let up = if r > 0 { z.get(r - 1, c) } else { None };
            let down = if r + 1 < h { z.get(r + 1, c) } else { None };
            if m.is_some() {
                if let Some(v) = diff(left, m, right) {
                    gu.set(r, c, v);
                }
                if let Some(v) = diff(up, m, down) {
                    gv.set(r, c, v);
                }
            }
        }
    }
    Ok((gu, gv))
}

/// Symmetric first-order remainder
/// `R(p, q) = z(q) − z(p) − ½(∇z(p) + ∇z(q))·(q − p)`
/// from values and gradients; `delta = (Δu, Δv)` is `q − p`.
#[inline]
pub fn symmetric_remainder(
    zp: f64,
    zq: f64,
    grad_p: (f64, f64),
    grad_q: (f64, f64),
    delta: (f64, f64),
) -> f64 {
    zq - zp - 0.5 * ((grad_p.0 + grad_q.0) * delta.0 + (grad_p.1 + grad_q.1) * delta.1)
}

/// `R(p, q)` on a grid with finite-difference gradients. Pixels are
/// `(row, col)`; `None` if either endpoint lacks a value or gradient.
pub fn remainder(
    z: &ScalarGrid,
    grads: &(ScalarGrid, ScalarGrid),
    p: (usize, usize),
    q: (usize, usize),
) -> Option<f64> {
    let (gu, gv) = grads;
    let zp = z.get(p.0, p.1)?;
    let zq = z.get(q.0, q.1)?;
    let gp = (gu.get(p.0, p.1)?, gv.get(p.0, p.1)?);
    let gq = (gu.get(q.0, q.1)?, gv.get(q.0, q.1)?);
    let delta = (q.1 as f64 - p.1 as f64, q.0 as f64 - p.0 as f64);
    Some(symmetric_remainder(zp, zq, gp, gq, delta))
}

/// Geodesic cost from the nearest source and the 8-neighbor predecessor on
/// a minimizing path.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    /// Accumulated cost; invalid where unreachable.
    pub cost: ScalarGrid,
    /// Index into [`NEIGHBORS`] pointing at the predecessor; `None` at
    /// sources and unreachable pixels.
    pub predecessor: Vec<Option<u8>>,
    /// Forward/backward sweep pairs performed.
    pub sweeps: usize,
}

impl GeodesicField {
    /// Flat index of the predecessor of flat pixel `idx`.
    pub fn predecessor_index(&self, idx: usize) -> Option<usize> {
        let k = self.predecessor[idx]? as usize;
        let w = self.cost.width();
        let (dr, dc) = NEIGHBORS[k];
        let r = (idx / w) as isize + dr;
        let c = (idx % w) as isize + dc;
        Some(r as usize * w + c as usize)
    }
}

/// Sweep the 8-neighbor relaxation `cost(p) = min_q cost(q) + ℓ(q,p)·φ(p)`
/// in raster and reverse raster order until no cost changes. Sources start
/// at zero. Invalid `φ` pixels are impassable. At least `min_sweeps` sweep
/// pairs run.
pub fn geodesic_dp(
    phi: &ScalarGrid,
    sources: &[(usize, usize)],
    min_sweeps: usize,
) -> Result<GeodesicField> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    let (h, w) = phi.shape();
    if let Some(&(r, c)) = sources.iter().find(|&&(r, c)| r >= h || c >= w) {
        return Err(Error::InvalidInput(format!(
            "source ({r}, {c}) outside {h}x{w} grid"
        )));
    }
    let mut cost = vec![f64::INFINITY; h * w];
    let mut pred: Vec<Option<u8>> = vec![None; h * w];
    for &(r, c) in sources {
        cost[r * w + c] = 0.0;
    }
    let vals = phi.values();
    let ok = phi.valid_mask();
    let (hi, wi) = (h as isize, w as isize);

    let relax = |cost: &mut [f64], pred: &mut [Option<u8>], r: usize, c: usize, dirs: &[usize]| {
        let p = r * w + c;
        if !ok[p] {
            return false;
        }
        let mut changed = false;
        for &k in dirs {
            let (dr, dc) = NEIGHBORS[k];
            let (qr, qc) = (r as isize + dr, c as isize + dc);
            if qr < 0 || qc < 0 || qr >= hi || qc >= wi {
                continue;
            }
            let q = qr as usize * w + qc as usize;
            let cand = cost[q] + step_length(k) * vals[p];
            if cand < cost[p] {
                cost[p] = cand;
                pred[p] = Some(k as u8);
                changed = true;
            }
        }
        changed
    };

    // every sweep pair extends all optimal paths by at least one turn, so
    // h·w pairs always suffice
    let cap = (h * w).max(min_sweeps);
    let mut sweeps = 0;
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                changed |= relax(&mut cost, &mut pred, r, c, &CAUSAL);
            }
        }
        for r in (0..h).rev() {
            for c in (0..w).rev() {
                changed |= relax(&mut cost, &mut pred, r, c, &ANTICAUSAL);
            }
        }
        sweeps += 1;
        if (!changed && sweeps >= min_sweeps) || sweeps >= cap {
            break;
        }
    }
    Ok(GeodesicField {
        cost: ScalarGrid::from_values(h, w, cost)?,
        predecessor: pred,
        sweeps,
    })
}

/// One harmonic update, reported to the refinement observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicUpdate {
    pub pixel: usize,
    pub predecessor: usize,
    pub pass: usize,
    pub before: f64,
    pub prediction: f64,
    pub after: f64,
}

/// Refine coarse depth by harmonic propagation along geodesic paths.
pub fn refine_depth(
    z_coarse: &ScalarGrid,
    seeds: &SeedSet,
    geo: &GeodesicField,
    cfg: &PipelineConfig,
) -> Result<ScalarGrid> {
    refine_depth_observed(z_coarse, seeds, geo, cfg, |_| {})
}

/// [`refine_depth`] with a callback invoked after every update.
pub fn refine_depth_observed(
    z_coarse: &ScalarGrid,
    seeds: &SeedSet,
    geo: &GeodesicField,
    cfg: &PipelineConfig,
    mut observe: impl FnMut(&HarmonicUpdate),
) -> Result<ScalarGrid> {
    let (h, w) = z_coarse.shape();
    if geo.cost.shape() != (h, w) {
        return Err(Error::ShapeMismatch(
            "geodesic field and coarse depth differ in shape".into(),
        ));
    }
    seeds.check_bounds(h, w)?;

    let mut z = z_coarse.clone();
    let n = h * w;
    let mut is_seed = vec![false; n];
    for s in seeds {
        let i = s.row * w + s.col;
        is_seed[i] = true;
        z.set_at(i, s.value);
    }
    // residual is only defined where the coarse depth exists
    let usable = |i: usize| z_coarse.valid_mask()[i];
    let mut ready: Vec<bool> = (0..n).map(|i| is_seed[i] && usable(i)).collect();

    let order = settle_order(geo, &is_seed, z_coarse);

    for pass in 0..cfg.dp_order {
        let step = 1.0 / (pass as f64 + 1.0);
        for &p in &order {
            let Some(q) = geo.predecessor_index(p) else {
                continue;
            };
            let residual = |i: usize| z.values()[i] - z_coarse.values()[i];
            let (qr, qc) = ((q / w) as isize, (q % w) as isize);
            let mut buf = [(0.0, 0.0, 0.0); 9];
            let mut len = 0;
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (r, c) = (qr + dr, qc + dc);
                    if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                        continue;
                    }
                    let x = r as usize * w + c as usize;
                    if x != p && ready[x] {
                        buf[len] = (dc as f64, dr as f64, residual(x));
                        len += 1;
                    }
                }
            }
            let anchor = ready[q].then(|| residual(q));
            let target = (
                (p % w) as f64 - qc as f64,
                (p / w) as f64 - qr as f64,
            );
            let Some(r_hat) = predict_residual(&buf[..len], anchor, target, cfg.basis) else {
                continue;
            };
            let before = z.values()[p];
            let prediction = z_coarse.values()[p] + r_hat;
            let after = (1.0 - step) * before + step * prediction;
            z.set_at(p, after);
            ready[p] = true;
            observe(&HarmonicUpdate {
                pixel: p,
                predecessor: q,
                pass,
                before,
                prediction,
                after,
            });
        }
    }
    Ok(z)
}

/// Non-seed pixels with finite cost and valid coarse depth, ordered by
/// (cost, depth in the predecessor tree, raster index). Predecessors always
/// precede their successors.
fn settle_order(geo: &GeodesicField, is_seed: &[bool], z_coarse: &ScalarGrid) -> Vec<usize> {
    let n = is_seed.len();
    let mut depth = vec![usize::MAX; n];
    for start in 0..n {
        if depth[start] != usize::MAX || !geo.cost.valid_mask()[start] {
            continue;
        }
        let mut chain = vec![start];
        let mut base = 0;
        let mut cur = start;
        while let Some(q) = geo.predecessor_index(cur) {
            if depth[q] != usize::MAX {
                base = depth[q] + 1;
                break;
            }
            chain.push(q);
            cur = q;
        }
        for (k, &i) in chain.iter().rev().enumerate() {
            depth[i] = base + k;
        }
    }
    let costs = geo.cost.values();
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| geo.cost.valid_mask()[i] && !is_seed[i] && z_coarse.valid_mask()[i])
        .collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .total_cmp(&costs[b])
            .then(depth[a].cmp(&depth[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Least-squares model through `(Δu, Δv, value)` samples evaluated at
/// `target`. Falls back from B-spline to plane to the predecessor's own
/// value (or the sample mean) when the samples cannot determine the model.
fn predict_residual(
    samples: &[(f64, f64, f64)],
    anchor: Option<f64>,
    target: (f64, f64),
    basis: Basis,
) -> Option<f64> {
    if basis == Basis::BSpline {
        if let Some(v) = fit_and_eval::<4>(samples, target, bspline_features) {
            return Some(v);
        }
    }
    if let Some(v) = fit_and_eval::<3>(samples, target, plane_features) {
        return Some(v);
    }
    anchor.or_else(|| {
        (!samples.is_empty())
            .then(|| samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64)
    })
}

fn plane_features(du: f64, dv: f64) -> [f64; 3] {
    [1.0, du, dv]
}

/// Bilinear hat functions on `[-1, 1]²`.
fn bspline_features(du: f64, dv: f64) -> [f64; 4] {
    let s = 0.5 * (du + 1.0);
    let t = 0.5 * (dv + 1.0);
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t]
}

fn fit_and_eval<const K: usize>(
    samples: &[(f64, f64, f64)],
    target: (f64, f64),
    features: fn(f64, f64) -> [f64; K],
) -> Option<f64> {
    if samples.len() < K {
        return None;
    }
    let mut ata = [[0.0; K]; K];
    let mut atb = [0.0; K];
    for &(du, dv, y) in samples {
        let f = features(du, dv);
        for i in 0..K {
            atb[i] += f[i] * y;
            for j in 0..K {
                ata[i][j] += f[i] * f[j];
            }
        }
    }
    let coef = solve_small(ata, atb)?;
    let f = features(target.0, target.1);
    Some(coef.iter().zip(f.iter()).map(|(a, b)| a * b).sum())
}

/// Gaussian elimination with partial pivoting; `None` if near-singular.
fn solve_small<const K: usize>(mut a: [[f64; K]; K], mut b: [f64; K]) -> Option<[f64; K]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..K {
        let piv = (col..K).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..K {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; K];
    for row in (0..K).rev() {
        let mut acc = b[row];
        for k in row + 1..K {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Seed pixels as geodesic sources.
pub fn seed_sources(seeds: &SeedSet) -> Vec<(usize, usize)> {
    seeds.pixels()
}
