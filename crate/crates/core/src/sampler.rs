//! Sparse seed generation from dense ground truth.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, Seed, SeedSet};

/// Default relative standard deviation of the multiplicative noise.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

/// Uniform sample of `round(fraction · valid)` pixels without replacement.
/// A `noise_fraction` share of them is multiplied by `1 + N(0, noise_sigma)`
/// (redrawn until the result is positive). Seeds come out in raster order.
pub fn random_sample(
    gt: &ScalarGrid,
    fraction: f64,
    noise_fraction: f64,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<SeedSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    if !(0.0..=1.0).contains(&noise_fraction) {
        return Err(Error::InvalidInput(format!(
            "noise fraction must be in [0, 1], got {noise_fraction}"
        )));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let valid: Vec<usize> = (0..gt.len())
        .filter(|&i| gt.valid_mask()[i] && gt.values()[i] > 0.0)
        .collect();
    if valid.is_empty() {
        return Err(Error::InvalidInput("ground truth has no valid pixels".into()));
    }
    let count = (fraction * valid.len() as f64).round() as usize;
    if count == 0 {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} of {} valid pixels selects no seeds",
            valid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, valid.len(), count)
        .into_iter()
        .map(|k| valid[k])
        .collect();
    picked.sort_unstable();

    let noisy_count = (noise_fraction * count as f64).round() as usize;
    let mut noisy = vec![false; count];
    for k in index::sample(&mut rng, count, noisy_count) {
        noisy[k] = true;
    }
    let normal = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("noise law: {e}")))?;

    let w = gt.width();
    let mut seeds = SeedSet::new();
    for (k, &i) in picked.iter().enumerate() {
        let g = gt.values()[i];
        let value = if noisy[k] {
            perturb(g, &normal, &mut rng)
        } else {
            g
        };
        seeds.push(Seed {
            row: i / w,
            col: i % w,
            value,
        })?;
    }
    Ok(seeds)
}

fn perturb(g: f64, normal: &Normal<f64>, rng: &mut impl Rng) -> f64 {
    for _ in 0..1000 {
        let v = g * (1.0 + normal.sample(rng));
        if v > 0.0 && v.is_finite() {
            return v;
        }
    }
    g
}

/// Simulated line-scan sampling: `lines` horizontal scanlines at rows
/// `⌊H·(i + ½)/lines⌋`, each point jittered vertically by up to one pixel.
pub fn lidar_scan_sample(gt: &ScalarGrid, lines: usize, rng_seed: u64) -> Result<SeedSet> {
    lidar_scan_sample_with_jitter(gt, lines, 1, rng_seed)
}

/// [`lidar_scan_sample`] with a configurable jitter half-width in rows.
pub fn lidar_scan_sample_with_jitter(
    gt: &ScalarGrid,
    lines: usize,
    max_jitter: usize,
    rng_seed: u64,
) -> Result<SeedSet> {
    if lines == 0 {
        return Err(Error::InvalidInput("at least one scanline is required".into()));
    }
    let (h, w) = gt.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let jitter = max_jitter as i64;
    let mut hit = vec![false; h * w];
    for i in 0..lines {
        let base = ((h as f64) * (i as f64 + 0.5) / lines as f64).floor() as i64;
        for c in 0..w {
            let j = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            let r = (base + j).clamp(0, h as i64 - 1) as usize;
            hit[r * w + c] = true;
        }
    }
    let mut seeds = SeedSet::new();
    for (i, _) in hit.iter().enumerate().filter(|(_, &x)| x) {
        if gt.valid_mask()[i] && gt.values()[i] > 0.0 {
            seeds.push(Seed {
                row: i / w,
                col: i % w,
                value: gt.values()[i],
            })?;
        }
    }
    Ok(seeds)
}
