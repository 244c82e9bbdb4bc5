#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsedepth::calibrate::depth_to_proxy;
use sparsedepth::io::{
    write_float_map, write_label_map, write_ppm, write_seeds, PipelineConfig,
};
use sparsedepth::segmentation::SegmentMap;
use sparsedepth::{RgbImage, ScalarGrid, Seed, SeedSet};

/// Synthetic scene: inverse depth is affine inside each rectangle of a
/// `rows × cols` tiling, and the relative depth is a different affine
/// distortion of it per rectangle.
pub struct Instance {
    pub rgb: RgbImage,
    pub relative: ScalarGrid,
    pub gt: ScalarGrid,
    pub segments: SegmentMap,
    /// Seeds grouped by segment id.
    pub seeds_by_segment: Vec<Vec<Seed>>,
    /// `(a, b)` with `ξ = a·d + b` per segment.
    pub distortion: Vec<(f64, f64)>,
}

impl Instance {
    pub fn seeds_except(&self, skip: &[usize]) -> SeedSet {
        SeedSet::from_entries(
            self.seeds_by_segment
                .iter()
                .enumerate()
                .filter(|(id, _)| !skip.contains(id))
                .flat_map(|(_, s)| s.iter().copied()),
        )
        .unwrap()
    }

    pub fn all_seeds(&self) -> SeedSet {
        self.seeds_except(&[])
    }

    /// Write rgb.ppm, rel.pfm, gt.pfm, seeds.csv and segments.pgm.
    pub fn write_to(&self, dir: &Path, seeds: &SeedSet) {
        write_ppm(dir.join("rgb.ppm"), &self.rgb).unwrap();
        write_float_map(dir.join("rel.pfm"), &self.relative).unwrap();
        write_float_map(dir.join("gt.pfm"), &self.gt).unwrap();
        write_seeds(dir.join("seeds.csv"), seeds).unwrap();
        write_label_map(dir.join("segments.pgm"), &self.segments.to_label_map()).unwrap();
    }
}

const PALETTE: [[f64; 3]; 6] = [
    [0.85, 0.2, 0.2],
    [0.2, 0.75, 0.25],
    [0.2, 0.3, 0.85],
    [0.9, 0.85, 0.2],
    [0.75, 0.25, 0.8],
    [0.2, 0.8, 0.8],
];

pub fn piecewise_instance(
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
    rng_seed: u64,
) -> Instance {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = rows * cols;
    let tile = |r: usize, c: usize| (r * rows / height) * cols + c * cols / width;

    // inverse-depth planes kept within [0.06, 0.5], i.e. 2 m to ~17 m
    let planes: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let alpha = rng.random_range(0.18..0.3);
            let beta = sign(&mut rng) * rng.random_range(0.03..0.08);
            let gamma = sign(&mut rng) * rng.random_range(0.03..0.08);
            (alpha, beta, gamma)
        })
        .collect();
    // mild per-segment distortions, as from a model that is locally affine
    let distortion: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.9..1.1), rng.random_range(-0.004..0.004)))
        .collect();

    let xi_at = |r: usize, c: usize| {
        let (alpha, beta, gamma) = planes[tile(r, c)];
        alpha + beta * r as f64 / height as f64 + gamma * c as f64 / width as f64
    };
    let gt = ScalarGrid::from_fn(height, width, |r, c| cfg.kappa / xi_at(r, c) - cfg.epsilon)
        .unwrap();
    let relative = ScalarGrid::from_fn(height, width, |r, c| {
        let xi = depth_to_proxy(gt.value(r, c), cfg.kappa, cfg.epsilon).unwrap();
        let (a, b) = distortion[tile(r, c)];
        (xi - b) / a
    })
    .unwrap();
    let rgb = RgbImage::from_fn(height, width, |r, c| PALETTE[tile(r, c) % PALETTE.len()]).unwrap();
    let raw: Vec<u32> = (0..height * width)
        .map(|i| tile(i / width, i % width) as u32)
        .collect();
    let segments = SegmentMap::from_labels(height, width, &raw).unwrap();

    let seeds_by_segment = (0..segments.len())
        .map(|id| {
            let pix = segments.pixels(id);
            let (r0, c0) = (pix[0] / width, pix[0] % width);
            let (r1, c1) = (pix[pix.len() - 1] / width, pix[pix.len() - 1] % width);
            [(0.25, 0.25), (0.25, 0.75), (0.75, 0.5), (0.6, 0.3)]
                .iter()
                .map(|&(fr, fc)| {
                    let row = r0 + ((r1 - r0) as f64 * fr) as usize;
                    let col = c0 + ((c1 - c0) as f64 * fc) as usize;
                    Seed {
                        row,
                        col,
                        value: gt.value(row, col),
                    }
                })
                .collect()
        })
        .collect();

    Instance {
        rgb,
        relative,
        gt,
        segments,
        seeds_by_segment,
        distortion,
    }
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}
