//! Superpixel partitions: graph-based (Felzenszwalb) segmentation of the
//! color image, or pass-through of externally produced label maps.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{RgbImage, ScalarGrid};
use crate::io::LabelMap;

/// Pre-smoothing applied before edge weights are computed.
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 0.8;

/// Labels per pixel plus per-segment pixel lists and centroids.
///
/// Ids are contiguous `0..len()`, assigned in order of first appearance in
/// raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    segments: Vec<Vec<usize>>,
    centroids: Vec<(f64, f64)>,
}

impl SegmentMap {
    /// Compact arbitrary labels into a contiguous partition.
    pub fn from_labels(height: usize, width: usize, raw: &[u32]) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DegenerateSize {
                height,
                width,
                min: 1,
            });
        }
        if raw.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {height}x{width}",
                raw.len()
            )));
        }
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut labels = Vec::with_capacity(raw.len());
        let mut segments: Vec<Vec<usize>> = Vec::new();
        for (idx, &l) in raw.iter().enumerate() {
            let next = remap.len() as u32;
            let id = *remap.entry(l).or_insert(next);
            if id as usize == segments.len() {
                segments.push(Vec::new());
            }
            segments[id as usize].push(idx);
            labels.push(id);
        }
        let centroids = segments
            .iter()
            .map(|pix| {
                let n = pix.len() as f64;
                let (sr, sc) = pix.iter().fold((0.0, 0.0), |(sr, sc), &i| {
                    (sr + (i / width) as f64, sc + (i % width) as f64)
                });
                (sr / n, sc / n)
            })
            .collect();
        Ok(Self {
            height,
            width,
            labels,
            segments,
            centroids,
        })
    }

    pub fn from_label_map(map: &LabelMap) -> Result<Self> {
        Self::from_labels(map.height, map.width, &map.labels)
    }

    pub fn to_label_map(&self) -> LabelMap {
        LabelMap {
            height: self.height,
            width: self.width,
            labels: self.labels.clone(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col] as usize
    }

    /// Flat pixel indices of segment `id`.
    pub fn pixels(&self, id: usize) -> &[usize] {
        &self.segments[id]
    }

    pub fn segments(&self) -> &[Vec<usize>] {
        &self.segments
    }

    /// `(row, col)` centroid of segment `id`.
    pub fn centroid(&self, id: usize) -> (f64, f64) {
        self.centroids[id]
    }

    pub fn centroids(&self) -> &[(f64, f64)] {
        &self.centroids
    }
}

/// Build a partition from an id grid produced elsewhere. Every pixel must
/// carry a valid non-negative integer id.
pub fn relabel_external(labels: &ScalarGrid) -> Result<SegmentMap> {
    let mut raw = Vec::with_capacity(labels.len());
    for (i, (&v, &ok)) in labels.values().iter().zip(labels.valid_mask()).enumerate() {
        let (r, c) = (i / labels.width(), i % labels.width());
        if !ok {
            return Err(Error::InvalidInput(format!(
                "pixel ({r}, {c}) has no segment label"
            )));
        }
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::InvalidInput(format!(
                "pixel ({r}, {c}) has non-integer label {v}"
            )));
        }
        raw.push(v as u32);
    }
    SegmentMap::from_labels(labels.height(), labels.width(), &raw)
}

/// Graph-based segmentation with the default pre-smoothing.
pub fn felzenszwalb(img: &RgbImage, scale: f64, min_size: usize) -> SegmentMap {
    felzenszwalb_with_sigma(img, scale, min_size, DEFAULT_SMOOTHING_SIGMA)
}

/// Graph-based segmentation on the 8-connected pixel graph.
///
/// Edge weights are Euclidean RGB distances on the 0..255 intensity scale,
/// so `scale` has its customary magnitude (a few hundred). `sigma <= 0`
/// disables pre-smoothing.
pub fn felzenszwalb_with_sigma(
    img: &RgbImage,
    scale: f64,
    min_size: usize,
    sigma: f64,
) -> SegmentMap {
    let (h, w) = img.shape();
    let smoothed = if sigma > 0.0 {
        gaussian_smooth(img, sigma)
    } else {
        img.pixels().to_vec()
    };

    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(h * w * 4);
    let diff = |a: usize, b: usize| {
        let (p, q) = (smoothed[a], smoothed[b]);
        255.0
            * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                edges.push((i, i + 1, diff(i, i + 1)));
            }
            if r + 1 < h {
                edges.push((i, i + w, diff(i, i + w)));
                if c + 1 < w {
                    edges.push((i, i + w + 1, diff(i, i + w + 1)));
                }
                if c > 0 {
                    edges.push((i, i + w - 1, diff(i, i + w - 1)));
                }
            }
        }
    }
    // stable: ties keep generation order
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));

    let mut forest = DisjointSet::new(h * w);
    let mut threshold = vec![scale; h * w];
    for &(a, b, wt) in &edges {
        let ra = forest.find(a);
        let rb = forest.find(b);
        if ra != rb && wt <= threshold[ra] && wt <= threshold[rb] {
            let root = forest.union(ra, rb);
            threshold[root] = wt + scale / forest.size(root) as f64;
        }
    }
    for &(a, b, _) in &edges {
        let ra = forest.find(a);
        let rb = forest.find(b);
        if ra != rb && (forest.size(ra) < min_size || forest.size(rb) < min_size) {
            forest.union(ra, rb);
        }
    }

    let raw: Vec<u32> = (0..h * w).map(|i| forest.find(i) as u32).collect();
    SegmentMap::from_labels(h, w, &raw).expect("dimensions already validated")
}

fn gaussian_smooth(img: &RgbImage, sigma: f64) -> Vec<[f64; 3]> {
    let (h, w) = img.shape();
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let src = img.pixels();
    let mut tmp = vec![[0.0; 3]; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = [0.0; 3];
            for (k, &kv) in kernel.iter().enumerate() {
                let cc = (c as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                let p = src[r * w + cc];
                for ch in 0..3 {
                    acc[ch] += kv * p[ch];
                }
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![[0.0; 3]; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = [0.0; 3];
            for (k, &kv) in kernel.iter().enumerate() {
                let rr = (r as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                let p = tmp[rr * w + c];
                for ch in 0..3 {
                    acc[ch] += kv * p[ch];
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Union-find with union by rank and path halving.
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn size(&self, root: usize) -> usize {
        self.size[root]
    }

    /// Join two roots, returning the new root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.rank[a] >= self.rank[b] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        if self.rank[big] == self.rank[small] {
            self.rank[big] += 1;
        }
        big
    }
}
