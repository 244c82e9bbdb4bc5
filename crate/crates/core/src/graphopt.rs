//! Segment graph and graph-regularized propagation of calibrations.
//!
//! Each segment is a node carrying `θ = (a, b)`. Seeded nodes have a fitted
//! anchor `θ̂`. Propagation minimizes
//!
//! ```text
//! Σ_{i anchored} λ‖θᵢ − θ̂ᵢ‖² + Σ_{(i,j)} w_ij ‖θᵢ − θⱼ‖²
//! ```
//!
//! whose normal equations `(λD + L)θ = λDθ̂` are solved per coordinate with
//! Jacobi-preconditioned conjugate gradients. `D` is the anchor indicator
//! and `L` the weighted graph Laplacian.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::calibrate::CalibParams;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::io::PipelineConfig;
use crate::segmentation::SegmentMap;

/// Coordinates used for inter-centroid distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidSpace {
    /// Pixel-space `(row, col)` centroids.
    #[default]
    Planar,
    /// Centroids back-projected with the coarse depth (unit focal length).
    Spatial,
}

impl fmt::Display for CentroidSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidSpace::Planar => "2d",
            CentroidSpace::Spatial => "3d",
        })
    }
}

impl FromStr for CentroidSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2d" => Ok(CentroidSpace::Planar),
            "3d" => Ok(CentroidSpace::Spatial),
            other => Err(Error::Config(format!("unknown centroid space {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub params: CalibParams,
    pub position: [f64; 3],
}

/// Undirected edge, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    /// `exp(−distance / τ)`, in (0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Median retained edge length.
    pub tau: f64,
}

impl SegmentGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn anchor_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.params.anchored).count()
    }

    /// Value of the propagation objective at `params` (anchor weight `λ`).
    pub fn objective(&self, params: &[CalibParams], anchor_weight: f64) -> f64 {
        let anchor: f64 = self
            .nodes
            .iter()
            .zip(params)
            .filter(|(n, _)| n.params.anchored)
            .map(|(n, p)| {
                anchor_weight * ((p.a - n.params.a).powi(2) + (p.b - n.params.b).powi(2))
            })
            .sum();
        let smooth: f64 = self
            .edges
            .iter()
            .map(|e| {
                let (p, q) = (&params[e.i], &params[e.j]);
                e.weight * ((p.a - q.a).powi(2) + (p.b - q.b).powi(2))
            })
            .sum();
        anchor + smooth
    }

    /// Connected component id per node, numbered in node order.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }
}

/// Pixel-space centroids as graph positions.
pub fn planar_positions(seg: &SegmentMap) -> Vec<[f64; 3]> {
    seg.centroids().iter().map(|&(r, c)| [r, c, 0.0]).collect()
}

/// Back-project each centroid with its segment's mean depth: `(x·Z, y·Z, Z)`
/// where `(x, y)` is the centroid relative to the image center.
pub fn spatial_positions(seg: &SegmentMap, depth: &ScalarGrid) -> Result<Vec<[f64; 3]>> {
    if seg.shape() != depth.shape() {
        return Err(Error::ShapeMismatch("segments and depth differ in shape".into()));
    }
    let global = {
        let (s, n) = depth
            .iter_valid()
            .fold((0.0, 0usize), |(s, n), (_, _, v)| (s + v, n + 1));
        if n == 0 {
            1.0
        } else {
            s / n as f64
        }
    };
    let cy = (seg.height() as f64 - 1.0) / 2.0;
    let cx = (seg.width() as f64 - 1.0) / 2.0;
    Ok((0..seg.len())
        .map(|id| {
            let (s, n) = seg.pixels(id).iter().fold((0.0, 0usize), |(s, n), &p| {
                if depth.valid_mask()[p] {
                    (s + depth.values()[p], n + 1)
                } else {
                    (s, n)
                }
            });
            let z = if n == 0 { global } else { s / n as f64 };
            let (r, c) = seg.centroid(id);
            [(c - cx) * z, (r - cy) * z, z]
        })
        .collect())
}

/// kNN graph over pixel-space segment centroids.
pub fn build_graph(seg: &SegmentMap, anchors: &[CalibParams], knn: usize) -> Result<SegmentGraph> {
    if anchors.len() != seg.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} calibrations for {} segments",
            anchors.len(),
            seg.len()
        )));
    }
    build_graph_from_positions(&planar_positions(seg), anchors, knn)
}

/// kNN graph over arbitrary node positions.
///
/// Each node keeps its `knn` nearest neighbors (ties broken by node id); the
/// union of those directed choices gives the undirected edge set. `τ` is the
/// median retained distance (1 if that is zero or there are no edges).
pub fn build_graph_from_positions(
    positions: &[[f64; 3]],
    anchors: &[CalibParams],
    knn: usize,
) -> Result<SegmentGraph> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::InvalidInput("graph needs at least one node".into()));
    }
    if anchors.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} calibrations for {n} nodes",
            anchors.len()
        )));
    }
    let dist = |i: usize, j: usize| {
        let (p, q) = (positions[i], positions[j]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let k = knn.min(n - 1);
    let mut kept: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    if k > 0 {
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            cand.clear();
            cand.extend((0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)));
            let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, order);
                cand.truncate(k);
            }
            for &(d, j) in &cand {
                kept.insert((i.min(j), i.max(j)), d);
            }
        }
    }

    let mut lengths: Vec<f64> = kept.values().copied().collect();
    lengths.sort_by(f64::total_cmp);
    let tau = match lengths.len() {
        0 => 1.0,
        m if m % 2 == 1 => lengths[m / 2],
        m => 0.5 * (lengths[m / 2 - 1] + lengths[m / 2]),
    };
    let tau = if tau > 0.0 { tau } else { 1.0 };

    let edges = kept
        .into_iter()
        .map(|((i, j), distance)| GraphEdge {
            i,
            j,
            distance,
            weight: (-distance / tau).exp(),
        })
        .collect();
    let nodes = positions
        .iter()
        .zip(anchors)
        .map(|(&position, &params)| GraphNode { params, position })
        .collect();
    Ok(SegmentGraph { nodes, edges, tau })
}

/// Outcome of a propagation solve.
#[derive(Debug, Clone)]
pub struct Propagation {
    /// One entry per node; `anchored` mirrors the input graph.
    pub params: Vec<CalibParams>,
    /// Nodes in components without any anchor. They receive the mean of all
    /// anchors since the system is singular there.
    pub orphans: Vec<usize>,
    /// CG iterations for the `a` and `b` systems.
    pub iterations: [usize; 2],
    /// Final `‖Aθ − rhs‖∞` over both coordinates.
    pub residual: f64,
}

impl Propagation {
    pub fn has_orphans(&self) -> bool {
        !self.orphans.is_empty()
    }
}

/// Solve the propagation objective with unit anchor weight.
pub fn propagate(graph: &SegmentGraph) -> Result<Propagation> {
    propagate_weighted(graph, 1.0)
}

/// Solve with the anchor term scaled by `anchor_weight`.
pub fn propagate_weighted(graph: &SegmentGraph, anchor_weight: f64) -> Result<Propagation> {
    if !(anchor_weight.is_finite() && anchor_weight > 0.0) {
        return Err(Error::InvalidInput(format!(
            "anchor weight must be positive, got {anchor_weight}"
        )));
    }
    let n = graph.len();
    let anchors: Vec<usize> = (0..n).filter(|&i| graph.nodes[i].params.anchored).collect();
    if anchors.is_empty() {
        return Err(Error::InvalidInput(
            "propagation needs at least one anchored segment".into(),
        ));
    }
    let mean_a = anchors.iter().map(|&i| graph.nodes[i].params.a).sum::<f64>() / anchors.len() as f64;
    let mean_b = anchors.iter().map(|&i| graph.nodes[i].params.b).sum::<f64>() / anchors.len() as f64;

    let comp = graph.components();
    let mut comp_anchored = vec![false; n];
    for &i in &anchors {
        comp_anchored[comp[i]] = true;
    }
    let orphans: Vec<usize> = (0..n).filter(|&i| !comp_anchored[comp[i]]).collect();
    if !orphans.is_empty() {
        log::warn!(
            "{} segment(s) are not connected to any anchor; using the mean anchor calibration",
            orphans.len()
        );
    }

    // Solve only over nodes that can reach an anchor.
    let active: Vec<usize> = (0..n).filter(|&i| comp_anchored[comp[i]]).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in active.iter().enumerate() {
        local[i] = k;
    }
    let m = active.len();
    let mut diag = vec![0.0; m];
    let mut offdiag: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for e in &graph.edges {
        let (li, lj) = (local[e.i], local[e.j]);
        if li == usize::MAX {
            continue;
        }
        diag[li] += e.weight;
        diag[lj] += e.weight;
        offdiag[li].push((lj, e.weight));
        offdiag[lj].push((li, e.weight));
    }
    let mut rhs_a = vec![0.0; m];
    let mut rhs_b = vec![0.0; m];
    let mut x_a = vec![mean_a; m];
    let mut x_b = vec![mean_b; m];
    for (k, &i) in active.iter().enumerate() {
        let p = graph.nodes[i].params;
        if p.anchored {
            diag[k] += anchor_weight;
            rhs_a[k] = anchor_weight * p.a;
            rhs_b[k] = anchor_weight * p.b;
            x_a[k] = p.a;
            x_b[k] = p.b;
        }
    }
    let system = SparseSym { diag, offdiag };

    let max_iter = 10 * n.max(1);
    let scale = rhs_a
        .iter()
        .chain(&rhs_b)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let target = 1e-13 * scale;
    let ((it_a, res_a), (it_b, res_b)) = rayon::join(
        || system.solve_pcg(&rhs_a, &mut x_a, target, max_iter),
        || system.solve_pcg(&rhs_b, &mut x_b, target, max_iter),
    );
    let residual = res_a.max(res_b);
    if residual > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "conjugate gradients did not converge: residual {residual:e} after {} iterations",
            it_a.max(it_b)
        )));
    }

    let mut params: Vec<CalibParams> = graph
        .nodes
        .iter()
        .map(|node| CalibParams {
            a: mean_a,
            b: mean_b,
            anchored: node.params.anchored,
        })
        .collect();
    for (k, &i) in active.iter().enumerate() {
        params[i].a = x_a[k];
        params[i].b = x_b[k];
    }
    Ok(Propagation {
        params,
        orphans,
        iterations: [it_a, it_b],
        residual,
    })
}

/// Symmetric sparse matrix as diagonal plus adjacency lists.
struct SparseSym {
    diag: Vec<f64>,
    offdiag: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    /// `y = A·x` where off-diagonal entries are `−w`.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = self.diag[i] * x[i];
            for &(j, w) in &self.offdiag[i] {
                acc -= w * x[j];
            }
            *yi = acc;
        }
    }

    fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
        self.apply(x, r);
        let mut worst = 0.0f64;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
            worst = worst.max(ri.abs());
        }
        worst
    }

    /// Jacobi-preconditioned CG from the initial guess in `x`. Returns the
    /// iteration count and the final true residual ∞-norm.
    fn solve_pcg(&self, b: &[f64], x: &mut [f64], target: f64, max_iter: usize) -> (usize, f64) {
        let n = b.len();
        let mut r = vec![0.0; n];
        let mut best = self.residual(b, x, &mut r);
        if best <= target {
            return (0, best);
        }
        let inv: Vec<f64> = self.diag.iter().map(|d| 1.0 / d).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut best_x = x.to_vec();
        let mut iters = 0;
        while iters < max_iter {
            iters += 1;
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            // refresh the recursive residual now and then to limit drift
            let res = if iters % 50 == 0 {
                let mut fresh = vec![0.0; n];
                let v = self.residual(b, x, &mut fresh);
                r.copy_from_slice(&fresh);
                v
            } else {
                r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            if res < best {
                best = res;
                best_x.copy_from_slice(x);
            }
            if res <= target {
                break;
            }
            for k in 0..n {
                z[k] = r[k] * inv[k];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        x.copy_from_slice(&best_x);
        let true_res = self.residual(b, x, &mut r);
        (iters, true_res)
    }
}

/// Apply each segment's calibration to the relative depth and convert the
/// resulting proxy to metric depth.
pub fn lift_to_pixels(
    seg: &SegmentMap,
    params: &[CalibParams],
    d: &ScalarGrid,
    cfg: &PipelineConfig,
) -> Result<ScalarGrid> {
    if params.len() != seg.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} calibrations for {} segments",
            params.len(),
            seg.len()
        )));
    }
    if d.shape() != seg.shape() {
        return Err(Error::ShapeMismatch(
            "relative depth and segments differ in shape".into(),
        ));
    }
    let mut out = ScalarGrid::invalid(d.height(), d.width())?;
    for (i, (&dv, &ok)) in d.values().iter().zip(d.valid_mask()).enumerate() {
        if !ok {
            continue;
        }
        let p = &params[seg.labels()[i] as usize];
        let xi = p.apply(dv, cfg.d_min);
        if let Ok(z) = cfg.domain.to_depth(xi, cfg.kappa, cfg.epsilon) {
            out.set_at(i, z);
        }
    }
    Ok(out)
}
