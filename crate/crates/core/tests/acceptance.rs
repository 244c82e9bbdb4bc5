//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any binding criterion fails.

mod common;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsedepth::calibrate::{fit_segment, CalibParams, FitMode};
use sparsedepth::graphopt::{build_graph_from_positions, propagate, SegmentGraph};
use sparsedepth::io::PipelineConfig;
use sparsedepth::pipeline::{run_pipeline, PipelineInputs, StageOptions};
use sparsedepth::refine::{geodesic_dp, gradient, potential, remainder, NEIGHBORS};
use sparsedepth::{evaluate, ScalarGrid};

use common::{piecewise_instance, Instance};

struct Outcome {
    name: &'static str,
    pass: bool,
    binding: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        name,
        pass,
        binding: true,
        detail,
    }
}

fn main() {
    let criteria: [fn() -> Outcome; 9] = [
        geo_oracle,
        ls_oracle,
        graph_oracle,
        e2e_exact,
        e2e_unseeded,
        remainder_suite,
        metrics_fixtures,
        determinism,
        performance,
    ];
    let mut failed = 0;
    for run in criteria {
        let o = run();
        let tag = match (o.pass, o.binding) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (informational)",
        };
        println!("{tag} {}: {}", o.name, o.detail);
        if !o.pass && o.binding {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

/// 8-connected Dijkstra with step cost ℓ·φ(destination).
fn dijkstra(phi: &ScalarGrid, sources: &[(usize, usize)]) -> Vec<f64> {
    let (h, w) = phi.shape();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut heap = BinaryHeap::new();
    for &(r, c) in sources {
        dist[r * w + c] = 0.0;
        heap.push(Reverse((0.0f64.to_bits(), r * w + c)));
    }
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        let (r, c) = ((u / w) as isize, (u % w) as isize);
        for &(dr, dc) in &NEIGHBORS {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let v = nr as usize * w + nc as usize;
            let len = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let nd = d + len * phi.values()[v];
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    dist
}

fn geo_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e0);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let walls = trial % 3 == 0;
        let phi = ScalarGrid::from_fn(32, 32, |_, _| {
            if walls && rng.random_bool(0.1) {
                rng.random_range(100.0..1000.0)
            } else {
                rng.random_range(0.0..2.0)
            }
        })
        .unwrap();
        let k = rng.random_range(1..=5);
        let sources: Vec<(usize, usize)> = index::sample(&mut rng, 32 * 32, k)
            .into_iter()
            .map(|i| (i / 32, i % 32))
            .collect();
        let geo = geodesic_dp(&phi, &sources, 1).unwrap();
        let oracle = dijkstra(&phi, &sources);
        for (a, b) in geo.cost.values().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        "GEO-ORACLE",
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("max |dp - dijkstra| = {worst:.3e} over 50 grids in {elapsed:.2?}"),
    )
}

fn ls_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x15);
    let mut worst = 0.0f64;
    let mut drawn = 0;
    while drawn < 1000 {
        let n = rng.random_range(2..=64);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let spread = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if spread < 0.1 {
            continue;
        }
        drawn += 1;
        let (a, b) = (rng.random_range(0.05..3.0), rng.random_range(0.6..5.0));
        let xi: Vec<f64> = d
            .iter()
            .map(|x| a * x + b + rng.random_range(-0.5..0.5))
            .collect();
        let p = fit_segment(&d, &xi, FitMode::LeastSquares).unwrap();

        let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { d[i] } else { 1.0 });
        let theta = design.pseudo_inverse(1e-14).unwrap() * DVector::from_vec(xi);
        let err = ((p.a - theta[0]).powi(2) + (p.b - theta[1]).powi(2)).sqrt() / theta.norm();
        worst = worst.max(err);
    }
    outcome(
        "LS-ORACLE",
        worst <= 1e-9,
        format!("max relative error vs pseudo-inverse = {worst:.3e} over 1000 fits"),
    )
}

fn random_connected_graph(rng: &mut ChaCha8Rng, single_anchor: bool) -> SegmentGraph {
    loop {
        let n = rng.random_range(2..=50);
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 0.0])
            .collect();
        let anchors_n = if single_anchor { 1 } else { rng.random_range(1..=n) };
        let mut params = vec![CalibParams::unanchored(); n];
        for i in index::sample(rng, n, anchors_n) {
            params[i] = CalibParams::anchored(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0));
        }
        let knn = rng.random_range(1..=6);
        let graph = build_graph_from_positions(&positions, &params, knn).unwrap();
        if graph.components().iter().all(|&c| c == 0) {
            return graph;
        }
    }
}

fn graph_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a);
    let mut worst = 0.0f64;
    let mut single_worst = 0.0f64;
    let mut single_objective = 0.0f64;
    for trial in 0..100 {
        let single = trial % 5 == 0;
        let graph = random_connected_graph(&mut rng, single);
        let n = graph.len();
        let prop = propagate(&graph).unwrap();

        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut rhs_a = DVector::<f64>::zeros(n);
        let mut rhs_b = DVector::<f64>::zeros(n);
        for (i, node) in graph.nodes.iter().enumerate() {
            if node.params.anchored {
                m[(i, i)] += 1.0;
                rhs_a[i] = node.params.a;
                rhs_b[i] = node.params.b;
            }
        }
        for e in &graph.edges {
            m[(e.i, e.i)] += e.weight;
            m[(e.j, e.j)] += e.weight;
            m[(e.i, e.j)] -= e.weight;
            m[(e.j, e.i)] -= e.weight;
        }
        let lu = m.lu();
        let xa = lu.solve(&rhs_a).unwrap();
        let xb = lu.solve(&rhs_b).unwrap();
        let scale = xa.amax().max(xb.amax()).max(1.0);
        for i in 0..n {
            let e = (prop.params[i].a - xa[i]).abs().max((prop.params[i].b - xb[i]).abs());
            worst = worst.max(e / scale);
        }
        if single {
            let anchor = graph.nodes.iter().find(|n| n.params.anchored).unwrap().params;
            for p in &prop.params {
                single_worst = single_worst.max((p.a - anchor.a).abs().max((p.b - anchor.b).abs()));
            }
            single_objective = single_objective.max(graph.objective(&prop.params, 1.0));
        }
    }
    outcome(
        "GRAPH-ORACLE",
        worst <= 1e-7 && single_worst <= 1e-14 && single_objective <= 1e-24,
        format!(
            "max relative error vs dense solve = {worst:.3e}; single-anchor max deviation = {single_worst:.1e}, objective = {single_objective:.1e}"
        ),
    )
}

fn run_instance(inst: &Instance, skip: &[usize]) -> (sparsedepth::PipelineOutput, Duration) {
    let seeds = inst.seeds_except(skip);
    let inputs = PipelineInputs {
        rgb: &inst.rgb,
        relative: &inst.relative,
        seeds: &seeds,
        segments: Some(&inst.segments),
    };
    let start = Instant::now();
    let out = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions::default()).unwrap();
    (out, start.elapsed())
}

fn e2e_exact() -> Outcome {
    let inst = piecewise_instance(128, 128, 2, 3, 1);
    let (out, elapsed) = run_instance(&inst, &[]);
    let r = evaluate(&out.depth, &inst.gt, 0.0, f64::MAX).unwrap();
    let max_depth = inst.gt.valid_range().unwrap().1;
    outcome(
        "E2E-1",
        r.absrel <= 1e-3 && r.rmse <= 1e-3 * max_depth && elapsed < Duration::from_secs(2),
        format!(
            "AbsRel = {:.3e}, RMSE = {:.3e} m (limit {:.3e}), {} px in {elapsed:.2?}",
            r.absrel,
            r.rmse,
            1e-3 * max_depth,
            r.valid_count
        ),
    )
}

fn e2e_unseeded() -> Outcome {
    let inst = piecewise_instance(128, 128, 2, 3, 1);
    let skip = [1, 5];
    let (out, _) = run_instance(&inst, &skip);
    let r = evaluate(&out.depth, &inst.gt, 0.0, f64::MAX).unwrap();
    let prop = out.propagation.as_ref().unwrap();

    let anchors: Vec<&CalibParams> = out.calibration.params.iter().filter(|p| p.anchored).collect();
    let bounds = |f: fn(&CalibParams) -> f64| {
        anchors
            .iter()
            .map(|p| f(p))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (alo, ahi) = bounds(|p| p.a);
    let (blo, bhi) = bounds(|p| p.b);
    let tol = 1e-12;
    let max_principle = prop.params.iter().all(|p| {
        p.a >= alo - tol && p.a <= ahi + tol && p.b >= blo - tol && p.b <= bhi + tol
    });
    outcome(
        "E2E-2",
        r.absrel <= 0.05 && max_principle && !prop.has_orphans(),
        format!(
            "AbsRel = {:.3e} with segments {skip:?} unseeded; maximum principle {}",
            r.absrel,
            if max_principle { "holds" } else { "violated" }
        ),
    )
}

/// Sum of a few low-frequency waves and a quadratic bowl, sampled with
/// spacing `h` over `[0, 8]²`.
fn smooth_grid(rng: &mut ChaCha8Rng, h: f64) -> ScalarGrid {
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(0.2..1.0),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let (qa, qb) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let n = (8.0 / h) as usize + 1;
    ScalarGrid::from_fn(n, n, |r, c| {
        let (x, y) = (c as f64 * h, r as f64 * h);
        let mut v = 3.0 + qa * x * x + qb * y * y;
        for w in &waves {
            v += w[0] * (w[1] * x + w[2] * y + w[3]).sin();
        }
        v
    })
    .unwrap()
}

/// Worst `|R| / min(L-path integrals)` over all interior 8-neighbor pairs.
fn worst_bound_ratio(z: &ScalarGrid, h: f64) -> f64 {
    let grads = gradient(z).unwrap();
    let phi = potential(z).unwrap();
    let (n, m) = z.shape();
    // second differences in pixel units become continuous ones after 1/h²
    let phi_at = |r: usize, c: usize| phi.value(r, c) / (h * h);
    let leg = |a: (usize, usize), b: (usize, usize)| 0.5 * h * (phi_at(a.0, a.1) + phi_at(b.0, b.1));
    let mut worst = 0.0f64;
    for r in 2..n - 2 {
        for c in 2..m - 2 {
            for &(dr, dc) in &NEIGHBORS {
                let p = (r, c);
                let q = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                let rem = remainder(z, &grads, p, q).unwrap().abs();
                let corner_h = (p.0, q.1);
                let corner_v = (q.0, p.1);
                let path_h = leg(p, corner_h) * (dc != 0) as u8 as f64
                    + leg(corner_h, q) * (dr != 0) as u8 as f64;
                let path_v = leg(p, corner_v) * (dr != 0) as u8 as f64
                    + leg(corner_v, q) * (dc != 0) as u8 as f64;
                let bound = path_h.min(path_v);
                if rem > 0.0 {
                    worst = worst.max(rem / bound);
                }
            }
        }
    }
    worst
}

fn remainder_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9909);
    let mut antisym = 0.0f64;
    let mut affine = 0.0f64;
    for _ in 0..20 {
        let z = smooth_grid(&mut rng, 0.5);
        let grads = gradient(&z).unwrap();
        let (n, m) = z.shape();
        for _ in 0..200 {
            let p = (rng.random_range(0..n), rng.random_range(0..m));
            let q = (rng.random_range(0..n), rng.random_range(0..m));
            let s = remainder(&z, &grads, p, q).unwrap() + remainder(&z, &grads, q, p).unwrap();
            antisym = antisym.max(s.abs());
        }
        let (a, b, c) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        let flat = ScalarGrid::from_fn(24, 24, |r, col| a + b * r as f64 + c * col as f64).unwrap();
        let grads = gradient(&flat).unwrap();
        for _ in 0..200 {
            let p = (rng.random_range(0..24), rng.random_range(0..24));
            let q = (rng.random_range(0..24), rng.random_range(0..24));
            affine = affine.max(remainder(&flat, &grads, p, q).unwrap().abs());
        }
    }

    let mut ratios = Vec::new();
    for h in [1.0, 0.5, 0.25] {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0);
        let worst = (0..20)
            .map(|_| worst_bound_ratio(&smooth_grid(&mut rng, h), h))
            .fold(0.0f64, f64::max);
        ratios.push((h, worst));
    }
    let bound_ok = ratios.last().unwrap().1 <= 1.1;
    let listing: Vec<String> = ratios
        .iter()
        .map(|(h, w)| format!("h={h}: {w:.3}"))
        .collect();
    outcome(
        "PROP-1",
        antisym <= 1e-12 && affine <= 1e-9 && bound_ok,
        format!(
            "antisymmetry {antisym:.1e}, affine {affine:.1e}, worst |R|/min-path ({})",
            listing.join(", ")
        ),
    )
}

fn metrics_fixtures() -> Outcome {
    let row = |v: &[f64]| ScalarGrid::from_values(1, v.len(), v.to_vec()).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut failures = Vec::new();

    let gt = row(&[0.5, 1.0, 2.0, 7.5, 30.0]);
    let r = evaluate(&gt, &gt, 0.0, 80.0).unwrap();
    if !(r.rmse == 0.0 && r.mae == 0.0 && r.absrel == 0.0 && r.sqrel == 0.0 && r.silog == 0.0)
        || (r.delta1, r.delta2, r.delta3) != (1.0, 1.0, 1.0)
    {
        failures.push("identity");
    }

    let doubled = gt.map_valid(|v| 2.0 * v);
    let r = evaluate(&doubled, &gt, 0.0, 80.0).unwrap();
    if !(close(r.absrel, 1.0) && close(r.silog, 0.0))
        || (r.delta1, r.delta2, r.delta3) != (0.0, 0.0, 0.0)
    {
        failures.push("doubled");
    }

    let r = evaluate(&row(&[1.1, 1.9]), &row(&[1.0, 2.0]), 0.0, 80.0).unwrap();
    if !(close(r.mae, 0.1) && close(r.rmse, 0.1) && close(r.absrel, 0.075)) {
        failures.push("two-pixel");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let gt = ScalarGrid::from_fn(16, 16, |_, _| rng.random_range(0.5..60.0)).unwrap();
    let pred = ScalarGrid::from_fn(16, 16, |r, c| gt.value(r, c) * rng.random_range(0.7..1.4)).unwrap();
    let base = evaluate(&pred, &gt, 0.0, 80.0).unwrap().silog;
    let mut drift = 0.0f64;
    for _ in 0..100 {
        let s = rng.random_range(0.01..100.0);
        let scaled = evaluate(&pred.map_valid(|v| v * s), &gt, 0.0, 80.0).unwrap().silog;
        drift = drift.max((scaled - base).abs());
    }
    if drift > 1e-12 {
        failures.push("scale invariance");
    }
    outcome(
        "METRICS",
        failures.is_empty(),
        if failures.is_empty() {
            format!("three fixtures match; SI_log drift under rescaling {drift:.1e}")
        } else {
            format!("mismatch in {failures:?}; SI_log drift {drift:.1e}")
        },
    )
}

fn cli_run(dir: &Path, out: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sparsedepth"))
        .arg("run")
        .arg("--rgb")
        .arg(dir.join("rgb.ppm"))
        .arg("--rel")
        .arg(dir.join("rel.pfm"))
        .arg("--seeds")
        .arg(dir.join("seeds.csv"))
        .arg("--out")
        .arg(dir.join(format!("{out}.pfm")))
        .arg("--dump-intermediate")
        .arg(dir.join(out))
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let inst = piecewise_instance(96, 120, 2, 3, 7);
    let dir = tempfile::tempdir().unwrap();
    inst.write_to(dir.path(), &inst.seeds_except(&[4]));
    if !(cli_run(dir.path(), "first") && cli_run(dir.path(), "second")) {
        return outcome("DETERMINISM", false, "pipeline invocation failed".into());
    }
    let mut names = vec![("first.pfm".to_string(), "second.pfm".to_string())];
    names.extend(
        sparsedepth::pipeline::INTERMEDIATE_FILES
            .iter()
            .map(|n| (format!("first/{n}"), format!("second/{n}"))),
    );
    let mut compared = 0;
    let mut differing = Vec::new();
    for (a, b) in &names {
        match (std::fs::read(dir.path().join(a)), std::fs::read(dir.path().join(b))) {
            (Ok(x), Ok(y)) => {
                compared += 1;
                if x != y {
                    differing.push(a.clone());
                }
            }
            _ => differing.push(format!("{a} (missing)")),
        }
    }
    outcome(
        "DETERMINISM",
        differing.is_empty(),
        if differing.is_empty() {
            format!("{compared} output files byte-identical across two runs")
        } else {
            format!("differences in {differing:?}")
        },
    )
}

fn performance() -> Outcome {
    let inst = piecewise_instance(480, 640, 8, 10, 3);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (out, elapsed) = pool.install(|| run_instance(&inst, &[3, 17, 42, 66]));
    let r = evaluate(&out.depth, &inst.gt, 0.0, f64::MAX).unwrap();
    let stages: Vec<String> = out
        .timings
        .iter()
        .map(|(name, t)| format!("{name} {:.0}ms", t.as_secs_f64() * 1e3))
        .collect();
    Outcome {
        name: "PERFORMANCE",
        pass: elapsed <= Duration::from_millis(500),
        binding: false,
        detail: format!(
            "480x640 back end, one thread: {elapsed:.2?} (target 500 ms; {}), AbsRel {:.2e}",
            stages.join(", "),
            r.absrel
        ),
    }
}
