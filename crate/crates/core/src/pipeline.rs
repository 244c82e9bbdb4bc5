//! End-to-end orchestration: segment, calibrate, propagate, lift, refine.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::calibrate::{
    bilateral_suppress, calibrate_anchored, fit_segment, seed_samples, AnchoredCalibration,
    CalibParams, TransferMap,
};
use crate::error::{Error, Result};
use crate::graphopt::{
    build_graph_from_positions, lift_to_pixels, planar_positions, propagate, spatial_positions,
    CentroidSpace, Propagation,
};
use crate::grid::{RgbImage, ScalarGrid, SeedSet};
use crate::io::{write_float_map, write_label_map, PipelineConfig};
use crate::refine::{geodesic_dp, potential, refine_depth, seed_sources, GeodesicField};
use crate::segmentation::{felzenszwalb, SegmentMap};

/// Stage switches for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOptions {
    /// Run the pixel-wise refinement after lifting.
    pub refine: bool,
    /// Propagate over the segment graph; otherwise unseeded segments take a
    /// single global fit over all seeds.
    pub graph: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            refine: true,
            graph: true,
        }
    }
}

/// Everything the pipeline consumes.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub rgb: &'a RgbImage,
    pub relative: &'a ScalarGrid,
    pub seeds: &'a SeedSet,
    /// Externally supplied segmentation; computed from `rgb` when absent.
    pub segments: Option<&'a SegmentMap>,
}

/// Final depth plus every intermediate product.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub segments: SegmentMap,
    pub calibration: AnchoredCalibration,
    pub filtered_transfer: TransferMap,
    /// Parameters actually lifted, one per segment.
    pub params: Vec<CalibParams>,
    pub propagation: Option<Propagation>,
    pub coarse: ScalarGrid,
    pub potential: Option<ScalarGrid>,
    pub geodesic: Option<GeodesicField>,
    /// Refined depth when refinement ran, otherwise the coarse depth.
    pub depth: ScalarGrid,
    /// Wall time per stage, in execution order.
    pub timings: Vec<(&'static str, Duration)>,
}

/// Runs closures and records how long each took.
struct Stopwatch(Vec<(&'static str, Duration)>);

impl Stopwatch {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at_stage(stage))?;
        let elapsed = start.elapsed();
        log::debug!("{stage}: {elapsed:?}");
        self.0.push((stage, elapsed));
        Ok(out)
    }
}

/// Run every stage on in-memory inputs.
pub fn run_pipeline(
    inputs: &PipelineInputs<'_>,
    cfg: &PipelineConfig,
    opts: StageOptions,
) -> Result<PipelineOutput> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let (h, w) = inputs.relative.shape();
    if inputs.rgb.shape() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{} but relative depth is {h}x{w}",
            inputs.rgb.height(),
            inputs.rgb.width()
        ))
        .at_stage("input"));
    }
    inputs
        .seeds
        .check_bounds(h, w)
        .map_err(|e| e.at_stage("input"))?;

    let mut clock = Stopwatch(Vec::new());
    let segments = match inputs.segments {
        Some(s) if s.shape() != (h, w) => {
            return Err(Error::ShapeMismatch(format!(
                "segments are {}x{} but relative depth is {h}x{w}",
                s.height(),
                s.width()
            ))
            .at_stage("segment"))
        }
        Some(s) => s.clone(),
        None => clock.time("segment", || {
            Ok(felzenszwalb(inputs.rgb, cfg.seg_scale, cfg.seg_min_size))
        })?,
    };
    log::info!("{} segments", segments.len());

    let calibration = clock.time("calibrate", || {
        let cal = calibrate_anchored(inputs.relative, inputs.seeds, &segments, cfg)?;
        if cal.anchor_count() == 0 {
            return Err(Error::InvalidInput(
                "no seed falls on valid relative depth".into(),
            ));
        }
        Ok(cal)
    })?;
    log::info!(
        "{} anchored segments, {} dropped seeds",
        calibration.anchor_count(),
        calibration.dropped_seeds
    );
    let filtered_transfer = clock.time("bilateral", || {
        bilateral_suppress(&calibration.transfer, inputs.rgb, cfg)
    })?;

    let (params, propagation) = clock.time("graph", || {
        if opts.graph {
            let (params, prop) =
                graph_params(&segments, &calibration.params, inputs.relative, cfg)?;
            Ok((params, Some(prop)))
        } else {
            let params = global_fallback(inputs, &segments, &calibration.params, cfg)?;
            Ok((params, None))
        }
    })?;

    let coarse = clock.time("lift", || {
        lift_to_pixels(&segments, &params, inputs.relative, cfg)
    })?;

    let (phi, geodesic, depth) = if opts.refine {
        let phi = clock.time("potential", || potential(&coarse))?;
        let geo = clock.time("geodesic", || {
            geodesic_dp(&phi, &seed_sources(inputs.seeds), cfg.dp_sweeps)
        })?;
        let refined = clock.time("refine", || refine_depth(&coarse, inputs.seeds, &geo, cfg))?;
        (Some(phi), Some(geo), refined)
    } else {
        (None, None, coarse.clone())
    };

    Ok(PipelineOutput {
        segments,
        calibration,
        filtered_transfer,
        params,
        propagation,
        coarse,
        potential: phi,
        geodesic,
        depth,
        timings: clock.0,
    })
}

/// Anchored segments keep their own fit; the rest take the graph solution.
fn graph_params(
    segments: &SegmentMap,
    fits: &[CalibParams],
    relative: &ScalarGrid,
    cfg: &PipelineConfig,
) -> Result<(Vec<CalibParams>, Propagation)> {
    let solve = |positions: Vec<[f64; 3]>| -> Result<(Vec<CalibParams>, Propagation)> {
        let graph = build_graph_from_positions(&positions, fits, cfg.knn)?;
        let prop = propagate(&graph)?;
        if prop.has_orphans() {
            log::warn!(
                "{} segment(s) unreachable from any anchor take the mean calibration",
                prop.orphans.len()
            );
        }
        Ok((merge_anchors(fits, &prop.params), prop))
    };
    let planar = solve(planar_positions(segments))?;
    match cfg.centroid_space {
        CentroidSpace::Planar => Ok(planar),
        CentroidSpace::Spatial => {
            let coarse = lift_to_pixels(segments, &planar.0, relative, cfg)?;
            solve(spatial_positions(segments, &coarse)?)
        }
    }
}

/// Lifted parameters: anchored fits where present, `propagated` elsewhere.
pub fn merge_anchors(fits: &[CalibParams], propagated: &[CalibParams]) -> Vec<CalibParams> {
    fits.iter()
        .zip(propagated)
        .map(|(f, p)| if f.anchored { *f } else { *p })
        .collect()
}

/// One calibration fitted to every usable seed, assigned to unseeded segments.
fn global_fallback(
    inputs: &PipelineInputs<'_>,
    segments: &SegmentMap,
    fits: &[CalibParams],
    cfg: &PipelineConfig,
) -> Result<Vec<CalibParams>> {
    let (groups, _) = seed_samples(inputs.relative, inputs.seeds, segments, cfg)?;
    let (ds, xs): (Vec<f64>, Vec<f64>) = groups
        .into_iter()
        .flat_map(|(d, x)| d.into_iter().zip(x))
        .unzip();
    let global = fit_segment(&ds, &xs, cfg.fit_mode)?;
    Ok(fits
        .iter()
        .map(|f| if f.anchored { *f } else { global })
        .collect())
}

/// File names written by [`dump_intermediates`].
pub const INTERMEDIATE_FILES: &[&str] = &[
    "segments.pgm",
    "transfer.pfm",
    "transfer_filtered.pfm",
    "coarse.pfm",
    "potential.pfm",
    "geodesic.pfm",
    "refined.pfm",
];

/// Write each stage's raster into `dir`. Refinement products are skipped
/// when refinement did not run.
pub fn dump_intermediates(out: &PipelineOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_label_map(dir.join("segments.pgm"), &out.segments.to_label_map())?;
    write_float_map(dir.join("transfer.pfm"), out.calibration.transfer.grid())?;
    write_float_map(dir.join("transfer_filtered.pfm"), out.filtered_transfer.grid())?;
    write_float_map(dir.join("coarse.pfm"), &out.coarse)?;
    if let (Some(phi), Some(geo)) = (&out.potential, &out.geodesic) {
        write_float_map(dir.join("potential.pfm"), phi)?;
        write_float_map(dir.join("geodesic.pfm"), &geo.cost)?;
        write_float_map(dir.join("refined.pfm"), &out.depth)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::depth_to_proxy;
    use crate::grid::Seed;

    /// Two vertical halves, each with its own affine relation between
    /// relative depth and inverse depth.
    fn two_halves() -> (RgbImage, ScalarGrid, ScalarGrid, SegmentMap) {
        let (h, w) = (12, 16);
        let gt = ScalarGrid::from_fn(h, w, |r, c| 2.0 + 0.1 * r as f64 + 0.05 * c as f64).unwrap();
        let cfg = PipelineConfig::default();
        let rel = ScalarGrid::from_fn(h, w, |r, c| {
            let xi = depth_to_proxy(gt.value(r, c), cfg.kappa, cfg.epsilon).unwrap();
            if c < 8 { (xi - 0.1) / 2.0 } else { (xi + 0.05) / 0.5 }
        })
        .unwrap();
        let rgb = RgbImage::from_fn(h, w, |_, c| if c < 8 { [0.1; 3] } else { [0.9; 3] }).unwrap();
        let labels: Vec<u32> = (0..h * w).map(|i| u32::from(i % w >= 8)).collect();
        let seg = SegmentMap::from_labels(h, w, &labels).unwrap();
        (rgb, rel, gt, seg)
    }

    fn seeds_at(gt: &ScalarGrid, pixels: &[(usize, usize)]) -> SeedSet {
        SeedSet::from_entries(pixels.iter().map(|&(row, col)| Seed {
            row,
            col,
            value: gt.value(row, col),
        }))
        .unwrap()
    }

    #[test]
    fn recovers_exact_depth() {
        let (rgb, rel, gt, seg) = two_halves();
        let seeds = seeds_at(&gt, &[(1, 1), (5, 6), (10, 3), (2, 12), (9, 14), (6, 9)]);
        let inputs = PipelineInputs { rgb: &rgb, relative: &rel, seeds: &seeds, segments: Some(&seg) };
        let out = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions::default()).unwrap();
        for (a, b) in out.depth.values().iter().zip(gt.values()) {
            assert!((a - b).abs() / b <= 1e-9);
        }
        assert!(out.propagation.is_some());
    }

    #[test]
    fn refinement_never_changes_coarse() {
        let (rgb, rel, gt, seg) = two_halves();
        let seeds = seeds_at(&gt, &[(1, 1), (5, 6), (10, 3)]);
        let inputs = PipelineInputs { rgb: &rgb, relative: &rel, seeds: &seeds, segments: Some(&seg) };
        let cfg = PipelineConfig::default();
        let full = run_pipeline(&inputs, &cfg, StageOptions::default()).unwrap();
        let coarse = run_pipeline(&inputs, &cfg, StageOptions { refine: false, graph: true }).unwrap();
        assert_eq!(full.coarse, coarse.coarse);
        assert_eq!(coarse.depth, coarse.coarse);
        assert!(coarse.geodesic.is_none());
    }

    #[test]
    fn no_graph_uses_global_fit() {
        let (rgb, rel, gt, seg) = two_halves();
        let seeds = seeds_at(&gt, &[(1, 1), (5, 6), (10, 3)]);
        let inputs = PipelineInputs { rgb: &rgb, relative: &rel, seeds: &seeds, segments: Some(&seg) };
        let out = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions { refine: false, graph: false }).unwrap();
        assert!(out.propagation.is_none());
        assert_eq!(out.params[0], out.params[1]);
    }

    #[test]
    fn errors_name_the_stage() {
        let (rgb, rel, gt, _) = two_halves();
        let seeds = seeds_at(&gt, &[(1, 1)]);
        let small = ScalarGrid::filled(3, 3, 1.0).unwrap();
        let inputs = PipelineInputs { rgb: &rgb, relative: &small, seeds: &seeds, segments: None };
        let err = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "input", .. }), "{err}");

        let far = SeedSet::from_entries([Seed { row: 50, col: 0, value: 1.0 }]).unwrap();
        let inputs = PipelineInputs { rgb: &rgb, relative: &rel, seeds: &far, segments: None };
        let err = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions::default()).unwrap_err();
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn dumps_every_stage() {
        let (rgb, rel, gt, seg) = two_halves();
        let seeds = seeds_at(&gt, &[(1, 1), (5, 6), (10, 3)]);
        let inputs = PipelineInputs { rgb: &rgb, relative: &rel, seeds: &seeds, segments: Some(&seg) };
        let out = run_pipeline(&inputs, &PipelineConfig::default(), StageOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_intermediates(&out, dir.path()).unwrap();
        for name in INTERMEDIATE_FILES {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }
}
