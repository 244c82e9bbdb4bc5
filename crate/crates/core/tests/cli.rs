mod common;

use std::path::Path;
use std::process::{Command, Output};

use sparsedepth::io::{read_float_map, read_label_map, read_seeds, write_float_map};
use sparsedepth::ScalarGrid;

use common::piecewise_instance;

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsedepth"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let inst = piecewise_instance(48, 60, 2, 3, 11);
    let dir = tempfile::tempdir().unwrap();
    inst.write_to(dir.path(), &inst.all_seeds());
    dir
}

#[test]
fn run_with_ground_truth_prints_metrics() {
    let dir = setup();
    let o = cli(
        &[
            "run", "--rgb", "rgb.ppm", "--rel", "rel.pfm", "--seeds", "seeds.csv",
            "--segments", "segments.pgm", "--out", "out.pfm", "--gt", "gt.pfm",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let absrel: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("absrel="))
        .unwrap()
        .parse()
        .unwrap();
    // inputs pass through 32-bit float files
    assert!(absrel <= 1e-5, "{absrel}");
    assert_eq!(read_float_map(dir.path().join("out.pfm")).unwrap().shape(), (48, 60));
}

#[test]
fn no_refine_writes_the_coarse_depth() {
    let dir = setup();
    let base = [
        "run", "--rgb", "rgb.ppm", "--rel", "rel.pfm", "--seeds", "seeds.csv",
    ];
    let o = cli(&[&base[..], &["--out", "full.pfm", "--dump-intermediate", "stages"]].concat(), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cli(&[&base[..], &["--out", "coarse.pfm", "--no-refine"]].concat(), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let coarse = std::fs::read(dir.path().join("coarse.pfm")).unwrap();
    let dumped = std::fs::read(dir.path().join("stages/coarse.pfm")).unwrap();
    assert_eq!(coarse, dumped);
}

#[test]
fn missing_seeds_file_is_named() {
    let dir = setup();
    let o = cli(
        &["run", "--rgb", "rgb.ppm", "--rel", "rel.pfm", "--seeds", "nope.csv", "--out", "o.pfm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn out_of_bounds_seed_names_file_and_stage() {
    let dir = setup();
    std::fs::write(dir.path().join("far.csv"), "500,3,2.0\n").unwrap();
    let o = cli(
        &["run", "--rgb", "rgb.ppm", "--rel", "rel.pfm", "--seeds", "far.csv", "--out", "o.pfm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("far.csv") && err.contains("input"), "{err}");
}

#[test]
fn shape_mismatch_is_an_input_error() {
    let dir = setup();
    write_float_map(dir.path().join("small.pfm"), &ScalarGrid::filled(5, 5, 1.0).unwrap()).unwrap();
    let o = cli(
        &["run", "--rgb", "rgb.ppm", "--rel", "small.pfm", "--seeds", "seeds.csv", "--out", "o.pfm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("small.pfm"));
}

#[test]
fn eval_reports_and_flags_empty_mask() {
    let dir = setup();
    let o = cli(&["eval", "--pred", "gt.pfm", "--gt", "gt.pfm", "--csv"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("rmse,"));
    assert!(lines.next().unwrap().starts_with("0,"));

    let o = cli(
        &["eval", "--pred", "gt.pfm", "--gt", "gt.pfm", "--min-depth", "500", "--max-depth", "600"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sample_segment_and_potential_subcommands() {
    let dir = setup();
    let o = cli(
        &["sample", "--gt", "gt.pfm", "--out", "s.csv", "--fraction", "0.01", "--rng-seed", "3"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_seeds(dir.path().join("s.csv")).unwrap().len(), 29);

    let o = cli(&["sample", "--gt", "gt.pfm", "--out", "l.csv", "--mode", "lidar", "--lines", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let o = cli(&["segment", "--rgb", "rgb.ppm", "--out", "seg.pgm"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = read_label_map(dir.path().join("seg.pgm")).unwrap();
    assert_eq!((labels.height, labels.width), (48, 60));

    let o = cli(
        &[
            "potential", "--depth", "gt.pfm", "--out", "phi.pfm", "--seeds", "seeds.csv",
            "--geodesic", "geo.pfm",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let geo = read_float_map(dir.path().join("geo.pfm")).unwrap();
    assert_eq!(geo.valid_count(), 48 * 60);
}

#[test]
fn flags_override_config_and_threads_apply() {
    let dir = setup();
    std::fs::write(dir.path().join("cfg.txt"), "fit_mode = median\ndp_order = 2\n").unwrap();
    let o = cli(
        &[
            "--threads", "2", "run", "--config", "cfg.txt", "--rgb", "rgb.ppm", "--rel", "rel.pfm",
            "--seeds", "seeds.csv", "--out", "o.pfm", "--fit", "quantile", "--domain", "depth",
            "--no-graph",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cli(&["run", "--rgb", "rgb.ppm", "--rel", "rel.pfm", "--seeds", "seeds.csv", "--out", "o.pfm", "--fit", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
