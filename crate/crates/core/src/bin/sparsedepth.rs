use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sparsedepth::calibrate::{DepthDomain, FitMode};
use sparsedepth::io::{
    read_config, read_float_map, read_label_map, read_ppm, read_seeds, write_float_map,
    write_label_map, write_seeds, PipelineConfig,
};
use sparsedepth::pipeline::{dump_intermediates, run_pipeline, PipelineInputs, StageOptions};
use sparsedepth::refine::{geodesic_dp, potential, seed_sources};
use sparsedepth::sampler::{lidar_scan_sample, random_sample, DEFAULT_NOISE_SIGMA};
use sparsedepth::segmentation::{felzenszwalb, SegmentMap};
use sparsedepth::{evaluate, Error, MetricReport, ScalarGrid};

#[derive(Parser)]
#[command(name = "sparsedepth", version, about = "Metric depth from relative depth and sparse seeds")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the metric depth map.
    Run(RunArgs),
    /// Segment a color image into a 16-bit label map.
    Segment(SegmentArgs),
    /// Draw a sparse seed set from dense ground truth.
    Sample(SampleArgs),
    /// Compare a depth map against ground truth.
    Eval(EvalArgs),
    /// Compute the discontinuity potential (and optionally geodesic cost).
    Potential(PotentialArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rgb: PathBuf,
    /// Relative depth (PFM).
    #[arg(long)]
    rel: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ground truth depth; prints metrics when given.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// External segment labels (PGM) instead of computing them.
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    no_graph: bool,
    #[arg(long, value_parser = parse_fit)]
    fit: Option<FitMode>,
    #[arg(long, value_parser = parse_domain)]
    domain: Option<DepthDomain>,
    #[arg(long)]
    dump_intermediate: Option<PathBuf>,
    #[command(flatten)]
    range: DepthRange,
}

#[derive(Args)]
struct DepthRange {
    #[arg(long, default_value_t = 1e-3)]
    min_depth: f64,
    #[arg(long, default_value_t = 80.0)]
    max_depth: f64,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rgb: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMode {
    Random,
    Lidar,
}

#[derive(Args)]
struct SampleArgs {
    /// Dense ground truth (PFM).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    mode: SampleMode,
    #[arg(long, default_value_t = 0.001)]
    fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 64)]
    lines: usize,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Print a CSV header and row instead of key=value lines.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    range: DepthRange,
}

#[derive(Args)]
struct PotentialArgs {
    /// Metric depth (PFM).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seeds used as geodesic sources; requires --geodesic.
    #[arg(long, requires = "geodesic")]
    seeds: Option<PathBuf>,
    #[arg(long, requires = "seeds")]
    geodesic: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_fit(s: &str) -> Result<FitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_domain(s: &str) -> Result<DepthDomain, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Segment(a) => segment(a),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::Potential(a) => potential_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Numerical(_) => 3,
        Error::EmptyMask => 4,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>) -> sparsedepth::Result<PipelineConfig> {
    match path {
        Some(p) => read_config(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(a: RunArgs) -> sparsedepth::Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(f) = a.fit {
        cfg.fit_mode = f;
    }
    if let Some(d) = a.domain {
        cfg.domain = d;
    }
    let rgb = read_ppm(&a.rgb)?;
    let rel = read_float_map(&a.rel)?;
    let seeds = read_seeds(&a.seeds)?;
    let segments = a
        .segments
        .as_ref()
        .map(|p| read_label_map(p).and_then(|m| SegmentMap::from_label_map(&m)))
        .transpose()?;
    let gt = a.gt.as_ref().map(read_float_map).transpose()?;
    if rgb.shape() != rel.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{} is {}x{} but {} is {}x{}",
            a.rgb.display(),
            rgb.height(),
            rgb.width(),
            a.rel.display(),
            rel.height(),
            rel.width()
        ))
        .at_stage("input"));
    }
    seeds
        .check_bounds(rel.height(), rel.width())
        .map_err(|e| e.in_file(&a.seeds).at_stage("input"))?;
    if let (Some(seg), Some(path)) = (&segments, &a.segments) {
        if seg.shape() != rel.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{} is {}x{} but relative depth is {}x{}",
                path.display(),
                seg.height(),
                seg.width(),
                rel.height(),
                rel.width()
            ))
            .at_stage("segment"));
        }
    }

    let inputs = PipelineInputs {
        rgb: &rgb,
        relative: &rel,
        seeds: &seeds,
        segments: segments.as_ref(),
    };
    let opts = StageOptions {
        refine: !a.no_refine,
        graph: !a.no_graph,
    };
    let out = run_pipeline(&inputs, &cfg, opts)?;
    write_float_map(&a.out, &out.depth)?;
    if let Some(dir) = &a.dump_intermediate {
        dump_intermediates(&out, dir)?;
    }
    if let Some(gt) = gt {
        let report = evaluate(&out.depth, &gt, a.range.min_depth, a.range.max_depth)?;
        print!("{}", report.to_key_value());
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> sparsedepth::Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let rgb = read_ppm(&a.rgb)?;
    let seg = felzenszwalb(&rgb, cfg.seg_scale, cfg.seg_min_size);
    write_label_map(&a.out, &seg.to_label_map())?;
    println!("segments={}", seg.len());
    Ok(())
}

fn sample(a: SampleArgs) -> sparsedepth::Result<()> {
    let gt = read_float_map(&a.gt)?;
    let seeds = match a.mode {
        SampleMode::Random => {
            random_sample(&gt, a.fraction, a.noise_fraction, a.noise_sigma, a.rng_seed)?
        }
        SampleMode::Lidar => lidar_scan_sample(&gt, a.lines, a.rng_seed)?,
    };
    write_seeds(&a.out, &seeds)?;
    println!("seeds={}", seeds.len());
    Ok(())
}

fn eval(a: EvalArgs) -> sparsedepth::Result<()> {
    let pred = read_float_map(&a.pred)?;
    let gt = read_float_map(&a.gt)?;
    let report = evaluate(&pred, &gt, a.range.min_depth, a.range.max_depth)?;
    if a.csv {
        println!("{}", MetricReport::csv_header());
        println!("{}", report.to_csv_row());
    } else {
        print!("{}", report.to_key_value());
    }
    Ok(())
}

fn potential_cmd(a: PotentialArgs) -> sparsedepth::Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let depth: ScalarGrid = read_float_map(&a.depth)?;
    let phi = potential(&depth)?;
    write_float_map(&a.out, &phi)?;
    if let (Some(seeds), Some(out)) = (&a.seeds, &a.geodesic) {
        let seeds = read_seeds(seeds)?;
        seeds.check_bounds(depth.height(), depth.width())?;
        let geo = geodesic_dp(&phi, &seed_sources(&seeds), cfg.dp_sweeps)?;
        write_float_map(out, &geo.cost)?;
    }
    Ok(())
}
