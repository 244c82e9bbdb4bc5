//! Pipeline hyperparameters and their flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::calibrate::{DepthDomain, FitMode};
use crate::error::{Error, Result};
use crate::graphopt::CentroidSpace;
use crate::refine::Basis;

/// Every tunable of the pipeline. `Default` gives the documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Proxy scale, meters.
    pub kappa: f64,
    /// Stability constant added to depth before inversion, meters.
    pub epsilon: f64,
    /// Lower clamp applied to calibrated proxy values.
    pub d_min: f64,
    /// Felzenszwalb scale `k`.
    pub seg_scale: f64,
    /// Felzenszwalb minimum component size, pixels.
    pub seg_min_size: usize,
    /// Neighbors kept per node in the segment graph.
    pub knn: usize,
    /// Bilateral spatial falloff, pixels.
    pub sigma_spatial: f64,
    /// Bilateral range falloff, intensity units.
    pub sigma_range: f64,
    pub bilateral_iters: usize,
    pub fit_mode: FitMode,
    pub basis: Basis,
    /// Harmonic refinement passes.
    pub dp_order: usize,
    /// Minimum number of forward/backward sweep pairs in the geodesic solve.
    pub dp_sweeps: usize,
    /// Calibration domain: inverse depth proxy or raw depth.
    pub domain: DepthDomain,
    /// Where segment centroids live when building the graph.
    pub centroid_space: CentroidSpace,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            epsilon: 1e-6,
            d_min: 1e-6,
            seg_scale: 300.0,
            seg_min_size: 20,
            knn: 8,
            sigma_spatial: 3.0,
            sigma_range: 0.1,
            bilateral_iters: 2,
            fit_mode: FitMode::LeastSquares,
            basis: Basis::Polynomial,
            dp_order: 3,
            dp_sweeps: 4,
            domain: DepthDomain::Inverse,
            centroid_space: CentroidSpace::Planar,
        }
    }
}

/// Recognized keys, in file order.
pub const CONFIG_KEYS: &[&str] = &[
    "kappa",
    "epsilon",
    "d_min",
    "seg_scale",
    "seg_min_size",
    "knn",
    "sigma_spatial",
    "sigma_range",
    "bilateral_iters",
    "fit_mode",
    "basis",
    "dp_order",
    "dp_sweeps",
    "domain",
    "centroid_space",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl PipelineConfig {
    /// Set one key from its textual value. Does not re-validate.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kappa" => self.kappa = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "d_min" => self.d_min = parse_value(key, value)?,
            "seg_scale" => self.seg_scale = parse_value(key, value)?,
            "seg_min_size" => self.seg_min_size = parse_value(key, value)?,
            "knn" => self.knn = parse_value(key, value)?,
            "sigma_spatial" => self.sigma_spatial = parse_value(key, value)?,
            "sigma_range" => self.sigma_range = parse_value(key, value)?,
            "bilateral_iters" => self.bilateral_iters = parse_value(key, value)?,
            "fit_mode" => self.fit_mode = parse_value(key, value)?,
            "basis" => self.basis = parse_value(key, value)?,
            "dp_order" => self.dp_order = parse_value(key, value)?,
            "dp_sweeps" => self.dp_sweeps = parse_value(key, value)?,
            "domain" => self.domain = parse_value(key, value)?,
            "centroid_space" => self.centroid_space = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 10] = [
            (self.kappa.is_finite() && self.kappa > 0.0, "kappa must be > 0"),
            (self.epsilon.is_finite() && self.epsilon >= 0.0, "epsilon must be >= 0"),
            (self.d_min.is_finite() && self.d_min >= 0.0, "d_min must be >= 0"),
            (self.seg_scale.is_finite() && self.seg_scale > 0.0, "seg_scale must be > 0"),
            (self.knn >= 1, "knn must be >= 1"),
            (
                self.sigma_spatial.is_finite() && self.sigma_spatial > 0.0,
                "sigma_spatial must be > 0",
            ),
            (
                self.sigma_range.is_finite() && self.sigma_range > 0.0,
                "sigma_range must be > 0",
            ),
            (self.dp_order >= 1, "dp_order must be >= 1"),
            (self.dp_sweeps >= 1, "dp_sweeps must be >= 1"),
            (self.seg_min_size >= 1, "seg_min_size must be >= 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).to_string())),
            None => Ok(()),
        }
    }

    /// Value of `key` in the same textual form `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "kappa" => self.kappa.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "d_min" => self.d_min.to_string(),
            "seg_scale" => self.seg_scale.to_string(),
            "seg_min_size" => self.seg_min_size.to_string(),
            "knn" => self.knn.to_string(),
            "sigma_spatial" => self.sigma_spatial.to_string(),
            "sigma_range" => self.sigma_range.to_string(),
            "bilateral_iters" => self.bilateral_iters.to_string(),
            "fit_mode" => self.fit_mode.to_string(),
            "basis" => self.basis.to_string(),
            "dp_order" => self.dp_order.to_string(),
            "dp_sweeps" => self.dp_sweeps.to_string(),
            "domain" => self.domain.to_string(),
            "centroid_space" => self.centroid_space.to_string(),
            _ => return None,
        })
    }
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        cfg.set(key.trim(), value.trim()).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                line: i + 1,
                message,
            },
            other => other,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn format_config(cfg: &PipelineConfig) -> String {
    let mut out = String::new();
    for key in CONFIG_KEYS {
        if let Some(v) = cfg.get(key) {
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    out
}

pub fn read_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| e.in_file(path))
}

pub fn write_config(path: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_config(cfg)).map_err(|e| Error::io(path, e))
}
