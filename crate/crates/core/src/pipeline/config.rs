//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::covariance::{EwmaConfig, DEFAULT_EPSILON, DEFAULT_LAMBDA};
use crate::data::{DataFormat, DimensionSpec};
use crate::hull::{DEFAULT_MULTIPLIER, DEFAULT_SIGNIFICANCE};
use crate::polyhedra::{RegionKind, DEFAULT_WINDOW};
use crate::scenarios::DEFAULT_SCENARIO_COUNT;

use super::PipelineError;

/// Region construction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    P1,
    Pinf,
    Ellipsoid,
    Hull,
    HullTrimmed,
    Mpi,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::P1,
        Method::Pinf,
        Method::Ellipsoid,
        Method::Hull,
        Method::HullTrimmed,
        Method::Mpi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::P1 => "p1",
            Method::Pinf => "pinf",
            Method::Ellipsoid => "ellipsoid",
            Method::Hull => "hull",
            Method::HullTrimmed => "hull-trimmed",
            Method::Mpi => "mpi",
        }
    }

    /// The norm kind of score-based methods.
    pub fn region_kind(self) -> Option<RegionKind> {
        match self {
            Method::P1 => Some(RegionKind::P1),
            Method::Pinf => Some(RegionKind::Pinf),
            Method::Ellipsoid => Some(RegionKind::Ellipsoid),
            _ => None,
        }
    }

    pub fn is_hull(self) -> bool {
        matches!(self, Method::Hull | Method::HullTrimmed)
    }

    /// Whether the method needs a scenario set.
    pub fn uses_scenarios(self) -> bool {
        matches!(self, Method::Hull | Method::HullTrimmed | Method::Mpi)
    }

    /// Whether the method has a nominal coverage level.
    pub fn has_alpha(self) -> bool {
        !self.is_hull()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PipelineError::Config(format!("unknown method '{s}'")))
    }
}

/// Error process of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Gaussian,
    /// Gaussian on the logit scale, mapped back into `(0, 1)`.
    Bounded,
    Zero,
}

impl Noise {
    pub fn name(self) -> &'static str {
        match self {
            Noise::Gaussian => "gaussian",
            Noise::Bounded => "bounded",
            Noise::Zero => "zero",
        }
    }
}

impl FromStr for Noise {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Noise::Gaussian),
            "bounded" => Ok(Noise::Bounded),
            "zero" | "none" => Ok(Noise::Zero),
            _ => Err(PipelineError::Config(format!("unknown noise '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    /// Number of evaluation frames appended after the training range.
    pub eval_len: usize,
    pub noise: Noise,
    /// Average error standard deviation.
    pub noise_sd: f64,
    /// Long-run lag-one correlation between adjacent dimensions.
    pub rho: f64,
    /// AR(1) persistence of the covariance parameters.
    pub persistence: f64,
    /// Innovation scale of the covariance parameters.
    pub volatility: f64,
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            eval_len: 2000,
            noise: Noise::Gaussian,
            noise_sd: 0.05,
            rho: 0.5,
            persistence: 0.995,
            volatility: 0.01,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: DataFormat,
    pub horizons: usize,
    pub locations: usize,
    /// Frames in the training range.
    pub train: usize,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub window: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub center_errors: bool,
    pub scenarios: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub trim: bool,
    pub significance: f64,
    pub multiplier: f64,
    /// Optional per-step marginal quantile curves (`t,dim,level,value`).
    pub quantiles: Option<PathBuf>,
    pub volume_samples: Option<usize>,
    /// Volumes are estimated on every `volume_stride`-th evaluation step.
    pub volume_stride: usize,
    pub volume_alphas: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub simulate: SimulateConfig,
}

/// `0.05, 0.10, …, 0.95`.
pub fn default_alphas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            format: DataFormat::Wide,
            horizons: 1,
            locations: 1,
            train: 400,
            methods: vec![Method::P1, Method::Pinf, Method::Ellipsoid, Method::Mpi],
            alphas: default_alphas(),
            window: DEFAULT_WINDOW,
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            center_errors: false,
            scenarios: DEFAULT_SCENARIO_COUNT,
            seed: 1,
            output: PathBuf::from("out"),
            trim: true,
            significance: DEFAULT_SIGNIFICANCE,
            multiplier: DEFAULT_MULTIPLIER,
            quantiles: None,
            volume_samples: None,
            volume_stride: 10,
            volume_alphas: None,
            jobs: None,
            simulate: SimulateConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(PipelineError::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, PipelineError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "auto" && v != "none").then_some(v)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file. Blank lines and `#` comments are ignored.
    pub fn from_str_config(text: &str) -> Result<Self, PipelineError> {
        let mut config = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_config(&text)
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let sim = &mut self.simulate;
        match key {
            "data" => self.data = optional(value).map(PathBuf::from),
            "format" => {
                self.format = value
                    .parse()
                    .map_err(|_| PipelineError::Config(format!("invalid format '{value}'")))?
            }
            "horizons" => self.horizons = parse(key, value)?,
            "locations" => self.locations = parse(key, value)?,
            "train" => self.train = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "alphas" => self.alphas = parse_list(key, value)?,
            "window" => self.window = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "center_errors" => self.center_errors = parse_bool(key, value)?,
            "scenarios" => self.scenarios = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "trim" => self.trim = parse_bool(key, value)?,
            "significance" => self.significance = parse(key, value)?,
            "multiplier" => self.multiplier = parse(key, value)?,
            "quantiles" => self.quantiles = optional(value).map(PathBuf::from),
            "volume.samples" => self.volume_samples = optional(value).map(|v| parse(key, v)).transpose()?,
            "volume.stride" => self.volume_stride = parse(key, value)?,
            "volume.alphas" => {
                self.volume_alphas = optional(value).map(|v| parse_list(key, v)).transpose()?
            }
            "jobs" => self.jobs = optional(value).map(|v| parse(key, v)).transpose()?,
            "simulate.eval" => sim.eval_len = parse(key, value)?,
            "simulate.noise" => sim.noise = value.parse()?,
            "simulate.sd" => sim.noise_sd = parse(key, value)?,
            "simulate.rho" => sim.rho = parse(key, value)?,
            "simulate.persistence" => sim.persistence = parse(key, value)?,
            "simulate.volatility" => sim.volatility = parse(key, value)?,
            "simulate.seed" => sim.seed = optional(value).map(|v| parse(key, v)).transpose()?,
            _ => return Err(PipelineError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into());
        let sim = &self.simulate;
        vec![
            ("data", path(&self.data)),
            ("format", self.format.to_string()),
            ("horizons", self.horizons.to_string()),
            ("locations", self.locations.to_string()),
            ("train", self.train.to_string()),
            ("methods", join(&self.methods)),
            ("alphas", join(&self.alphas)),
            ("window", self.window.to_string()),
            ("lambda", self.lambda.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("center_errors", self.center_errors.to_string()),
            ("scenarios", self.scenarios.to_string()),
            ("seed", self.seed.to_string()),
            ("output", self.output.display().to_string()),
            ("trim", self.trim.to_string()),
            ("significance", self.significance.to_string()),
            ("multiplier", self.multiplier.to_string()),
            ("quantiles", path(&self.quantiles)),
            ("volume.samples", opt(self.volume_samples.map(|v| v.to_string()))),
            ("volume.stride", self.volume_stride.to_string()),
            ("volume.alphas", opt(self.volume_alphas.as_ref().map(|v| join(v)))),
            ("jobs", opt(self.jobs.map(|v| v.to_string()))),
            ("simulate.eval", sim.eval_len.to_string()),
            ("simulate.noise", sim.noise.name().to_string()),
            ("simulate.sd", sim.noise_sd.to_string()),
            ("simulate.rho", sim.rho.to_string()),
            ("simulate.persistence", sim.persistence.to_string()),
            ("simulate.volatility", sim.volatility.to_string()),
            ("simulate.seed", opt(sim.seed.map(|v| v.to_string()))),
        ]
    }

    /// The config in file form; parsing it back yields an equal config.
    pub fn to_config_string(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn spec(&self) -> Result<DimensionSpec, PipelineError> {
        Ok(DimensionSpec::new(self.horizons, self.locations)?)
    }

    pub fn ewma(&self) -> EwmaConfig {
        EwmaConfig {
            lambda: self.lambda,
            epsilon: self.epsilon,
            center_errors: self.center_errors,
        }
    }

    /// Levels at which volumes are estimated.
    pub fn volume_levels(&self) -> Vec<f64> {
        self.volume_alphas.clone().unwrap_or_else(|| self.alphas.clone())
    }

    pub fn sample_count(&self, dim: usize) -> usize {
        self.volume_samples
            .unwrap_or_else(|| crate::evaluation::default_sample_count(dim))
    }

    /// Problems that make the config unusable, as human-readable lines.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.methods.is_empty() {
            out.push("method list is empty".to_string());
        }
        if self.alphas.is_empty() {
            out.push("alpha grid is empty".to_string());
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                out.push(format!("alpha {a} outside (0, 1)"));
            } else if (self.window as f64 * a).round() < 1.0 {
                out.push(format!("alpha {a} too small for window {}", self.window));
            }
        }
        for &a in &self.volume_levels() {
            if !self.alphas.contains(&a) {
                out.push(format!("volume alpha {a} is not on the alpha grid"));
            }
        }
        if self.window == 0 {
            out.push("window must be positive".to_string());
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            out.push(format!("lambda {} outside (0, 1)", self.lambda));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            out.push(format!("epsilon {} must be finite and non-negative", self.epsilon));
        }
        if self.scenarios == 0 {
            out.push("scenario count must be positive".to_string());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            out.push(format!("significance {} outside (0, 1)", self.significance));
        }
        if !(self.multiplier > 0.0) {
            out.push(format!("multiplier {} must be positive", self.multiplier));
        }
        if self.volume_stride == 0 {
            out.push("volume stride must be positive".to_string());
        }
        if self.volume_samples == Some(0) {
            out.push("volume sample count must be positive".to_string());
        }
        if self.jobs == Some(0) {
            out.push("jobs must be positive".to_string());
        }
        if self.horizons == 0 || self.locations == 0 {
            out.push("horizons and locations must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        match self.problems().into_iter().next() {
            Some(p) => Err(PipelineError::Config(p)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let text = "\
# comment
data = d.csv
horizons = 3
locations = 2
methods = p1, pinf ,hull-trimmed
alphas = 0.5,0.9
volume.stride = 5   # trailing
simulate.noise = zero
jobs = auto
";
        let c = RunConfig::from_str_config(text).unwrap();
        assert_eq!(c.data, Some(PathBuf::from("d.csv")));
        assert_eq!(c.spec().unwrap().dim(), 6);
        assert_eq!(c.methods, vec![Method::P1, Method::Pinf, Method::HullTrimmed]);
        assert_eq!(c.alphas, vec![0.5, 0.9]);
        assert_eq!(c.volume_stride, 5);
        assert_eq!(c.simulate.noise, Noise::Zero);
        assert_eq!(c.jobs, None);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::default();
        c.set("volume.alphas", "0.8,0.9").unwrap();
        c.set("simulate.seed", "7").unwrap();
        c.set("quantiles", "q.csv").unwrap();
        assert_eq!(RunConfig::from_str_config(&c.to_config_string()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_str_config("colour = red").is_err());
        assert!(RunConfig::from_str_config("window").is_err());
        assert!(RunConfig::from_str_config("window = many").is_err());
        assert!(RunConfig::from_str_config("methods = p2").is_err());
    }

    #[test]
    fn default_grid_has_nineteen_levels() {
        let a = default_alphas();
        assert_eq!(a.len(), 19);
        assert_eq!(a[0], 0.05);
        assert_eq!(a[18], 0.95);
        assert!(RunConfig::default().problems().is_empty());
    }

    #[test]
    fn problems_are_listed() {
        let mut c = RunConfig::default();
        c.alphas = vec![1.2, 0.001];
        c.methods.clear();
        let p = c.problems();
        assert!(p.iter().any(|s| s.contains("empty")));
        assert!(p.iter().any(|s| s.contains("1.2")));
        assert!(p.iter().any(|s| s.contains("too small")));
        assert!(c.validate().is_err());
    }
}
