use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use polyregion::data::write_dataset;
use polyregion::evaluation::{default_sample_count, monte_carlo_volume, Region};
use polyregion::hull::{convex_hull, hull_volume, quickhull, sample_mean_covariance, trim_outliers, HullError};
use polyregion::mpi::BoxRegion;
use polyregion::pipeline::{
    cmd_check, cmd_run, simulate_dataset, PipelineError, RunConfig, EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE,
};
use polyregion::polyhedra::{analytic_volume_unclipped, PolyhedralRegion};
use polyregion::scenarios::read_scenarios;

#[derive(Parser)]
#[command(name = "polyregion", version, about = "Polyhedral predictive regions for multivariate forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a known, slowly varying error covariance.
    Simulate(ConfigArgs),
    /// Fit regions over the evaluation range and write coverage and volume reports.
    Run(ConfigArgs),
    /// Validate the dataset and config without building regions.
    Check(ConfigArgs),
    /// Convex hull and volume of a scenario file.
    Hull(HullArgs),
    /// Monte Carlo volume of a serialized region inside the unit cube.
    Volume(VolumeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set volume.stride=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    horizons: Option<usize>,
    #[arg(long)]
    locations: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    /// Comma-separated subset of p1, pinf, ellipsoid, hull, hull-trimmed, mpi.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long)]
    multiplier: Option<f64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct HullArgs {
    /// CSV with a header row and one scenario per line.
    scenarios: PathBuf,
    /// Drop scenarios beyond the chi-square Mahalanobis threshold first.
    #[arg(long, overrides_with = "no_trim")]
    trim: bool,
    #[arg(long = "no-trim")]
    no_trim: bool,
    #[arg(long, default_value_t = polyregion::hull::DEFAULT_SIGNIFICANCE)]
    significance: f64,
    #[arg(long, default_value_t = polyregion::hull::DEFAULT_MULTIPLIER)]
    multiplier: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VolumeArgs {
    /// Region JSON: a norm region, a box, or a hull.
    region: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code: code as u8,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(e.exit_code(), e.to_string())
    }
}

impl From<HullError> for Failure {
    fn from(e: HullError) -> Self {
        let code = match e {
            HullError::DimensionTooHigh { .. } => EXIT_USAGE,
            HullError::DimensionMismatch { .. } | HullError::NonFinite | HullError::Empty => EXIT_DATA,
            _ => EXIT_NUMERICAL,
        };
        Failure::new(code, e.to_string())
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut pairs: Vec<(&str, String)> = Vec::new();
    let mut push = |k: &'static str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k, v));
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    push("data", path(&args.data));
    push("format", args.format.clone());
    push("horizons", args.horizons.map(|v| v.to_string()));
    push("locations", args.locations.map(|v| v.to_string()));
    push("train", args.train.map(|v| v.to_string()));
    push("methods", args.methods.clone());
    push("alphas", args.alphas.clone());
    push("window", args.window.map(|v| v.to_string()));
    push("lambda", args.lambda.map(|v| v.to_string()));
    push("epsilon", args.epsilon.map(|v| v.to_string()));
    push("scenarios", args.scenarios.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("output", path(&args.output));
    push("significance", args.significance.map(|v| v.to_string()));
    push("multiplier", args.multiplier.map(|v| v.to_string()));
    push("jobs", args.jobs.map(|v| v.to_string()));
    for (k, v) in pairs {
        config.set(k, &v)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("--set expects KEY=VALUE, got '{kv}'")))?;
        config.set(k.trim(), v.trim())?;
    }
    Ok(config)
}

fn simulate(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let dataset = simulate_dataset(&config)?;
    let path = config.data.clone().unwrap_or_else(|| config.output.join("data.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", dir.display())))?;
    }
    let file = fs::File::create(&path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
    write_dataset(&dataset, file, config.format).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    println!(
        "wrote {} frames (D = {}, train = {}) to {}",
        dataset.frames().len(),
        dataset.dim(),
        dataset.train_len(),
        path.display()
    );
    Ok(())
}

fn run(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    let out = cmd_run(&config)?;
    println!("{} evaluation steps, D = {}", out.report.steps.len(), out.report.dim);
    for c in &out.report.coverage {
        match c.record.alpha {
            Some(a) if (a * 100.0).round() as i64 % 10 == 0 || a == 0.95 => {
                println!("  {:<13} alpha {:<5} coverage {:.4}", c.method.name(), a, c.record.coverage)
            }
            Some(_) => {}
            None => println!("  {:<13}             coverage {:.4}", c.method.name(), c.record.coverage),
        }
    }
    for p in [&out.coverage, &out.volumes, &out.summary] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn check(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load_config(args)?;
    print!("{}", cmd_check(&config));
    Ok(())
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn emit(value: &Value, output: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    match output {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn hull(args: &HullArgs) -> Result<(), Failure> {
    let file = fs::File::open(&args.scenarios)
        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", args.scenarios.display())))?;
    let set = read_scenarios(file).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let trim = args.trim && !args.no_trim;
    let kept = if trim {
        let (mean, cov) = sample_mean_covariance(&set);
        trim_outliers(&set, &cov, &mean, args.significance, args.multiplier)?
    } else {
        set.clone()
    };
    let h = quickhull(&kept)?;
    let mut value = h.to_json();
    value["points"] = json!(set.len());
    value["kept"] = json!(kept.len());
    value["trimmed"] = json!(trim);
    value["volume"] = json!(hull_volume(&h));
    emit(&value, args.output.as_deref())
}

fn volume(args: &VolumeArgs) -> Result<(), Failure> {
    let text = read_file(&args.region)?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let bad = |e: serde_json::Error| Failure::new(EXIT_DATA, format!("{}: {e}", args.region.display()));
    let (region, analytic): (Box<dyn Region>, Option<f64>) = if raw.get("kind").is_some() {
        let r: PolyhedralRegion = serde_json::from_value(raw).map_err(bad)?;
        let v = analytic_volume_unclipped(&r);
        (Box::new(r), Some(v))
    } else if raw.get("lower").is_some() {
        let r: BoxRegion = serde_json::from_value(raw).map_err(bad)?;
        let v = r.volume();
        (Box::new(r), Some(v))
    } else if raw.get("vertices").is_some() {
        let vertices: Vec<Vec<f64>> = serde_json::from_value(raw["vertices"].clone()).map_err(bad)?;
        let h = convex_hull(&vertices)?;
        let v = hull_volume(&h);
        (Box::new(h), Some(v))
    } else {
        return Err(Failure::new(EXIT_DATA, "region JSON must describe a norm region, a box or a hull"));
    };
    let dim = region.dim();
    let samples = args.samples.unwrap_or_else(|| default_sample_count(dim));
    let rec = monte_carlo_volume(region.as_ref(), dim, samples, args.seed)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let value = json!({
        "dimension": dim,
        "volume": rec.volume,
        "stderr": rec.stderr,
        "samples": rec.samples,
        "hits": rec.hits,
        "cube_volume": rec.cube_volume,
        "seed": args.seed,
        "unclipped_volume": analytic,
    });
    emit(&value, None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Check(a) => check(a),
        Command::Hull(a) => hull(a),
        Command::Volume(a) => volume(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
