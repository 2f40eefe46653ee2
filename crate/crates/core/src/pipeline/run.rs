//! Rolling evaluation: covariance and score windows advance sequentially over
//! past data only; per-step region construction and scoring then run in
//! parallel.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Method, RunConfig};
use super::PipelineError;
use crate::covariance::{EwmaCovarianceState, SEED_COUNT};
use crate::data::{read_frames, Dataset};
use crate::evaluation::{nested_score_hits, CalibrationRecord, UniformSamples, VolumeRecord};
use crate::hull::{hull_volume, quickhull, sample_mean_covariance, trim_outliers, ConvexHull, MAX_HULL_DIM};
use crate::linalg::{cholesky_inverse_factor, SymmetricMatrix, UpperTriangularFactor};
use crate::marginal::{default_levels, read_quantile_curves, MarginalQuantileCurve};
use crate::mpi::{adjust_intervals, box_contains, box_volume};
use crate::polyhedra::{fit_scales, RegionKind, ScoreSeries};
use crate::scenarios::{sample_scenarios, step_seed, ScenarioSet};

/// Mixed into the run seed to derive volume-sampling seeds.
pub const VOLUME_SEED_SALT: u64 = 0x05EE_D0FC_0BE0;

/// Everything a step needs, computed from strictly earlier frames.
#[derive(Debug, Clone)]
struct StepPlan {
    position: usize,
    t: i64,
    forecast: Vec<f64>,
    measurement: Option<Vec<f64>>,
    sigma: SymmetricMatrix,
    factor: UpperTriangularFactor,
    /// Per region kind, one scale per alpha of the grid.
    scales: Vec<(RegionKind, Vec<f64>)>,
}

/// Outcome of one method at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodStep {
    pub method: Method,
    /// One entry per alpha, or a single entry for hulls. Empty when the
    /// measurement is missing.
    pub covered: Vec<bool>,
    /// Hull construction failed; the step counts as not covered.
    pub failed: bool,
    /// MPI levels whose coverage target was unattainable.
    pub unattained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub t: i64,
    pub methods: Vec<MethodStep>,
    pub volumes: Vec<VolumeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodCoverage {
    pub method: Method,
    pub record: CalibrationRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dim: usize,
    pub steps: Vec<StepResult>,
    pub coverage: Vec<MethodCoverage>,
    /// Failure that stopped the run early.
    pub failure: Option<StepFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub t: i64,
    pub message: String,
    pub kind: &'static str,
    pub exit_code: i32,
}

impl StepFailure {
    fn new(t: i64, e: &PipelineError) -> Self {
        Self {
            t,
            message: e.to_string(),
            kind: e.kind(),
            exit_code: e.exit_code(),
        }
    }
}

impl RunReport {
    pub fn volumes(&self) -> impl Iterator<Item = &VolumeRecord> + '_ {
        self.steps.iter().flat_map(|s| s.volumes.iter())
    }

    pub fn coverage_of(&self, method: Method, alpha: Option<f64>) -> Option<&CalibrationRecord> {
        self.coverage
            .iter()
            .find(|c| c.method == method && c.record.alpha == alpha)
            .map(|c| &c.record)
    }

    /// Number of steps whose hull could not be built, per method.
    pub fn failures(&self) -> BTreeMap<Method, usize> {
        let mut out = BTreeMap::new();
        for s in &self.steps {
            for m in &s.methods {
                *out.entry(m.method).or_insert(0) += m.failed as usize;
            }
        }
        out
    }

    pub fn unattained(&self) -> usize {
        self.steps.iter().flat_map(|s| &s.methods).map(|m| m.unattained).sum()
    }
}

fn region_kinds(methods: &[Method]) -> Vec<RegionKind> {
    RegionKind::ALL
        .into_iter()
        .filter(|k| methods.iter().any(|m| m.region_kind() == Some(*k)))
        .collect()
}

/// Number of errors seeding the covariance recursion.
fn seed_len(dim: usize) -> usize {
    (dim + 1).max(SEED_COUNT)
}

/// Plans in time order, plus the failure that cut the pass short.
type PlannedSteps = (Vec<StepPlan>, Option<(i64, PipelineError)>);

/// Sequential pass producing one plan per evaluation frame. A numerical
/// failure stops the pass; plans before it are returned with the error.
fn plan_steps(
    dataset: &Dataset,
    config: &RunConfig,
    kinds: &[RegionKind],
) -> Result<PlannedSteps, PipelineError> {
    let dim = dataset.dim();
    let train = dataset.train_len();
    let seed = seed_len(dim);
    let required = seed + config.window;
    if train < required {
        return Err(PipelineError::InsufficientTraining {
            required,
            actual: train,
        });
    }
    let errors: Vec<Vec<f64>> = dataset
        .training()
        .iter()
        .map(|f| f.error().expect("training frames carry measurements"))
        .collect();
    let mut state = EwmaCovarianceState::initialize(config.ewma(), &errors[..seed])?;
    let mut series: Vec<ScoreSeries> = kinds.iter().map(|&k| ScoreSeries::new(k, config.window)).collect();
    let mut z = vec![0.0; dim];
    let zero = vec![0.0; dim];
    let mut absorb = |state: &mut EwmaCovarianceState,
                      series: &mut [ScoreSeries],
                      factor: &UpperTriangularFactor,
                      e: &[f64]|
     -> Result<(), PipelineError> {
        factor.whiten_into(e, &zero, &mut z);
        for s in series.iter_mut() {
            s.push(s.kind().norm(&z));
        }
        state.update(e)?;
        Ok(())
    };
    for e in &errors[seed..] {
        let factor = state.factor()?;
        absorb(&mut state, &mut series, &factor, e)?;
    }

    let mut plans = Vec::with_capacity(dataset.evaluation().len());
    for (position, frame) in dataset.evaluation().iter().enumerate() {
        let step = (|| -> Result<StepPlan, PipelineError> {
            let sigma = state.covariance();
            let factor = cholesky_inverse_factor(&sigma)?;
            let scales = series
                .iter()
                .map(|s| Ok((s.kind(), fit_scales(s, &config.alphas)?)))
                .collect::<Result<Vec<_>, PipelineError>>()?;
            Ok(StepPlan {
                position,
                t: frame.t,
                forecast: frame.forecast.clone(),
                measurement: frame.measurement.clone(),
                sigma,
                factor,
                scales,
            })
        })();
        let plan = match step {
            Ok(p) => p,
            Err(e) => return Ok((plans, Some((frame.t, e)))),
        };
        if let Some(e) = frame.error() {
            if let Err(err) = absorb(&mut state, &mut series, &plan.factor, &e) {
                plans.push(plan);
                return Ok((plans, Some((frame.t, err))));
            }
        }
        plans.push(plan);
    }
    Ok((plans, None))
}

struct StepContext<'a> {
    config: &'a RunConfig,
    dim: usize,
    /// Indices into the alpha grid at which volumes are estimated.
    volume_alphas: Vec<usize>,
    samples: usize,
    marginals: Option<&'a BTreeMap<i64, MarginalQuantileCurve>>,
}

fn hull_step(
    method: Method,
    scenarios: &ScenarioSet,
    config: &RunConfig,
) -> Result<ConvexHull, PipelineError> {
    let set = if method == Method::HullTrimmed {
        let (mean, cov) = sample_mean_covariance(scenarios);
        trim_outliers(scenarios, &cov, &mean, config.significance, config.multiplier)?
    } else {
        scenarios.clone()
    };
    Ok(quickhull(&set)?)
}

fn evaluate_step(plan: &StepPlan, ctx: &StepContext<'_>) -> Result<StepResult, PipelineError> {
    let config = ctx.config;
    let alphas = &config.alphas;
    let with_volume = plan.position.is_multiple_of(config.volume_stride);
    let samples = if with_volume && config.methods.iter().any(|m| m.region_kind().is_some()) {
        Some(UniformSamples::new(
            ctx.dim,
            ctx.samples,
            step_seed(config.seed ^ VOLUME_SEED_SALT, plan.t),
        )?)
    } else {
        None
    };
    let scenarios = if config.methods.iter().any(|m| m.uses_scenarios()) {
        let marginals = match ctx.marginals.and_then(|m| m.get(&plan.t)) {
            Some(m) => m.clone(),
            None => {
                let sd: Vec<f64> = plan.sigma.diagonal().iter().map(|v| v.sqrt()).collect();
                MarginalQuantileCurve::gaussian(&plan.forecast, &sd, &default_levels())?
            }
        };
        let correlation = plan.sigma.to_correlation();
        let set = sample_scenarios(&marginals, &correlation, config.scenarios, step_seed(config.seed, plan.t))?;
        Some((marginals, set))
    } else {
        None
    };

    let x = plan.measurement.as_deref();
    let mut methods = Vec::with_capacity(config.methods.len());
    let mut volumes = Vec::new();
    for &method in &config.methods {
        let mut out = MethodStep {
            method,
            covered: Vec::new(),
            failed: false,
            unattained: 0,
        };
        if let Some(kind) = method.region_kind() {
            let scales = &plan.scales.iter().find(|(k, _)| *k == kind).expect("scales planned").1;
            if let Some(x) = x {
                let mut z = vec![0.0; ctx.dim];
                plan.factor.whiten_into(x, &plan.forecast, &mut z);
                let s = kind.norm(&z);
                out.covered = scales.iter().map(|&c| s <= c).collect();
            }
            if let Some(samples) = &samples {
                let vs: Vec<f64> = ctx.volume_alphas.iter().map(|&i| scales[i]).collect();
                let hits = nested_score_hits(samples, kind, &plan.forecast, &plan.factor, &vs);
                for (&i, h) in ctx.volume_alphas.iter().zip(hits) {
                    volumes.push(VolumeRecord::from_counts(h, samples.len()).labelled(
                        plan.t,
                        method.name(),
                        Some(alphas[i]),
                    ));
                }
            }
        } else {
            let (marginals, set) = scenarios.as_ref().expect("scenarios drawn");
            if method == Method::Mpi {
                for (i, &alpha) in alphas.iter().enumerate() {
                    let b = adjust_intervals(marginals, set, alpha)?;
                    out.unattained += !b.attained as usize;
                    if let Some(x) = x {
                        out.covered.push(box_contains(&b.region, x)?);
                    }
                    if with_volume && ctx.volume_alphas.contains(&i) {
                        volumes.push(VolumeRecord::exact(box_volume(&b.region)).labelled(
                            plan.t,
                            method.name(),
                            Some(alpha),
                        ));
                    }
                }
            } else {
                let volume = match hull_step(method, set, config) {
                    Ok(h) => {
                        if let Some(x) = x {
                            out.covered.push(h.contains(x));
                        }
                        hull_volume(&h)
                    }
                    Err(e) => {
                        log::warn!("t={}: {} skipped: {e}", plan.t, method.name());
                        out.failed = true;
                        if x.is_some() {
                            out.covered.push(false);
                        }
                        0.0
                    }
                };
                if with_volume {
                    volumes.push(VolumeRecord::exact(volume).labelled(plan.t, method.name(), None));
                }
            }
        }
        methods.push(out);
    }
    Ok(StepResult {
        t: plan.t,
        methods,
        volumes,
    })
}

fn aggregate(config: &RunConfig, steps: &[StepResult]) -> Result<Vec<MethodCoverage>, PipelineError> {
    let measured: Vec<&StepResult> = steps
        .iter()
        .filter(|s| s.methods.first().is_some_and(|m| !m.covered.is_empty()))
        .collect();
    if measured.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (j, &method) in config.methods.iter().enumerate() {
        let levels: Vec<Option<f64>> = if method.has_alpha() {
            config.alphas.iter().map(|&a| Some(a)).collect()
        } else {
            vec![None]
        };
        for (i, alpha) in levels.into_iter().enumerate() {
            let indicators = measured.iter().map(|s| s.methods[j].covered[i]).collect();
            out.push(MethodCoverage {
                method,
                record: CalibrationRecord::from_indicators(alpha, indicators)?,
            });
        }
    }
    Ok(out)
}

/// Runs the rolling evaluation in memory.
///
/// `marginals` optionally supplies per-step quantile curves; steps without an
/// entry use Gaussian marginals from the covariance diagonal.
pub fn run_pipeline(
    dataset: &Dataset,
    config: &RunConfig,
    marginals: Option<&BTreeMap<i64, MarginalQuantileCurve>>,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let dim = dataset.dim();
    if dim > MAX_HULL_DIM && config.methods.iter().any(|m| m.is_hull()) {
        return Err(PipelineError::HullRefused { dim, max: MAX_HULL_DIM });
    }
    let kinds = region_kinds(&config.methods);
    let (plans, failure) = plan_steps(dataset, config, &kinds)?;
    let ctx = StepContext {
        config,
        dim,
        volume_alphas: config
            .volume_levels()
            .iter()
            .filter_map(|a| config.alphas.iter().position(|b| b == a))
            .collect(),
        samples: config.sample_count(dim),
        marginals,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<StepResult, PipelineError>> =
        pool.install(|| plans.par_iter().map(|p| evaluate_step(p, &ctx)).collect());
    let mut steps = Vec::with_capacity(results.len());
    let mut failure = failure.map(|(t, e)| StepFailure::new(t, &e));
    for (plan, r) in plans.iter().zip(results) {
        match r {
            Ok(s) => steps.push(s),
            Err(e) => {
                failure = Some(StepFailure::new(plan.t, &e));
                break;
            }
        }
    }
    let coverage = aggregate(config, &steps)?;
    Ok(RunReport {
        dim,
        steps,
        coverage,
        failure,
    })
}

/// Paths written by [`cmd_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub coverage: PathBuf,
    pub volumes: PathBuf,
    pub summary: PathBuf,
    pub report: RunReport,
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_coverage(path: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record(["method", "alpha", "coverage", "deviation"])
        .map_err(|e| output_error(path, e))?;
    for c in &report.coverage {
        w.write_record([
            c.method.name().to_string(),
            fmt_opt(c.record.alpha),
            c.record.coverage.to_string(),
            fmt_opt(c.record.deviation),
        ])
        .map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

fn write_volumes(path: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record(["method", "t", "alpha", "volume", "stderr"])
        .map_err(|e| output_error(path, e))?;
    for v in report.volumes() {
        w.write_record([
            v.region.clone(),
            v.t.to_string(),
            fmt_opt(v.alpha),
            v.volume.to_string(),
            v.stderr.to_string(),
        ])
        .map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| output_error(path, e))
}

fn summary_json(config: &RunConfig, dataset: &Dataset, report: &RunReport) -> Value {
    let config_map: serde_json::Map<String, Value> = config
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let failures = report.failures();
    let methods: serde_json::Map<String, Value> = config
        .methods
        .iter()
        .map(|m| {
            let cov: Vec<Value> = report
                .coverage
                .iter()
                .filter(|c| c.method == *m)
                .map(|c| json!({"alpha": c.record.alpha, "coverage": c.record.coverage, "covered": c.record.covered()}))
                .collect();
            (
                m.name().to_string(),
                json!({"step_failures": failures.get(m).copied().unwrap_or(0), "coverage": cov}),
            )
        })
        .collect();
    json!({
        "config": config_map,
        "seeds": {
            "scenarios": config.seed,
            "volume": config.seed ^ VOLUME_SEED_SALT,
            "derivation": "splitmix64(seed xor t * golden ratio)"
        },
        "dimension": report.dim,
        "frames": dataset.frames().len(),
        "train": dataset.train_len(),
        "evaluated_steps": report.steps.len(),
        "measured_steps": report.coverage.first().map_or(0, |c| c.record.len()),
        "volume_samples": config.sample_count(report.dim),
        "mpi_unattained": report.unattained(),
        "methods": methods,
        "complete": report.failure.is_none(),
    })
}

fn write_failure(dir: &Path, error: &PipelineError, t: Option<i64>) {
    let mut value = json!({
        "error": error.to_string(),
        "kind": error.kind(),
        "exit_code": error.exit_code(),
        "step": t,
    });
    if let PipelineError::HullRefused { dim, max } = error {
        value["dimension"] = json!(dim);
        value["max_dimension"] = json!(max);
    }
    let path = dir.join("failure.json");
    if let Err(e) = write_json(&path, &value) {
        log::error!("could not write failure manifest: {e}");
    }
}

fn load_marginals(config: &RunConfig, dim: usize) -> Result<Option<BTreeMap<i64, MarginalQuantileCurve>>, PipelineError> {
    config
        .quantiles
        .as_ref()
        .map(|p| {
            let f = fs::File::open(p).map_err(|source| PipelineError::Io {
                path: p.clone(),
                source,
            })?;
            Ok(read_quantile_curves(f, dim)?)
        })
        .transpose()
}

/// Loads the configured dataset, runs the evaluation and writes
/// `coverage.csv`, `volumes.csv` and `summary.json` into the output directory.
/// On failure, whatever was computed is still written, plus `failure.json`.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutputs, PipelineError> {
    config.validate()?;
    let dir = &config.output;
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.clone(),
        source,
    })?;
    let stale = dir.join("failure.json");
    if stale.exists() {
        fs::remove_file(&stale).map_err(|source| PipelineError::Io { path: stale, source })?;
    }
    let prepared = (|| {
        let dim = config.spec()?.dim();
        if dim > MAX_HULL_DIM && config.methods.iter().any(|m| m.is_hull()) {
            return Err(PipelineError::HullRefused { dim, max: MAX_HULL_DIM });
        }
        let path = config.data.as_ref().ok_or(PipelineError::NoData)?;
        let file = fs::File::open(path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let frames = read_frames(file, config.spec()?, config.format)?;
        let dataset = Dataset::new(config.spec()?, frames, config.train)?;
        let marginals = load_marginals(config, dataset.dim())?;
        let report = run_pipeline(&dataset, config, marginals.as_ref())?;
        Ok((dataset, report))
    })();
    let (dataset, report) = match prepared {
        Ok(v) => v,
        Err(e) => {
            write_failure(dir, &e, None);
            return Err(e);
        }
    };
    let outputs = RunOutputs {
        coverage: dir.join("coverage.csv"),
        volumes: dir.join("volumes.csv"),
        summary: dir.join("summary.json"),
        report,
    };
    write_coverage(&outputs.coverage, &outputs.report)?;
    write_volumes(&outputs.volumes, &outputs.report)?;
    write_json(&outputs.summary, &summary_json(config, &dataset, &outputs.report))?;
    if let Some(f) = &outputs.report.failure {
        let value = json!({
            "error": f.message,
            "kind": f.kind,
            "exit_code": f.exit_code,
            "step": f.t,
            "completed_steps": outputs.report.steps.len(),
        });
        write_json(&dir.join("failure.json"), &value)?;
        return Err(PipelineError::Step {
            t: f.t,
            source: Box::new(PipelineError::Numerical(f.message.clone())),
        });
    }
    Ok(outputs)
}
