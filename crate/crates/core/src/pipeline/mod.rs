//! End-to-end runs: simulate data, fit regions step by step, score them and
//! write reports.

mod check;
mod config;
mod run;
mod simulate;

use std::path::PathBuf;

use thiserror::Error;

use crate::covariance::CovarianceError;
use crate::data::DataError;
use crate::evaluation::EvaluationError;
use crate::hull::HullError;
use crate::linalg::LinalgError;
use crate::marginal::MarginalError;
use crate::mpi::MpiError;
use crate::polyhedra::RegionError;
use crate::scenarios::ScenarioError;

pub use check::{cmd_check, CheckReport, Finding};
pub use config::{default_alphas, Method, Noise, RunConfig, SimulateConfig};
pub use run::{
    cmd_run, run_pipeline, MethodCoverage, MethodStep, RunOutputs, RunReport, StepFailure, StepResult, VOLUME_SEED_SALT,
};
pub use simulate::{simulate_dataset, true_covariance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("hull construction refused: dimension {dim} exceeds the cap of {max}")]
    HullRefused { dim: usize, max: usize },
    #[error("training range has {actual} frames, at least {required} needed for covariance burn-in and the score window")]
    InsufficientTraining { required: usize, actual: usize },
    #[error("no dataset path configured")]
    NoData,
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("marginals: {0}")]
    Marginal(#[from] MarginalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("covariance: {0}")]
    Covariance(#[from] CovarianceError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
    #[error("region: {0}")]
    Region(#[from] RegionError),
    #[error("hull: {0}")]
    Hull(#[from] HullError),
    #[error("scenarios: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("mpi: {0}")]
    Mpi(#[from] MpiError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] EvaluationError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("step t={t}: {source}")]
    Step {
        t: i64,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit code: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::HullRefused { .. } | PipelineError::NoData => EXIT_USAGE,
            PipelineError::InsufficientTraining { .. }
            | PipelineError::Data(_)
            | PipelineError::Marginal(_)
            | PipelineError::Io { .. }
            | PipelineError::Output { .. } => EXIT_DATA,
            PipelineError::Step { source, .. } => source.exit_code(),
            PipelineError::Hull(HullError::DimensionTooHigh { .. }) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::HullRefused { .. } => "hull_dimension_cap",
            PipelineError::InsufficientTraining { .. } => "insufficient_training",
            PipelineError::NoData => "no_data",
            PipelineError::Data(_) => "data",
            PipelineError::Marginal(_) => "marginals",
            PipelineError::Io { .. } => "io",
            PipelineError::Output { .. } => "output",
            PipelineError::Covariance(_) => "covariance",
            PipelineError::Linalg(_) => "linalg",
            PipelineError::Region(_) => "region",
            PipelineError::Hull(_) => "hull",
            PipelineError::Scenario(_) => "scenarios",
            PipelineError::Mpi(_) => "mpi",
            PipelineError::Evaluation(_) => "evaluation",
            PipelineError::Numerical(_) => "numerical",
            PipelineError::Step { source, .. } => source.kind(),
        }
    }
}
