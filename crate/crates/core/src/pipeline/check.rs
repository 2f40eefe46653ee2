//! Dataset and configuration validation without building regions.

use std::fmt;
use std::fs;

use super::config::RunConfig;
use crate::covariance::{EwmaCovarianceState, SEED_COUNT};
use crate::data::read_frames;
use crate::hull::MAX_HULL_DIM;
use crate::linalg::cholesky;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckReport {
    pub findings: Vec<Finding>,
}

impl CheckReport {
    fn add(&mut self, code: &'static str, message: impl Into<String>) {
        self.findings.push(Finding {
            code,
            message: message.into(),
        });
    }

    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} findings", self.findings.len())?;
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Validates config consistency, dataset integrity and positive definiteness
/// of the covariance along the whole series. Never fails; problems become
/// findings.
pub fn cmd_check(config: &RunConfig) -> CheckReport {
    let mut report = CheckReport::default();
    for p in config.problems() {
        report.add("config", p);
    }
    let spec = match config.spec() {
        Ok(s) => s,
        Err(e) => {
            report.add("config", e.to_string());
            return report;
        }
    };
    let dim = spec.dim();
    if dim > MAX_HULL_DIM && config.methods.iter().any(|m| m.is_hull()) {
        report.add(
            "hull-dimension",
            format!("hull methods are refused for dimension {dim} (cap {MAX_HULL_DIM})"),
        );
    }
    let Some(path) = &config.data else {
        report.add("data", "no dataset path configured");
        return report;
    };
    let frames = match fs::File::open(path)
        .map_err(crate::data::DataError::from)
        .and_then(|f| read_frames(f, spec, config.format))
    {
        Ok(f) => f,
        Err(e) => {
            report.add("data", format!("{}: {e}", path.display()));
            return report;
        }
    };
    if config.train > frames.len() {
        report.add(
            "split",
            format!("training length {} exceeds frame count {}", config.train, frames.len()),
        );
    }
    let train = config.train.min(frames.len());
    for f in frames[..train].iter().filter(|f| f.measurement.is_none()) {
        report.add("missing-measurement", format!("t={} lies in the training range but has no measurement", f.t));
    }
    let required = (dim + 1).max(SEED_COUNT) + config.window;
    if train < required {
        report.add(
            "burn-in",
            format!("training range has {train} frames, {required} needed for covariance burn-in and the score window"),
        );
    }

    // Walk the covariance recursion over every observed error.
    let errors: Vec<(i64, Vec<f64>)> = frames.iter().filter_map(|f| f.error().map(|e| (f.t, e))).collect();
    let seed = (dim + 1).max(SEED_COUNT).min(errors.len());
    if seed < dim + 1 {
        report.add("burn-in", format!("only {} measured frames; covariance needs {}", errors.len(), dim + 1));
        return report;
    }
    let seed_errors: Vec<Vec<f64>> = errors[..seed].iter().map(|(_, e)| e.clone()).collect();
    let mut state = match EwmaCovarianceState::initialize(config.ewma(), &seed_errors) {
        Ok(s) => s,
        Err(e) => {
            report.add("covariance", e.to_string());
            return report;
        }
    };
    let mut bad: Vec<i64> = Vec::new();
    let mut check = |state: &EwmaCovarianceState, t: i64| {
        if cholesky(&state.covariance()).is_err() {
            bad.push(t);
        }
    };
    check(&state, errors[seed - 1].0);
    for (t, e) in &errors[seed..] {
        if state.update(e).is_err() {
            break;
        }
        check(&state, *t);
    }
    if let (Some(first), Some(last)) = (bad.first(), bad.last()) {
        report.add(
            "covariance-not-pd",
            format!(
                "covariance not positive definite at {} steps (t={first}..={last}) with epsilon {}",
                bad.len(),
                config.epsilon
            ),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_dataset, DataFormat, Dataset, DimensionSpec, ForecastFrame};
    use crate::pipeline::simulate_dataset;
    use std::path::Path;

    fn write(path: &Path, frames: Vec<ForecastFrame>, spec: DimensionSpec) {
        let d = Dataset::new(spec, frames, 0).unwrap();
        write_dataset(&d, fs::File::create(path).unwrap(), DataFormat::Wide).unwrap();
    }

    fn base(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.horizons = 2;
        c.train = 400;
        c.simulate.eval_len = 100;
        c.data = Some(dir.join("data.csv"));
        c
    }

    #[test]
    fn valid_dataset_is_clean() {
        let dir = tempfile::tempdir().unwrap();
        let c = base(dir.path());
        let d = simulate_dataset(&c).unwrap();
        write_dataset(&d, fs::File::create(dir.path().join("data.csv")).unwrap(), DataFormat::Wide).unwrap();
        let r = cmd_check(&c);
        assert!(r.is_clean(), "{r}");
        assert!(r.to_string().starts_with("0 findings"));
    }

    #[test]
    fn missing_training_measurement_listed() {
        let dir = tempfile::tempdir().unwrap();
        let c = base(dir.path());
        let d = simulate_dataset(&c).unwrap();
        let mut frames = d.frames().to_vec();
        frames[10].measurement = None;
        write(&dir.path().join("data.csv"), frames, c.spec().unwrap());
        let r = cmd_check(&c);
        assert!(r.findings.iter().any(|f| f.code == "missing-measurement" && f.message.contains("t=10")));
    }

    #[test]
    fn non_pd_patch_listed_without_floor() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = base(dir.path());
        c.epsilon = 0.0;
        c.simulate.eval_len = 1100;
        let mut frames = simulate_dataset(&c).unwrap().frames().to_vec();
        // A long stretch of identical errors in both dimensions drives the
        // smallest eigenvalue below the pivot tolerance.
        for f in frames.iter_mut().skip(100).take(1300) {
            let e = 0.5 * (f.forecast[0] - 0.5);
            f.measurement = Some(vec![f.forecast[0] + e, f.forecast[1] + e]);
        }
        write(&dir.path().join("data.csv"), frames, c.spec().unwrap());
        let r = cmd_check(&c);
        assert!(r.findings.iter().any(|f| f.code == "covariance-not-pd"), "{r}");
        c.epsilon = 1e-6;
        assert!(cmd_check(&c).is_clean());
    }

    #[test]
    fn config_problems_listed() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = base(dir.path());
        c.horizons = 12;
        c.methods = vec![crate::pipeline::Method::Hull];
        c.alphas = vec![1.5];
        c.data = None;
        let r = cmd_check(&c);
        let codes: Vec<_> = r.findings.iter().map(|f| f.code).collect();
        assert!(codes.contains(&"config"));
        assert!(codes.contains(&"hull-dimension"));
        assert!(codes.contains(&"data"));
    }
}
