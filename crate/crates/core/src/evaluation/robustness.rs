//! Planted-outlier experiment: replace a few training measurements with cube
//! corners and compare each method's coverage and volume with the clean run.

use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvaluationError;
use crate::data::Dataset;
use crate::pipeline::{run_pipeline, Method, RunConfig, RunReport};

/// Nominal coverage at which deltas are reported.
pub const ROBUSTNESS_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSpec {
    pub count: usize,
    pub seed: u64,
    /// Frame indices eligible for replacement; defaults to the last `window`
    /// training frames.
    pub range: Option<Range<usize>>,
}

impl OutlierSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDelta {
    pub method: Method,
    pub coverage_clean: f64,
    pub coverage_injected: f64,
    pub volume_clean: f64,
    pub volume_injected: f64,
}

impl MethodDelta {
    pub fn coverage_change(&self) -> f64 {
        (self.coverage_injected - self.coverage_clean).abs()
    }

    pub fn volume_change(&self) -> f64 {
        (self.volume_injected - self.volume_clean).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    /// Replaced frame indices, ascending.
    pub positions: Vec<usize>,
    pub methods: Vec<MethodDelta>,
}

impl RobustnessReport {
    pub fn delta(&self, method: Method) -> Option<&MethodDelta> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Replaces `spec.count` measurements in the eligible range with random
/// corners of the unit cube.
pub fn inject_outliers(
    dataset: &Dataset,
    spec: &OutlierSpec,
    window: usize,
) -> Result<(Dataset, Vec<usize>), EvaluationError> {
    let train = dataset.train_len();
    let range = spec
        .range
        .clone()
        .unwrap_or(train.saturating_sub(window)..train);
    if range.start > range.end || range.end > train {
        return Err(EvaluationError::InjectionRange {
            start: range.start,
            end: range.end,
            train,
        });
    }
    if spec.count > range.len() {
        return Err(EvaluationError::TooManyOutliers {
            requested: spec.count,
            available: range.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut positions: Vec<usize> = sample(&mut rng, range.len(), spec.count)
        .into_iter()
        .map(|i| range.start + i)
        .collect();
    positions.sort_unstable();
    let mut out = dataset.clone();
    for &p in &positions {
        let corner: Vec<f64> = (0..dataset.dim())
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect();
        out = out.with_measurement(p, corner);
    }
    Ok((out, positions))
}

fn mean_volume(report: &RunReport, method: Method) -> f64 {
    let alpha = method.has_alpha().then_some(ROBUSTNESS_ALPHA);
    let v: Vec<f64> = report
        .volumes()
        .filter(|v| v.region == method.name() && v.alpha == alpha)
        .map(|v| v.volume)
        .collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn coverage(report: &RunReport, method: Method) -> f64 {
    let alpha = method.has_alpha().then_some(ROBUSTNESS_ALPHA);
    report.coverage_of(method, alpha).map_or(f64::NAN, |r| r.coverage)
}

/// Runs the configured methods on the clean and the injected dataset and
/// reports coverage and mean volume at [`ROBUSTNESS_ALPHA`].
pub fn outlier_robustness(
    dataset: &Dataset,
    spec: &OutlierSpec,
    config: &RunConfig,
) -> Result<RobustnessReport, EvaluationError> {
    let mut config = config.clone();
    config.alphas = vec![ROBUSTNESS_ALPHA];
    config.volume_alphas = None;
    let (injected, positions) = inject_outliers(dataset, spec, config.window)?;
    let run = |d: &Dataset| run_pipeline(d, &config, None).map_err(|e| EvaluationError::Pipeline(e.to_string()));
    let clean = run(dataset)?;
    let dirty = if positions.is_empty() { clean.clone() } else { run(&injected)? };
    let methods = config
        .methods
        .iter()
        .map(|&m| MethodDelta {
            method: m,
            coverage_clean: coverage(&clean, m),
            coverage_injected: coverage(&dirty, m),
            volume_clean: mean_volume(&clean, m),
            volume_injected: mean_volume(&dirty, m),
        })
        .collect();
    Ok(RobustnessReport { positions, methods })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::simulate_dataset;

    fn setup() -> (Dataset, RunConfig) {
        let mut c = RunConfig::default();
        c.horizons = 2;
        c.train = 340;
        c.simulate.eval_len = 60;
        c.methods = vec![Method::P1, Method::Hull];
        c.scenarios = 100;
        c.volume_samples = Some(2000);
        c.volume_stride = 20;
        (simulate_dataset(&c).unwrap(), c)
    }

    #[test]
    fn zero_outliers_zero_deltas() {
        let (d, c) = setup();
        let r = outlier_robustness(&d, &OutlierSpec::new(0, 1), &c).unwrap();
        assert!(r.positions.is_empty());
        for m in &r.methods {
            assert_eq!(m.coverage_change(), 0.0);
            assert_eq!(m.volume_change(), 0.0);
        }
    }

    #[test]
    fn injection_replaces_training_frames_with_corners() {
        let (d, _) = setup();
        let (out, pos) = inject_outliers(&d, &OutlierSpec::new(6, 5), 300).unwrap();
        assert_eq!(pos.len(), 6);
        assert!(pos.iter().all(|&p| (40..340).contains(&p)));
        for (i, f) in out.frames().iter().enumerate() {
            if pos.contains(&i) {
                assert!(f.measurement.as_ref().unwrap().iter().all(|&v| v == 0.0 || v == 1.0));
            } else {
                assert_eq!(f, &d.frames()[i]);
            }
        }
    }

    #[test]
    fn injection_outside_training_rejected() {
        let (d, _) = setup();
        let mut spec = OutlierSpec::new(2, 0);
        spec.range = Some(330..350);
        assert!(matches!(inject_outliers(&d, &spec, 300), Err(EvaluationError::InjectionRange { .. })));
        spec.range = Some(0..4);
        spec.count = 5;
        assert!(matches!(inject_outliers(&d, &spec, 300), Err(EvaluationError::TooManyOutliers { .. })));
    }
}
