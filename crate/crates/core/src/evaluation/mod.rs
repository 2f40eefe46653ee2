//! Calibration and sharpness scoring, plus the planted-outlier experiment.

mod robustness;
mod volume;

use serde::Serialize;
use thiserror::Error;

use crate::hull::ConvexHull;
use crate::mpi::{BoxRegion, MpiError};
use crate::polyhedra::{PolyhedralRegion, RegionError};

pub use robustness::{
    inject_outliers, outlier_robustness, MethodDelta, OutlierSpec, RobustnessReport, ROBUSTNESS_ALPHA,
};
pub use volume::{
    default_sample_count, monte_carlo_volume, nested_score_hits, UniformSamples, VolumeRecord,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("empty evaluation set")]
    Empty,
    #[error("{regions} regions but {measurements} measurements")]
    Misaligned { regions: usize, measurements: usize },
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("{requested} outliers requested but the injection range holds {available} frames")]
    TooManyOutliers { requested: usize, available: usize },
    #[error("injection range {start}..{end} must lie inside the training range 0..{train}")]
    InjectionRange { start: usize, end: usize, train: usize },
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Mpi(#[from] MpiError),
    #[error("pipeline: {0}")]
    Pipeline(String),
}

/// A set with a membership test.
pub trait Region {
    fn dim(&self) -> usize;
    /// Membership of `x`; callers guarantee `x.len() == self.dim()`.
    fn contains_point(&self, x: &[f64]) -> bool;
}

impl Region for PolyhedralRegion {
    fn dim(&self) -> usize {
        PolyhedralRegion::dim(self)
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        self.contains(x).unwrap_or(false)
    }
}

impl Region for BoxRegion {
    fn dim(&self) -> usize {
        BoxRegion::dim(self)
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        self.contains(x).unwrap_or(false)
    }
}

impl Region for ConvexHull {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        self.contains(x)
    }
}

/// The whole feasible cube `[0, 1]^D`.
#[derive(Debug, Clone, Copy)]
pub struct UnitCube(pub usize);

impl Region for UnitCube {
    fn dim(&self) -> usize {
        self.0
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        x.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Coverage indicators of one method at one nominal level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRecord {
    /// Nominal coverage; `None` for methods without one (plain hulls).
    pub alpha: Option<f64>,
    pub indicators: Vec<bool>,
    pub coverage: f64,
    /// `coverage − alpha`.
    pub deviation: Option<f64>,
}

impl CalibrationRecord {
    pub fn from_indicators(alpha: Option<f64>, indicators: Vec<bool>) -> Result<Self, EvaluationError> {
        if indicators.is_empty() {
            return Err(EvaluationError::Empty);
        }
        let coverage = covered_count(&indicators) as f64 / indicators.len() as f64;
        Ok(Self {
            alpha,
            coverage,
            deviation: alpha.map(|a| coverage - a),
            indicators,
        })
    }

    pub fn covered(&self) -> usize {
        covered_count(&self.indicators)
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }
}

fn covered_count(indicators: &[bool]) -> usize {
    indicators.iter().filter(|&&b| b).count()
}

/// Fraction of measurements falling inside their time-aligned region.
pub fn empirical_coverage<R: Region>(
    alpha: Option<f64>,
    regions: &[R],
    measurements: &[Vec<f64>],
) -> Result<CalibrationRecord, EvaluationError> {
    if regions.len() != measurements.len() {
        return Err(EvaluationError::Misaligned {
            regions: regions.len(),
            measurements: measurements.len(),
        });
    }
    let indicators = regions
        .iter()
        .zip(measurements)
        .map(|(r, x)| {
            if x.len() != r.dim() {
                return Err(EvaluationError::DimensionMismatch {
                    expected: r.dim(),
                    actual: x.len(),
                });
            }
            Ok(r.contains_point(x))
        })
        .collect::<Result<Vec<_>, _>>()?;
    CalibrationRecord::from_indicators(alpha, indicators)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::UpperTriangularFactor;
    use crate::polyhedra::RegionKind;

    fn region(center: Vec<f64>, scale: f64) -> PolyhedralRegion {
        PolyhedralRegion::new(RegionKind::P1, center, UpperTriangularFactor::identity(2), scale, 0.9).unwrap()
    }

    #[test]
    fn centers_are_always_covered() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.3]).collect();
        let rs: Vec<_> = xs.iter().map(|x| region(x.clone(), 0.1)).collect();
        let rec = empirical_coverage(Some(0.9), &rs, &xs).unwrap();
        assert_eq!(rec.coverage, 1.0);
        assert!((rec.deviation.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_scale_misses_continuous_data() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5 + 1e-3 * (i + 1) as f64, 0.5]).collect();
        let rs: Vec<_> = (0..20).map(|_| region(vec![0.5, 0.5], 0.0)).collect();
        assert_eq!(empirical_coverage(Some(0.5), &rs, &xs).unwrap().coverage, 0.0);
    }

    #[test]
    fn coverage_is_count_over_length() {
        let ind = vec![true, false, true, true, false, false, true];
        let rec = CalibrationRecord::from_indicators(Some(0.5), ind).unwrap();
        assert_eq!(rec.covered(), 4);
        assert_eq!(rec.coverage * rec.len() as f64, 4.0);
        assert_eq!(CalibrationRecord::from_indicators(None, vec![]), Err(EvaluationError::Empty));
    }

    #[test]
    fn misaligned_inputs() {
        let rs = vec![region(vec![0.5, 0.5], 1.0)];
        assert!(matches!(
            empirical_coverage(Some(0.5), &rs, &[]),
            Err(EvaluationError::Misaligned { .. })
        ));
        assert!(matches!(
            empirical_coverage(Some(0.5), &rs, &[vec![0.5]]),
            Err(EvaluationError::DimensionMismatch { .. })
        ));
    }
}
