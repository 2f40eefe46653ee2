//! Multivariate prediction intervals: axis-aligned boxes whose common marginal
//! level is widened until enough scenarios are jointly covered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marginal::MarginalQuantileCurve;
use crate::scenarios::ScenarioSet;

/// Resolution of the level search: levels are multiples of `2⁻¹⁰`.
pub const LEVEL_STEPS: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpiError {
    #[error("coverage must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("no scenarios")]
    Empty,
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("lower bound {lower} exceeds upper bound {upper} in dimension {dim}")]
    InvertedBounds { dim: usize, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(alpha: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MpiError> {
        if lower.len() != upper.len() {
            return Err(MpiError::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if let Some(dim) = (0..lower.len()).find(|&d| !(lower[d] <= upper[d])) {
            return Err(MpiError::InvertedBounds {
                dim,
                lower: lower[dim],
                upper: upper[dim],
            });
        }
        Ok(Self { alpha, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, MpiError> {
        box_contains(self, x)
    }

    pub fn volume(&self) -> f64 {
        box_volume(self)
    }
}

/// Result of [`adjust_intervals`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedBox {
    pub region: BoxRegion,
    /// Marginal level actually used.
    pub beta: f64,
    /// Scenarios inside `region`.
    pub covered: usize,
    /// `false` when even the widest box misses the target count.
    pub attained: bool,
}

/// `l_d ≤ x_d ≤ h_d` for every `d`.
pub fn box_contains(region: &BoxRegion, x: &[f64]) -> Result<bool, MpiError> {
    if x.len() != region.dim() {
        return Err(MpiError::DimensionMismatch {
            expected: region.dim(),
            actual: x.len(),
        });
    }
    Ok(inside(&region.lower, &region.upper, x))
}

fn inside(lower: &[f64], upper: &[f64], x: &[f64]) -> bool {
    x.iter().zip(lower).zip(upper).all(|((v, l), h)| l <= v && v <= h)
}

/// `Π (h_d − l_d)`.
pub fn box_volume(region: &BoxRegion) -> f64 {
    region.lower.iter().zip(&region.upper).map(|(l, h)| (h - l).max(0.0)).product()
}

/// Box at marginal level `beta`, clamped to `[0, upper_limit_d]`.
pub fn marginal_box(marginals: &MarginalQuantileCurve, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = (1.0 - beta) / 2.0;
    let hi = (1.0 + beta) / 2.0;
    (0..marginals.dim())
        .map(|d| {
            let cap = marginals.upper_limit(d);
            let l = marginals.quantile(d, lo).clamp(0.0, cap);
            let h = marginals.quantile(d, hi).min(cap).max(l);
            (l, h)
        })
        .unzip()
}

/// Smallest level `β ∈ [α, 1]` whose marginal box holds at least `⌈αS⌉`
/// scenarios. Levels are searched by bisection on a grid of spacing `2⁻¹⁰`,
/// which keeps boxes nested in `α`.
pub fn adjust_intervals(
    marginals: &MarginalQuantileCurve,
    scenarios: &ScenarioSet,
    alpha: f64,
) -> Result<AdjustedBox, MpiError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MpiError::InvalidAlpha(alpha));
    }
    if scenarios.is_empty() {
        return Err(MpiError::Empty);
    }
    if scenarios.dim() != marginals.dim() {
        return Err(MpiError::DimensionMismatch {
            expected: marginals.dim(),
            actual: scenarios.dim(),
        });
    }
    let need = (alpha * scenarios.len() as f64 - 1e-9).ceil() as usize;
    let count = |beta: f64| {
        let (l, h) = marginal_box(marginals, beta);
        scenarios.points().iter().filter(|p| inside(&l, &h, p)).count()
    };
    let steps = LEVEL_STEPS as f64;
    let attained = count(1.0) >= need;
    let beta = if attained {
        let (mut lo, mut hi) = (0u32, LEVEL_STEPS);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if count(mid as f64 / steps) >= need {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (lo as f64 / steps).max(alpha)
    } else {
        1.0
    };
    let (lower, upper) = marginal_box(marginals, beta);
    let covered = scenarios.points().iter().filter(|p| inside(&lower, &upper, p)).count();
    Ok(AdjustedBox {
        region: BoxRegion { alpha, lower, upper },
        beta,
        covered,
        attained,
    })
}
