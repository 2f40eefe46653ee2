//! Prediction convex hulls of scenario sets.

mod lp;
mod quickhull;
mod trim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{determinant, LinalgError};
use crate::scenarios::ScenarioSet;
use crate::stats::StatsError;

pub use lp::{contains_lp, FeasibilityLp, FEASIBILITY_TOLERANCE};
pub use quickhull::convex_hull;
pub use trim::{sample_mean_covariance, trim_outliers, trim_threshold, DEFAULT_MULTIPLIER, DEFAULT_SIGNIFICANCE};

pub use crate::stats::chi_square_quantile;

/// Largest dimension for which hull construction is attempted.
pub const MAX_HULL_DIM: usize = 8;
/// Slack for facet-based membership.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HullError {
    #[error("empty point set")]
    Empty,
    #[error("convex hull construction refused for dimension {dim}: limited to {max} or fewer")]
    DimensionTooHigh { dim: usize, max: usize },
    #[error("degenerate input: points span an affine subspace of rank {rank} < {dim}")]
    DegenerateInput { rank: usize, dim: usize },
    #[error("point {index} has length {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("simplex stalled after {iterations} iterations")]
    Stall { iterations: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A `(D−1)`-simplex on the hull boundary: `normal · x ≤ offset` inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    /// Indices into [`ConvexHull::vertices`].
    pub vertices: Vec<usize>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexHull {
    pub dim: usize,
    /// Extreme points, in input order.
    pub vertices: Vec<Vec<f64>>,
    /// Positions of the vertices in the input point list.
    pub source_indices: Vec<usize>,
    pub facets: Vec<Facet>,
}

impl ConvexHull {
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, HullError> {
        convex_hull(points)
    }

    /// Facet-based membership with [`MEMBERSHIP_TOLERANCE`] slack.
    pub fn contains(&self, y: &[f64]) -> bool {
        self.facets.iter().all(|f| {
            let v: f64 = f.normal.iter().zip(y).map(|(a, b)| a * b).sum();
            v <= f.offset + MEMBERSHIP_TOLERANCE
        })
    }

    pub fn volume(&self) -> f64 {
        hull_volume(self)
    }

    /// JSON with vertex coordinates and facet vertex-index lists.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "vertices": self.vertices,
            "facets": self.facets.iter().map(|f| &f.vertices).collect::<Vec<_>>(),
        })
    }
}

/// Hull of a scenario set.
pub fn quickhull(scenarios: &ScenarioSet) -> Result<ConvexHull, HullError> {
    convex_hull(scenarios.points())
}

/// Volume by decomposing the hull into simplices that join each facet to the
/// vertex centroid: `Σ |det(v_i − c)| / D!`.
pub fn hull_volume(hull: &ConvexHull) -> f64 {
    let d = hull.dim;
    if hull.vertices.is_empty() {
        return 0.0;
    }
    let apex: Vec<f64> = (0..d)
        .map(|k| hull.vertices.iter().map(|v| v[k]).sum::<f64>() / hull.vertices.len() as f64)
        .collect();
    let factorial: f64 = (1..=d).map(|k| k as f64).product();
    let mut total = 0.0;
    for (i, f) in hull.facets.iter().enumerate() {
        let m: Vec<Vec<f64>> = f
            .vertices
            .iter()
            .map(|&v| hull.vertices[v].iter().zip(&apex).map(|(a, b)| a - b).collect())
            .collect();
        let det = determinant(m).abs();
        if det == 0.0 {
            log::warn!("hull facet {i} is degenerate; contributes zero volume");
        }
        total += det / factorial;
    }
    total
}
