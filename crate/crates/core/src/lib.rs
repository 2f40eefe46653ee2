//! Polyhedral predictive regions for multivariate forecast errors.
//!
//! Regions are fitted on rolling windows of past errors:
//!
//! * norm polyhedra `{x : ‖Λ(x − x̂)‖ ≤ s}` in the L1 and L∞ norms, with the
//!   Euclidean ellipsoid for reference ([`polyhedra`]),
//! * convex hulls of copula scenarios, optionally trimmed ([`hull`]),
//! * axis-aligned boxes with joint coverage ([`mpi`]).
//!
//! [`evaluation`] scores them on coverage and clipped volume, and
//! [`pipeline`] runs the whole rolling backtest.

pub mod covariance;
pub mod data;
pub mod evaluation;
pub mod hull;
pub mod linalg;
pub mod marginal;
pub mod mpi;
pub mod pipeline;
pub mod polyhedra;
pub mod scenarios;
pub mod stats;

pub use covariance::{EwmaConfig, EwmaCovarianceState};
pub use data::{load_dataset, DataFormat, Dataset, DimensionSpec, ForecastFrame};
pub use hull::{contains_lp, hull_volume, quickhull, trim_outliers, ConvexHull};
pub use marginal::MarginalQuantileCurve;
pub use mpi::{adjust_intervals, BoxRegion};
pub use polyhedra::{fit_scale, PolyhedralRegion, RegionKind, ScoreSeries};
pub use scenarios::{sample_scenarios, ScenarioSet};
