//! Norm-ball prediction regions `{x : ‖Λ(x − µ)‖ ≤ s}` under the L1 and L∞
//! norms, plus the L2 ellipsoid they are compared with, and the rolling
//! order-statistic fit of the scale `s`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::linalg::UpperTriangularFactor;

pub const DEFAULT_WINDOW: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("score window is empty")]
    EmptyWindow,
    #[error("score window holds {have} of {window} scores")]
    WindowNotFull { have: usize, window: usize },
    #[error("alpha {alpha} too small for window {window}: round(window * alpha) = 0")]
    AlphaTooSmall { alpha: f64, window: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("scale must be finite and non-negative, got {0}")]
    InvalidScale(f64),
    #[error("score window holds {held} scores but {requested} were requested")]
    KindMismatch { held: RegionKind, requested: RegionKind },
}

/// Region shape; each kind pairs with the norm used for its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    /// L1 ball (affine cross-polytope), scale `Γ`.
    P1,
    /// L∞ ball (affine hyper-box), scale `Δ`.
    Pinf,
    /// L2 ball, scale `Γ`.
    Ellipsoid,
}

impl RegionKind {
    pub const ALL: [RegionKind; 3] = [RegionKind::P1, RegionKind::Pinf, RegionKind::Ellipsoid];

    pub fn name(self) -> &'static str {
        match self {
            Self::P1 => "p1",
            Self::Pinf => "pinf",
            Self::Ellipsoid => "ellipsoid",
        }
    }

    /// Norm of an already whitened vector.
    #[inline]
    pub fn norm(self, z: &[f64]) -> f64 {
        match self {
            Self::P1 => z.iter().map(|v| v.abs()).sum(),
            Self::Pinf => z.iter().fold(0.0, |m, v| m.max(v.abs())),
            Self::Ellipsoid => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p1" | "P1" => Ok(Self::P1),
            "pinf" | "Pinf" => Ok(Self::Pinf),
            "ellipsoid" | "Ellipsoid" => Ok(Self::Ellipsoid),
            other => Err(format!("unknown region kind '{other}'")),
        }
    }
}

fn check_dims(factor: &UpperTriangularFactor, len: usize) -> Result<(), RegionError> {
    if factor.dim() != len {
        return Err(RegionError::DimensionMismatch {
            expected: factor.dim(),
            actual: len,
        });
    }
    Ok(())
}

/// `‖Λ(x − µ)‖` in the norm of `kind`.
pub fn score(
    factor: &UpperTriangularFactor,
    mu: &[f64],
    x: &[f64],
    kind: RegionKind,
) -> Result<f64, RegionError> {
    check_dims(factor, mu.len())?;
    check_dims(factor, x.len())?;
    let mut z = vec![0.0; mu.len()];
    factor.whiten_into(x, mu, &mut z);
    Ok(kind.norm(&z))
}

/// Predictive region `{x : ‖Λ(x − µ)‖ ≤ scale}` at nominal coverage `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralRegion {
    pub kind: RegionKind,
    pub alpha: f64,
    pub center: Vec<f64>,
    pub scale: f64,
    pub factor: UpperTriangularFactor,
}

impl PolyhedralRegion {
    pub fn new(
        kind: RegionKind,
        center: Vec<f64>,
        factor: UpperTriangularFactor,
        scale: f64,
        alpha: f64,
    ) -> Result<Self, RegionError> {
        check_dims(&factor, center.len())?;
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(RegionError::InvalidScale(scale));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RegionError::InvalidAlpha(alpha));
        }
        Ok(Self {
            kind,
            alpha,
            center,
            scale,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, RegionError> {
        score(&self.factor, &self.center, x, self.kind)
    }

    /// Closed-region membership, boundary included.
    pub fn contains(&self, x: &[f64]) -> Result<bool, RegionError> {
        Ok(self.score(x)? <= self.scale)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("region serializes")
    }
}

/// Analytic volume of the region without clipping to the feasible cube.
///
/// * P1: `(2Γ)^D / D! · √det Σ`
/// * P∞: `(2Δ)^D · √det Σ`
/// * ellipsoid: `π^{D/2} / Γ(D/2 + 1) · Γ^D · √det Σ`
///
/// with `√det Σ = 1 / det Λ`.
pub fn analytic_volume_unclipped(region: &PolyhedralRegion) -> f64 {
    if region.scale == 0.0 {
        return 0.0;
    }
    let d = region.dim() as f64;
    let log_sqrt_det = -region.factor.log_det();
    let s = region.scale.ln();
    let log_unit = match region.kind {
        RegionKind::P1 => d * (2f64.ln() + s) - ln_gamma(d + 1.0),
        RegionKind::Pinf => d * (2f64.ln() + s),
        RegionKind::Ellipsoid => 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0) + d * s,
    };
    (log_unit + log_sqrt_det).exp()
}

/// Rolling window of the most recent `window` scores of one region kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    window: usize,
    kind: RegionKind,
    scores: VecDeque<f64>,
}

impl ScoreSeries {
    pub fn new(kind: RegionKind, window: usize) -> Self {
        Self {
            window,
            kind,
            scores: VecDeque::with_capacity(window),
        }
    }

    pub fn from_scores(kind: RegionKind, scores: Vec<f64>) -> Self {
        Self {
            window: scores.len(),
            kind,
            scores: scores.into(),
        }
    }

    /// Appends a score, evicting the oldest once the window is full.
    pub fn push(&mut self, score: f64) {
        debug_assert!(score >= 0.0 && score.is_finite());
        if self.window == 0 {
            return;
        }
        if self.scores.len() == self.window {
            self.scores.pop_front();
        }
        self.scores.push_back(score);
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.window > 0 && self.scores.len() == self.window
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().copied()
    }

    /// Window contents sorted ascending.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.scores.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Rank `N = round(ω · α)` with halves rounded away from zero.
pub fn order_statistic_rank(window: usize, alpha: f64) -> usize {
    (window as f64 * alpha).round() as usize
}

/// The `N`-th smallest score in the window, `N = round(ω · α)`.
pub fn fit_scale(scores: &ScoreSeries, alpha: f64) -> Result<f64, RegionError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RegionError::InvalidAlpha(alpha));
    }
    if scores.is_empty() {
        return Err(RegionError::EmptyWindow);
    }
    if !scores.is_full() {
        return Err(RegionError::WindowNotFull {
            have: scores.len(),
            window: scores.window(),
        });
    }
    let n = order_statistic_rank(scores.window(), alpha);
    if n == 0 {
        return Err(RegionError::AlphaTooSmall {
            alpha,
            window: scores.window(),
        });
    }
    Ok(scores.sorted()[n - 1])
}

/// Scales for several coverage levels from a single sort of the window.
pub fn fit_scales(scores: &ScoreSeries, alphas: &[f64]) -> Result<Vec<f64>, RegionError> {
    if scores.is_empty() {
        return Err(RegionError::EmptyWindow);
    }
    if !scores.is_full() {
        return Err(RegionError::WindowNotFull {
            have: scores.len(),
            window: scores.window(),
        });
    }
    let sorted = scores.sorted();
    alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(RegionError::InvalidAlpha(alpha));
            }
            match order_statistic_rank(scores.window(), alpha) {
                0 => Err(RegionError::AlphaTooSmall {
                    alpha,
                    window: scores.window(),
                }),
                n => Ok(sorted[n - 1]),
            }
        })
        .collect()
}

/// Region centred on the point forecast with its scale fitted on past scores.
pub fn build_region(
    forecast: &[f64],
    factor: &UpperTriangularFactor,
    scores: &ScoreSeries,
    alpha: f64,
    kind: RegionKind,
) -> Result<PolyhedralRegion, RegionError> {
    if scores.kind() != kind {
        return Err(RegionError::KindMismatch {
            held: scores.kind(),
            requested: kind,
        });
    }
    let scale = fit_scale(scores, alpha)?;
    PolyhedralRegion::new(kind, forecast.to_vec(), factor.clone(), scale, alpha)
}
