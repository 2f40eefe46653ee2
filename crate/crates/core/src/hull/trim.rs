//! Scenario trimming by squared Mahalanobis distance against a chi-square
//! critical value.

use super::HullError;
use crate::linalg::{cholesky_inverse_factor, SymmetricMatrix};
use crate::scenarios::ScenarioSet;
use crate::stats::chi_square_quantile;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.001;
pub const DEFAULT_MULTIPLIER: f64 = 1.0;

/// `multiplier · χ²_D(1 − significance)`.
pub fn trim_threshold(dim: usize, significance: f64, multiplier: f64) -> Result<f64, HullError> {
    Ok(multiplier * chi_square_quantile(dim, 1.0 - significance)?)
}

/// Keeps scenarios with `(x − c)ᵀ Σ⁻¹ (x − c) ≤ threshold`, preserving order.
pub fn trim_outliers(
    scenarios: &ScenarioSet,
    sigma: &SymmetricMatrix,
    center: &[f64],
    significance: f64,
    multiplier: f64,
) -> Result<ScenarioSet, HullError> {
    let dim = scenarios.dim();
    if sigma.dim() != dim || center.len() != dim {
        return Err(HullError::DimensionMismatch {
            index: 0,
            expected: dim,
            actual: if sigma.dim() != dim { sigma.dim() } else { center.len() },
        });
    }
    let factor = cholesky_inverse_factor(sigma)?;
    let threshold = trim_threshold(dim, significance, multiplier)?;
    let mut z = vec![0.0; dim];
    Ok(scenarios.filtered(|x| {
        factor.whiten_into(x, center, &mut z);
        z.iter().map(|v| v * v).sum::<f64>() <= threshold
    }))
}

/// Sample mean and (unbiased) covariance of a scenario cloud.
pub fn sample_mean_covariance(scenarios: &ScenarioSet) -> (Vec<f64>, SymmetricMatrix) {
    let n = scenarios.len();
    let (mean, cov) = SymmetricMatrix::sample_covariance(scenarios.points(), true);
    let correction = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
    (mean, cov.scaled(correction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: Vec<Vec<f64>>) -> ScenarioSet {
        ScenarioSet::new(points).unwrap()
    }

    #[test]
    fn all_at_center_kept() {
        let s = set(vec![vec![0.5, 0.5]; 10]);
        let t = trim_outliers(&s, &SymmetricMatrix::identity(2), &[0.5, 0.5], 0.001, 1.0).unwrap();
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn closed_form_threshold() {
        // Unit-scale coordinates are required by ScenarioSet, so the test uses
        // Σ = 0.01 I: (0.4, 0) from the origin has squared distance 16.
        let s = set(vec![vec![0.4, 0.0], vec![0.3, 0.0], vec![0.0, 0.0]]);
        let sigma = SymmetricMatrix::identity(2).scaled(0.01);
        let t = trim_outliers(&s, &sigma, &[0.0, 0.0], 0.001, 1.0).unwrap();
        assert_eq!(t.points(), &[vec![0.3, 0.0], vec![0.0, 0.0]]);
        let th = trim_threshold(2, 0.001, 1.0).unwrap();
        assert!(16.0 > th && 9.0 < th);
    }

    #[test]
    fn multiplier_scales_threshold() {
        let base = trim_threshold(2, 0.001, 1.0).unwrap();
        let wide = trim_threshold(2, 0.001, 1.1).unwrap();
        assert!((wide - 1.1 * (-2.0 * 0.001f64.ln())).abs() < 1e-9);
        assert!((wide / base - 1.1).abs() < 1e-14);
        // Squared distance 14.5 lies between 13.8155 and 15.197.
        let x = (14.5f64).sqrt() * 0.1;
        let s = set(vec![vec![x, 0.0]]);
        let sigma = SymmetricMatrix::identity(2).scaled(0.01);
        assert_eq!(trim_outliers(&s, &sigma, &[0.0, 0.0], 0.001, 1.0).unwrap().len(), 0);
        assert_eq!(trim_outliers(&s, &sigma, &[0.0, 0.0], 0.001, 1.1).unwrap().len(), 1);
    }

    #[test]
    fn infinite_multiplier_is_identity() {
        let s = set(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let sigma = SymmetricMatrix::identity(2).scaled(1e-6);
        let t = trim_outliers(&s, &sigma, &[0.5, 0.5], 0.001, f64::INFINITY).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn rejects_non_pd_sigma() {
        let s = set(vec![vec![0.1, 0.1]]);
        assert!(matches!(
            trim_outliers(&s, &SymmetricMatrix::zeros(2), &[0.0, 0.0], 0.001, 1.0),
            Err(HullError::Linalg(_))
        ));
    }
}
