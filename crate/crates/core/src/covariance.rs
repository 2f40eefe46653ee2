//! Exponentially weighted covariance of point-forecast errors.
//!
//! `Σ_t = λ Σ_{t−1} + (1 − λ) e_t e_tᵀ`. The recursion itself is kept
//! un-shrunk; diagonal loading `εI` is applied only when the raw matrix
//! fails the Cholesky pivot test.

use thiserror::Error;

use crate::linalg::{cholesky, cholesky_inverse_factor, LinalgError, SymmetricMatrix, UpperTriangularFactor};

pub const DEFAULT_LAMBDA: f64 = 0.97;
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Preferred number of errors used to seed the recursion.
pub const SEED_COUNT: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("error vector has length {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("insufficient training errors: {actual} given, at least {required} required")]
    InsufficientData { required: usize, actual: usize },
    #[error("decay must lie in (0, 1), got {0}")]
    InvalidDecay(f64),
    #[error("shrinkage floor must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaConfig {
    pub lambda: f64,
    pub epsilon: f64,
    /// Subtract the running mean error before the outer product.
    pub center_errors: bool,
}

impl Default for EwmaConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            center_errors: false,
        }
    }
}

impl EwmaConfig {
    fn validate(&self) -> Result<(), CovarianceError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(CovarianceError::InvalidDecay(self.lambda));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(CovarianceError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EwmaCovarianceState {
    config: EwmaConfig,
    mean: Vec<f64>,
    raw: SymmetricMatrix,
    count: usize,
}

impl EwmaCovarianceState {
    /// State seeded with an explicit covariance and zero mean.
    pub fn from_covariance(config: EwmaConfig, sigma: SymmetricMatrix) -> Result<Self, CovarianceError> {
        config.validate()?;
        Ok(Self {
            config,
            mean: vec![0.0; sigma.dim()],
            raw: sigma,
            count: 0,
        })
    }

    /// Seeds with the sample covariance of the first `max(D + 1, 30)` errors
    /// (or all of them, if fewer) and absorbs the rest with [`update`](Self::update).
    pub fn initialize(config: EwmaConfig, errors: &[Vec<f64>]) -> Result<Self, CovarianceError> {
        config.validate()?;
        let dim = errors.first().map_or(0, Vec::len);
        let required = dim + 1;
        if errors.len() < required || dim == 0 {
            return Err(CovarianceError::InsufficientData {
                required: required.max(2),
                actual: errors.len(),
            });
        }
        if let Some(bad) = errors.iter().find(|e| e.len() != dim) {
            return Err(CovarianceError::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let seed = required.max(SEED_COUNT).min(errors.len());
        let (mean, raw) = SymmetricMatrix::sample_covariance(&errors[..seed], config.center_errors);
        let mut state = Self {
            config,
            mean,
            raw,
            count: seed,
        };
        for e in &errors[seed..] {
            state.update(e)?;
        }
        Ok(state)
    }

    pub fn update(&mut self, error: &[f64]) -> Result<(), CovarianceError> {
        let dim = self.raw.dim();
        if error.len() != dim {
            return Err(CovarianceError::DimensionMismatch {
                expected: dim,
                actual: error.len(),
            });
        }
        let lambda = self.config.lambda;
        if self.config.center_errors {
            let dev: Vec<f64> = error.iter().zip(&self.mean).map(|(e, m)| e - m).collect();
            self.raw.decay_rank_one(lambda, 1.0 - lambda, &dev);
        } else {
            self.raw.decay_rank_one(lambda, 1.0 - lambda, error);
        }
        for (m, e) in self.mean.iter_mut().zip(error) {
            *m = lambda * *m + (1.0 - lambda) * e;
        }
        self.count += 1;
        Ok(())
    }

    pub fn config(&self) -> EwmaConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.raw.dim()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Recursion output before any shrinkage.
    pub fn raw_covariance(&self) -> &SymmetricMatrix {
        &self.raw
    }

    /// `Σ_t`, loaded with `εI` when the raw matrix fails the pivot test.
    pub fn covariance(&self) -> SymmetricMatrix {
        if cholesky(&self.raw).is_ok() {
            self.raw.clone()
        } else {
            self.raw.with_added_diagonal(self.config.epsilon)
        }
    }

    /// `Λ_t` for the current covariance.
    pub fn factor(&self) -> Result<UpperTriangularFactor, CovarianceError> {
        Ok(cholesky_inverse_factor(&self.covariance())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(lambda: f64, epsilon: f64) -> EwmaConfig {
        EwmaConfig {
            lambda,
            epsilon,
            center_errors: false,
        }
    }

    #[test]
    fn zero_error_decays_identity() {
        let mut s = EwmaCovarianceState::from_covariance(cfg(0.97, 1e-6), SymmetricMatrix::identity(2)).unwrap();
        s.update(&[0.0, 0.0]).unwrap();
        let c = s.covariance();
        assert_eq!(c.to_rows(), vec![vec![0.97, 0.0], vec![0.0, 0.97]]);
    }

    #[test]
    fn hand_computed_recursion_with_shrinkage() {
        let mut s = EwmaCovarianceState::from_covariance(cfg(0.5, 1e-6), SymmetricMatrix::zeros(2)).unwrap();
        s.update(&[1.0, 0.0]).unwrap();
        assert_eq!(s.raw_covariance().to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.covariance().to_rows(), vec![vec![0.5 + 1e-6, 0.0], vec![0.0, 1e-6]]);
        assert!(s.factor().is_ok());
    }

    #[test]
    fn zero_training_errors_give_epsilon_identity() {
        let errors = vec![vec![0.0; 3]; 100];
        let s = EwmaCovarianceState::initialize(cfg(0.97, 1e-6), &errors).unwrap();
        assert_eq!(s.covariance(), SymmetricMatrix::identity(3).scaled(1e-6));
    }

    #[test]
    fn initialize_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mk = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..30).map(|_| StandardNormal.sample(rng)).collect())
                .collect()
        };
        assert!(EwmaCovarianceState::initialize(EwmaConfig::default(), &mk(31, &mut rng)).is_ok());
        assert_eq!(
            EwmaCovarianceState::initialize(EwmaConfig::default(), &mk(30, &mut rng)),
            Err(CovarianceError::InsufficientData { required: 31, actual: 30 })
        );
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = EwmaCovarianceState::from_covariance(EwmaConfig::default(), SymmetricMatrix::identity(2)).unwrap();
        assert!(matches!(s.update(&[1.0]), Err(CovarianceError::DimensionMismatch { .. })));
        assert!(EwmaCovarianceState::from_covariance(cfg(1.0, 0.0), SymmetricMatrix::identity(2)).is_err());
    }

    #[test]
    fn tracks_stationary_covariance() {
        let target = SymmetricMatrix::from_rows(&[vec![0.04, 0.018], vec![0.018, 0.0225]]).unwrap();
        let l = cholesky(&target).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = EwmaCovarianceState::from_covariance(cfg(0.99, 1e-6), SymmetricMatrix::identity(2)).unwrap();
        for _ in 0..5000 {
            let w: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            s.update(&l.mul_vec(&w)).unwrap();
        }
        let est = s.covariance();
        let max = 0.04;
        for i in 0..2 {
            for j in 0..2 {
                assert!((est.get(i, j) - target.get(i, j)).abs() < 0.1 * max);
            }
        }
    }

    #[test]
    fn centered_mode_removes_constant_bias() {
        let mut errors = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            errors.push(vec![0.5 + 0.1 * a, -0.3 + 0.1 * b]);
        }
        let c = EwmaConfig { center_errors: true, ..EwmaConfig::default() };
        let s = EwmaCovarianceState::initialize(c, &errors).unwrap();
        assert!((s.covariance().get(0, 0) - 0.01).abs() < 0.006);
        assert!((s.mean()[0] - 0.5).abs() < 0.05);
    }

    #[test]
    fn pd_across_many_random_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = EwmaCovarianceState::from_covariance(cfg(0.97, 1e-8), SymmetricMatrix::identity(4)).unwrap();
        for i in 0..100_000 {
            // Alternate between full-rank noise and rank-one bursts.
            let a: f64 = StandardNormal.sample(&mut rng);
            let e: Vec<f64> = if (i / 500) % 2 == 0 {
                (0..4).map(|_| StandardNormal.sample(&mut rng)).collect()
            } else {
                vec![a; 4]
            };
            s.update(&e).unwrap();
            if i % 97 == 0 || (i / 500) % 2 == 1 {
                assert!(s.factor().is_ok(), "step {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_equivariant(
            errs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 5..40),
            c in 0.1f64..5.0,
        ) {
            let base = EwmaCovarianceState::initialize(cfg(0.9, 1e-6), &errs).unwrap();
            let scaled_errs: Vec<Vec<f64>> = errs.iter().map(|e| e.iter().map(|v| v * c).collect()).collect();
            let scaled = EwmaCovarianceState::initialize(cfg(0.9, 1e-6), &scaled_errs).unwrap();
            let (a, b) = (base.raw_covariance(), scaled.raw_covariance());
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                    prop_assert!((b.get(i, j) - c * c * a.get(i, j)).abs() <= 1e-12 * (1.0 + b.get(i, j).abs()));
                }
            }
        }
    }
}
