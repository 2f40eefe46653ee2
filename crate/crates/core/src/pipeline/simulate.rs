//! Synthetic forecast/measurement series with a slowly varying error
//! covariance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Noise, RunConfig};
use super::PipelineError;
use crate::data::{Dataset, ForecastFrame};
use crate::linalg::{cholesky, SymmetricMatrix};

/// Bound on the adjacent-dimension correlation of the generator.
const RHO_LIMIT: f64 = 0.9;

/// Ground-truth covariance `Σ_t = S R(ρ_t) S` with `R_ij = ρ_t^{|i−j|}` and
/// `S = diag(σ_{t,d})`.
pub fn true_covariance(rho: f64, sd: &[f64]) -> SymmetricMatrix {
    let d = sd.len();
    let mut m = SymmetricMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            m.set(i, j, rho.powi((i - j) as i32) * sd[i] * sd[j]);
        }
    }
    m
}

fn forecast(t: usize, d: usize) -> f64 {
    let phase = 0.7 * d as f64;
    0.5 + 0.2 * (2.0 * std::f64::consts::PI * t as f64 / 240.0 + phase).sin()
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Generates `train + simulate.eval` frames. The correlation parameter and the
/// log standard deviations follow AR(1) processes around their long-run values.
pub fn simulate_dataset(config: &RunConfig) -> Result<Dataset, PipelineError> {
    let spec = config.spec()?;
    let sim = &config.simulate;
    if !(sim.noise_sd > 0.0 && sim.noise_sd.is_finite()) {
        return Err(PipelineError::Config(format!("simulate.sd must be positive, got {}", sim.noise_sd)));
    }
    if !(sim.rho.abs() <= RHO_LIMIT) {
        return Err(PipelineError::Config(format!("simulate.rho must lie in [-{RHO_LIMIT}, {RHO_LIMIT}]")));
    }
    if !(0.0..1.0).contains(&sim.persistence) {
        return Err(PipelineError::Config("simulate.persistence must lie in [0, 1)".into()));
    }
    if !(sim.volatility >= 0.0 && sim.volatility.is_finite()) {
        return Err(PipelineError::Config("simulate.volatility must be non-negative".into()));
    }
    let dim = spec.dim();
    let total = config.train + sim.eval_len;
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed.unwrap_or(config.seed));
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let base_log_sd = sim.noise_sd.ln();
    let mut rho = sim.rho;
    let mut log_sd = vec![base_log_sd; dim];
    let mut frames = Vec::with_capacity(total);
    for t in 0..total {
        rho = (sim.rho + sim.persistence * (rho - sim.rho) + sim.volatility * normal())
            .clamp(-RHO_LIMIT, RHO_LIMIT);
        for v in log_sd.iter_mut() {
            *v = base_log_sd + sim.persistence * (*v - base_log_sd) + sim.volatility * normal();
        }
        let sd: Vec<f64> = log_sd.iter().map(|v| v.exp()).collect();
        let w: Vec<f64> = (0..dim).map(|_| normal()).collect();
        let xhat: Vec<f64> = (0..dim).map(|d| forecast(t, d)).collect();
        let x = match sim.noise {
            Noise::Zero => xhat.clone(),
            Noise::Gaussian | Noise::Bounded => {
                let l = cholesky(&true_covariance(rho, &sd))?;
                let e = l.mul_vec(&w);
                match sim.noise {
                    Noise::Gaussian => xhat.iter().zip(&e).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect(),
                    _ => xhat
                        .iter()
                        .zip(&e)
                        .map(|(&a, &b)| logistic((a / (1.0 - a)).ln() + b / (a * (1.0 - a))))
                        .collect(),
                }
            }
        };
        frames.push(ForecastFrame {
            t: t as i64,
            label: None,
            forecast: xhat,
            measurement: Some(x),
        });
    }
    Ok(Dataset::new(spec, frames, config.train)?)
}
