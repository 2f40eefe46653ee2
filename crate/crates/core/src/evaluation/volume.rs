//! Monte Carlo volume of regions clipped to the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{EvaluationError, Region};
use crate::linalg::UpperTriangularFactor;
use crate::polyhedra::RegionKind;

/// `V^c`: the feasible range is `[0, 1]^D`.
const CUBE_VOLUME: f64 = 1.0;

/// 100 000 samples up to six dimensions, 500 000 above.
pub fn default_sample_count(dim: usize) -> usize {
    if dim <= 6 {
        100_000
    } else {
        500_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeRecord {
    pub t: i64,
    pub region: String,
    pub alpha: Option<f64>,
    pub volume: f64,
    /// `N′`; zero for exact volumes.
    pub samples: usize,
    /// `N″`.
    pub hits: usize,
    pub cube_volume: f64,
    pub stderr: f64,
}

impl VolumeRecord {
    /// `V = N″ V^c / N′` with standard error `√(p(1 − p)/N′) V^c`.
    pub fn from_counts(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            t: 0,
            region: String::new(),
            alpha: None,
            volume: p * CUBE_VOLUME,
            samples,
            hits,
            cube_volume: CUBE_VOLUME,
            stderr: (p * (1.0 - p) / samples as f64).sqrt() * CUBE_VOLUME,
        }
    }

    /// A volume computed in closed form.
    pub fn exact(volume: f64) -> Self {
        Self {
            t: 0,
            region: String::new(),
            alpha: None,
            volume,
            samples: 0,
            hits: 0,
            cube_volume: CUBE_VOLUME,
            stderr: 0.0,
        }
    }

    pub fn labelled(mut self, t: i64, region: &str, alpha: Option<f64>) -> Self {
        self.t = t;
        self.region = region.to_string();
        self.alpha = alpha;
        self
    }
}

/// `N′` uniform points in `[0, 1]^D`, stored row-major. Reusing one set across
/// regions gives common-random-numbers comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSamples {
    dim: usize,
    data: Vec<f64>,
}

impl UniformSamples {
    pub fn new(dim: usize, count: usize, seed: u64) -> Result<Self, EvaluationError> {
        if count == 0 {
            return Err(EvaluationError::NoSamples);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dim * count).map(|_| rng.random::<f64>()).collect();
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn hits<R: Region + ?Sized>(&self, region: &R) -> usize {
        self.iter().filter(|x| region.contains_point(x)).count()
    }

    pub fn volume<R: Region + ?Sized>(&self, region: &R) -> VolumeRecord {
        VolumeRecord::from_counts(self.hits(region), self.len())
    }
}

/// Clipped volume by uniform sampling in the unit cube.
pub fn monte_carlo_volume<R: Region + ?Sized>(
    region: &R,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<VolumeRecord, EvaluationError> {
    if region.dim() != dim {
        return Err(EvaluationError::DimensionMismatch {
            expected: dim,
            actual: region.dim(),
        });
    }
    Ok(UniformSamples::new(dim, samples, seed)?.volume(region))
}

/// Hit counts of nested norm regions `{‖Λ(x − µ)‖ ≤ s_k}` sharing centre and
/// factor. Each sample is scored once and compared against every scale.
pub fn nested_score_hits(
    samples: &UniformSamples,
    kind: RegionKind,
    center: &[f64],
    factor: &UpperTriangularFactor,
    scales: &[f64],
) -> Vec<usize> {
    let mut hits = vec![0; scales.len()];
    let mut z = vec![0.0; center.len()];
    for x in samples.iter() {
        factor.whiten_into(x, center, &mut z);
        let s = kind.norm(&z);
        for (h, &scale) in hits.iter_mut().zip(scales) {
            if s <= scale {
                *h += 1;
            }
        }
    }
    hits
}
