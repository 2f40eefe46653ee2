//! Correlated scenario generation through a Gaussian copula.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{cholesky, LinalgError, SymmetricMatrix};
use crate::marginal::MarginalQuantileCurve;
use crate::stats::normal_cdf;

pub const DEFAULT_SCENARIO_COUNT: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario set is empty")]
    Empty,
    #[error("scenario {index} has length {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("scenario {index} has an entry outside [0, 1]")]
    OutOfRange { index: usize },
    #[error("correlation matrix must have a unit diagonal")]
    NotCorrelation,
    #[error("correlation matrix: {0}")]
    Correlation(#[from] LinalgError),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

/// `S` equally likely trajectories of dimension `D`, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    points: Vec<Vec<f64>>,
    /// Seed used to draw the set, when generated.
    pub seed: Option<u64>,
    /// Time step the set was generated for.
    pub t: Option<i64>,
    /// Copula correlation used for generation.
    pub correlation: Option<SymmetricMatrix>,
}

impl ScenarioSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, ScenarioError> {
        let dim = points.first().ok_or(ScenarioError::Empty)?.len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(ScenarioError::DimensionMismatch {
                    index,
                    expected: dim,
                    actual: p.len(),
                });
            }
            if !p.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(ScenarioError::OutOfRange { index });
            }
        }
        Ok(Self {
            points,
            seed: None,
            t: None,
            correlation: None,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Subset keeping the points selected by `keep`, metadata preserved.
    pub fn filtered(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Self {
        Self {
            points: self.points.iter().filter(|p| keep(p)).cloned().collect(),
            seed: self.seed,
            t: self.t,
            correlation: self.correlation.clone(),
        }
    }
}

/// Reads one scenario per row; every column is a coordinate. A header row is
/// required.
pub fn read_scenarios<R: Read>(reader: R) -> Result<ScenarioSet, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| ScenarioError::Malformed {
            line: e.position().map_or(0, csv::Position::line),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let p = record
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| ScenarioError::Malformed {
                    line,
                    message: format!("cannot parse '{v}'"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        points.push(p);
    }
    ScenarioSet::new(points)
}

/// Writes scenarios with an `x_1..x_D` header.
pub fn write_scenarios<W: Write>(set: &ScenarioSet, writer: W) -> Result<(), ScenarioError> {
    let io = |e: csv::Error| ScenarioError::Malformed {
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=set.dim()).map(|d| format!("x_{d}"))).map_err(io)?;
    for p in set.points() {
        w.write_record(p.iter().map(f64::to_string)).map_err(io)?;
    }
    w.flush().map_err(|e| ScenarioError::Malformed {
        line: 0,
        message: e.to_string(),
    })
}

/// Mixes a base seed with a time index (splitmix64 finalizer).
pub fn step_seed(seed: u64, t: i64) -> u64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `count` scenarios: `z ~ N(0, R)`, `u = Φ(z)`, `x_d = F_d⁻¹(u_d)`.
pub fn sample_scenarios(
    marginals: &MarginalQuantileCurve,
    correlation: &SymmetricMatrix,
    count: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    let dim = marginals.dim();
    if count == 0 {
        return Err(ScenarioError::Empty);
    }
    if correlation.dim() != dim {
        return Err(ScenarioError::DimensionMismatch {
            index: 0,
            expected: dim,
            actual: correlation.dim(),
        });
    }
    if correlation.diagonal().iter().any(|v| (v - 1.0).abs() > 1e-9) {
        return Err(ScenarioError::NotCorrelation);
    }
    let l = cholesky(correlation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; dim];
    let points = (0..count)
        .map(|_| {
            for v in w.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            l.mul_vec(&w)
                .iter()
                .enumerate()
                .map(|(d, &z)| marginals.quantile(d, normal_cdf(z)).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    Ok(ScenarioSet {
        points,
        seed: Some(seed),
        t: None,
        correlation: Some(correlation.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::default_levels;

    fn uniform(dim: usize) -> MarginalQuantileCurve {
        let c: Vec<(f64, f64)> = default_levels().into_iter().map(|p| (p, p)).collect();
        MarginalQuantileCurve::new(vec![c; dim]).unwrap()
    }

    fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn independent_uniforms() {
        let s = sample_scenarios(&uniform(2), &SymmetricMatrix::identity(2), 2000, 1).unwrap();
        let a: Vec<f64> = s.points().iter().map(|p| p[0]).collect();
        let b: Vec<f64> = s.points().iter().map(|p| p[1]).collect();
        assert!(pearson(&a, &b).abs() < 0.1);
    }

    #[test]
    fn degenerate_marginal_is_constant() {
        let c = vec![(0.005, 0.4), (0.5, 0.4), (0.995, 0.4)];
        let m = MarginalQuantileCurve::new(vec![c.clone(), c]).unwrap();
        let s = sample_scenarios(&m, &SymmetricMatrix::identity(2), 300, 9).unwrap();
        assert!(s.points().iter().all(|p| p == &vec![0.4, 0.4]));
    }

    #[test]
    fn rank_correlation_follows_copula() {
        let rho = 0.9;
        let r = SymmetricMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
        let s = sample_scenarios(&uniform(2), &r, 2000, 17).unwrap();
        let a: Vec<f64> = s.points().iter().map(|p| p[0]).collect();
        let b: Vec<f64> = s.points().iter().map(|p| p[1]).collect();
        let spearman = pearson(&ranks(&a), &ranks(&b));
        // Spearman correlation of a Gaussian copula: (6/π) asin(ρ/2).
        let expected = 6.0 / std::f64::consts::PI * (rho / 2.0).asin();
        assert!((spearman - expected).abs() < 0.05, "{spearman} vs {expected}");
    }

    #[test]
    fn marginal_consistency_ks() {
        let m = MarginalQuantileCurve::gaussian(&[0.4, 0.6], &[0.1, 0.05], &default_levels()).unwrap();
        let r = SymmetricMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = sample_scenarios(&m, &r, 2000, 23).unwrap();
        for d in 0..2 {
            let mut v: Vec<f64> = s.points().iter().map(|p| p[d]).collect();
            v.sort_by(f64::total_cmp);
            // KS distance against the curve's own CDF evaluated on a fine grid of levels.
            let mut ks = 0.0_f64;
            for k in 1..1000 {
                let u = k as f64 / 1000.0;
                let q = m.quantile(d, u);
                let emp = v.partition_point(|&x| x <= q) as f64 / v.len() as f64;
                ks = ks.max((emp - u).abs());
            }
            assert!(ks < 0.05, "dim {d}: KS {ks}");
        }
    }

    #[test]
    fn reproducible_and_bounded() {
        let r = SymmetricMatrix::from_rows(&[vec![1.0, -0.3], vec![-0.3, 1.0]]).unwrap();
        let a = sample_scenarios(&uniform(2), &r, 500, 42).unwrap();
        let b = sample_scenarios(&uniform(2), &r, 500, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let c = sample_scenarios(&uniform(2), &r, 500, 43).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn rejects_bad_correlation() {
        let bad = SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            sample_scenarios(&uniform(2), &bad, 10, 0),
            Err(ScenarioError::Correlation(_))
        ));
        let cov = SymmetricMatrix::from_diagonal(&[2.0, 1.0]);
        assert_eq!(sample_scenarios(&uniform(2), &cov, 10, 0), Err(ScenarioError::NotCorrelation));
        assert_eq!(sample_scenarios(&uniform(2), &SymmetricMatrix::identity(2), 0, 0), Err(ScenarioError::Empty));
    }

    #[test]
    fn csv_round_trip() {
        let s = sample_scenarios(&uniform(3), &SymmetricMatrix::identity(3), 20, 5).unwrap();
        let mut buf = Vec::new();
        write_scenarios(&s, &mut buf).unwrap();
        let back = read_scenarios(buf.as_slice()).unwrap();
        assert_eq!(back.points(), s.points());
        assert!(matches!(
            read_scenarios("a,b\n0.1,x\n".as_bytes()),
            Err(ScenarioError::Malformed { line: 2, .. })
        ));
        assert!(matches!(read_scenarios("a,b\n0.1,1.5\n".as_bytes()), Err(ScenarioError::OutOfRange { index: 0 })));
    }

    #[test]
    fn step_seeds_differ() {
        assert_ne!(step_seed(7, 1), step_seed(7, 2));
        assert_eq!(step_seed(7, 1), step_seed(7, 1));
    }
}
