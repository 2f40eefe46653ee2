//! Per-dimension predictive quantile curves and their inverse CDFs.

use std::collections::BTreeMap;
use std::io::Read;

use thiserror::Error;

use crate::stats::normal_quantile;

/// Probability level at which the lower tail reaches the lower bound (zero).
pub const LOWER_TAIL_LEVEL: f64 = 0.005;
/// Probability level of the upper interval limit.
pub const UPPER_TAIL_LEVEL: f64 = 0.995;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarginalError {
    #[error("marginal set is empty")]
    Empty,
    #[error("dimension {dim}: at least 2 quantile points required, got {count}")]
    TooFewPoints { dim: usize, count: usize },
    #[error("dimension {dim}: probability levels must be strictly increasing in (0, 1)")]
    Levels { dim: usize },
    #[error("dimension {dim}: quantile values must be non-decreasing within [0, 1]")]
    Values { dim: usize },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

/// Standard probability grid 2.5%, 5%, ..., 97.5%.
pub fn default_levels() -> Vec<f64> {
    (1..=39).map(|k| k as f64 / 40.0).collect()
}

/// Quantile curves for every dimension of a forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalQuantileCurve {
    curves: Vec<Vec<(f64, f64)>>,
    /// Curves extended with the tail knots, used for inversion.
    knots: Vec<Vec<(f64, f64)>>,
}

impl MarginalQuantileCurve {
    pub fn new(curves: Vec<Vec<(f64, f64)>>) -> Result<Self, MarginalError> {
        if curves.is_empty() {
            return Err(MarginalError::Empty);
        }
        for (dim, c) in curves.iter().enumerate() {
            if c.len() < 2 {
                return Err(MarginalError::TooFewPoints {
                    dim,
                    count: c.len(),
                });
            }
            let levels_ok = c.iter().all(|&(p, _)| p > 0.0 && p < 1.0)
                && c.windows(2).all(|w| w[0].0 < w[1].0);
            if !levels_ok {
                return Err(MarginalError::Levels { dim });
            }
            let values_ok = c.iter().all(|&(_, q)| (0.0..=1.0).contains(&q))
                && c.windows(2).all(|w| w[0].1 <= w[1].1);
            if !values_ok {
                return Err(MarginalError::Values { dim });
            }
        }
        let knots = curves.iter().map(|c| extend_tails(c)).collect();
        Ok(Self { curves, knots })
    }

    /// Gaussian marginals `x̂_d + σ_d Φ⁻¹(p)`, clamped to `[0, 1]`.
    pub fn gaussian(mean: &[f64], sd: &[f64], levels: &[f64]) -> Result<Self, MarginalError> {
        let z: Vec<f64> = levels.iter().map(|&p| normal_quantile(p)).collect();
        let curves = mean
            .iter()
            .zip(sd)
            .map(|(&m, &s)| {
                levels
                    .iter()
                    .zip(&z)
                    .map(|(&p, &zp)| (p, (m + s * zp).clamp(0.0, 1.0)))
                    .collect()
            })
            .collect();
        Self::new(curves)
    }

    pub fn dim(&self) -> usize {
        self.curves.len()
    }

    pub fn curve(&self, dim: usize) -> &[(f64, f64)] {
        &self.curves[dim]
    }

    /// Inverse CDF of dimension `dim` at probability `u`: linear between the
    /// extended knots, flat outside them.
    pub fn quantile(&self, dim: usize, u: f64) -> f64 {
        let k = &self.knots[dim];
        let first = k[0];
        let last = k[k.len() - 1];
        if u <= first.0 {
            return first.1;
        }
        if u >= last.0 {
            return last.1;
        }
        let idx = k.partition_point(|&(p, _)| p <= u);
        let (p0, q0) = k[idx - 1];
        let (p1, q1) = k[idx];
        q0 + (q1 - q0) * (u - p0) / (p1 - p0)
    }

    /// Upper interval limit of dimension `dim` (the 99.5% quantile).
    pub fn upper_limit(&self, dim: usize) -> f64 {
        self.quantile(dim, UPPER_TAIL_LEVEL)
    }
}

/// Adds `(0.5%, 0)` below and `(99.5%, upper)` above the curve when the curve
/// does not already reach those levels. The upper value extends the last
/// segment linearly, kept within `[q_last, 1]`.
fn extend_tails(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut k = Vec::with_capacity(curve.len() + 2);
    if curve[0].0 > LOWER_TAIL_LEVEL {
        k.push((LOWER_TAIL_LEVEL, 0.0));
    }
    k.extend_from_slice(curve);
    let n = curve.len();
    let (p1, q1) = curve[n - 1];
    if p1 < UPPER_TAIL_LEVEL {
        let (p0, q0) = curve[n - 2];
        let slope = (q1 - q0) / (p1 - p0);
        let upper = (q1 + slope * (UPPER_TAIL_LEVEL - p1)).clamp(q1, 1.0);
        k.push((UPPER_TAIL_LEVEL, upper));
    }
    k
}

/// Reads per-time-step marginals from a CSV with columns `t, dim, level, value`.
pub fn read_quantile_curves<R: Read>(
    reader: R,
    dim: usize,
) -> Result<BTreeMap<i64, MarginalQuantileCurve>, MarginalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let malformed = |line: u64, message: String| MarginalError::Malformed { line, message };
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(1, format!("missing column '{name}'")))
    };
    let (tc, dc, lc, vc) = (col("t")?, col("dim")?, col("level")?, col("value")?);
    let mut raw: BTreeMap<i64, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(0, e.to_string()))?;
        let line = record.position().map_or(0, csv::Position::line);
        let parse = |c: usize| {
            record[c]
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("cannot parse '{}'", &record[c])))
        };
        let t: i64 = record[tc]
            .parse()
            .map_err(|_| malformed(line, format!("bad timestamp '{}'", &record[tc])))?;
        let d: usize = record[dc]
            .parse()
            .map_err(|_| malformed(line, format!("bad dim '{}'", &record[dc])))?;
        if d == 0 || d > dim {
            return Err(malformed(line, format!("dim {d} outside 1..={dim}")));
        }
        let entry = raw.entry(t).or_insert_with(|| vec![Vec::new(); dim]);
        entry[d - 1].push((parse(lc)?, parse(vc)?));
    }
    raw.into_iter()
        .map(|(t, mut curves)| {
            for c in &mut curves {
                c.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            MarginalQuantileCurve::new(curves).map(|m| (t, m))
        })
        .collect()
}
