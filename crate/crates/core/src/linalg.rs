//! Dense symmetric linear algebra for the region constructors.
//!
//! The central object is the upper-triangular factor `Λ` of the inverse
//! covariance, with `Λᵀ Λ = Σ⁻¹`. It is obtained without forming `Σ⁻¹`:
//! the Cholesky factor of the index-reversed matrix `JΣJ = L̃ L̃ᵀ` gives an
//! upper-triangular `U = J L̃ J` with `Σ = U Uᵀ`, and `Λ = U⁻¹`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative pivot threshold below which a matrix is treated as semi-definite.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("factor diagonal entry {index} is not strictly positive")]
    NonPositiveDiagonal { index: usize },
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (r, c) = if j > i { (j, i) } else { (i, j) };
    r * (r + 1) / 2 + c
}

/// Symmetric matrix stored as its packed lower triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from dense rows, checking symmetry to a relative 1e-12.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                if j < i {
                    let other = rows[j][i];
                    let scale = v.abs().max(other.abs()).max(f64::MIN_POSITIVE);
                    if (v - other).abs() > 1e-12 * scale {
                        return Err(LinalgError::NotSymmetric { row: i, col: j });
                    }
                }
                if j <= i {
                    m.set(i, j, v);
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[packed(i, j)] = value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn with_added_diagonal(&self, value: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.dim {
            let v = m.get(i, i);
            m.set(i, i, v + value);
        }
        m
    }

    /// In-place `self ← decay·self + weight·v vᵀ`.
    pub fn decay_rank_one(&mut self, decay: f64, weight: f64, v: &[f64]) {
        let mut k = 0;
        for i in 0..self.dim {
            for j in 0..=i {
                self.data[k] = decay * self.data[k] + weight * v[i] * v[j];
                k += 1;
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Correlation matrix `R_ij = Σ_ij / √(Σ_ii Σ_jj)`.
    pub fn to_correlation(&self) -> Self {
        let sd: Vec<f64> = self.diagonal().iter().map(|v| v.sqrt()).collect();
        let mut r = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..i {
                r.set(i, j, self.get(i, j) / (sd[i] * sd[j]));
            }
            r.set(i, i, 1.0);
        }
        r
    }

    /// Sample second-moment matrix of `rows`, optionally centred on their mean.
    pub fn sample_covariance(rows: &[Vec<f64>], center: bool) -> (Vec<f64>, Self) {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut cov = Self::zeros(dim);
        for r in rows {
            let dev: Vec<f64> = if center {
                r.iter().zip(&mean).map(|(v, m)| v - m).collect()
            } else {
                r.clone()
            };
            cov.decay_rank_one(1.0, 1.0 / n, &dev);
        }
        (mean, cov)
    }
}

/// Lower-triangular Cholesky factor `L` with `Σ = L Lᵀ`, packed row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerCholesky {
    dim: usize,
    data: Vec<f64>,
}

impl LowerCholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed(i, j)]
        }
    }

    /// `L v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Standard Cholesky `Σ = L Lᵀ` with the relative pivot test.
pub fn cholesky(sigma: &SymmetricMatrix) -> Result<LowerCholesky, LinalgError> {
    let n = sigma.dim();
    let max_diag = sigma
        .diagonal()
        .into_iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = PIVOT_TOLERANCE * max_diag;
    let mut l = vec![0.0; n * (n + 1) / 2];
    for j in 0..n {
        let mut pivot = sigma.get(j, j);
        for k in 0..j {
            pivot -= l[packed(j, k)] * l[packed(j, k)];
        }
        if !(pivot > threshold) || pivot <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l[packed(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = sigma.get(i, j);
            for k in 0..j {
                s -= l[packed(i, k)] * l[packed(j, k)];
            }
            l[packed(i, j)] = s / d;
        }
    }
    Ok(LowerCholesky { dim: n, data: l })
}

/// Upper-triangular `Λ` with strictly positive diagonal and `Λᵀ Λ = Σ⁻¹`.
///
/// Stored densely row-major; entries below the diagonal are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorRepr", into = "FactorRepr")]
pub struct UpperTriangularFactor {
    dim: usize,
    data: Vec<f64>,
}

/// Serialized form: upper-triangle entries, row-major.
#[derive(Serialize, Deserialize)]
struct FactorRepr {
    dim: usize,
    upper: Vec<f64>,
}

impl From<UpperTriangularFactor> for FactorRepr {
    fn from(f: UpperTriangularFactor) -> Self {
        let mut upper = Vec::with_capacity(f.dim * (f.dim + 1) / 2);
        for i in 0..f.dim {
            for j in i..f.dim {
                upper.push(f.get(i, j));
            }
        }
        FactorRepr { dim: f.dim, upper }
    }
}

impl TryFrom<FactorRepr> for UpperTriangularFactor {
    type Error = LinalgError;

    fn try_from(r: FactorRepr) -> Result<Self, Self::Error> {
        let expected = r.dim * (r.dim + 1) / 2;
        if r.upper.len() != expected {
            return Err(LinalgError::DimensionMismatch {
                expected,
                actual: r.upper.len(),
            });
        }
        let mut rows = vec![vec![0.0; r.dim]; r.dim];
        let mut it = r.upper.into_iter();
        for (i, row) in rows.iter_mut().enumerate() {
            for v in row.iter_mut().skip(i) {
                *v = it.next().unwrap_or_default();
            }
        }
        UpperTriangularFactor::from_rows(&rows)
    }
}

impl UpperTriangularFactor {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Builds a factor from dense rows; entries below the diagonal are ignored.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = vec![0.0; dim * dim];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for j in i..dim {
                if !row[j].is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                data[i * dim + j] = row[j];
            }
            if !(row[i] > 0.0) {
                return Err(LinalgError::NonPositiveDiagonal { index: i });
            }
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// `Λ v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    /// `Λ v` written into `out`, no allocation.
    #[inline]
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.dim + i..(i + 1) * self.dim];
            *o = row.iter().zip(&v[i..]).map(|(a, b)| a * b).sum();
        }
    }

    /// `Λ (x − µ)` written into `out`.
    #[inline]
    pub fn whiten_into(&self, x: &[f64], mu: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.dim + i..(i + 1) * self.dim];
            *o = row
                .iter()
                .zip(x[i..].iter().zip(&mu[i..]))
                .map(|(a, (xv, mv))| a * (xv - mv))
                .sum();
        }
    }

    /// `ln det Λ = −½ ln det Σ`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).ln()).sum()
    }

    /// Reconstructs `Σ⁻¹ = Λᵀ Λ` (test and diagnostics helper).
    pub fn precision(&self) -> SymmetricMatrix {
        let mut p = SymmetricMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(k, i) * self.get(k, j)).sum();
                p.set(i, j, s);
            }
        }
        p
    }
}

/// Computes `Λ` with `Λᵀ Λ = Σ⁻¹` via the reversed Cholesky of `Σ`.
pub fn cholesky_inverse_factor(
    sigma: &SymmetricMatrix,
) -> Result<UpperTriangularFactor, LinalgError> {
    let n = sigma.dim();
    let rev = |i: usize| n - 1 - i;
    let mut reversed = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            reversed.set(i, j, sigma.get(rev(i), rev(j)));
        }
    }
    let lt = cholesky(&reversed).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { index, pivot } => LinalgError::NotPositiveDefinite {
            index: rev(index),
            pivot,
        },
        other => other,
    })?;

    // U = J L̃ J is upper triangular with Σ = U Uᵀ.
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            u[i * n + j] = lt.get(rev(i), rev(j));
        }
    }

    // Λ = U⁻¹, column by column via back substitution on U λ_j = e_j.
    let mut lambda = vec![0.0; n * n];
    for j in 0..n {
        for i in (0..=j).rev() {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in (i + 1)..=j {
                s -= u[i * n + k] * lambda[k * n + j];
            }
            lambda[i * n + j] = s / u[i * n + i];
        }
    }
    Ok(UpperTriangularFactor {
        dim: n,
        data: lambda,
    })
}

/// `ln det Σ` from the Cholesky pivots.
pub fn log_det(sigma: &SymmetricMatrix) -> Result<f64, LinalgError> {
    let l = cholesky(sigma)?;
    Ok((0..l.dim()).map(|i| 2.0 * l.get(i, i).ln()).sum())
}

/// Solves `Λ y = b` by back substitution.
pub fn solve_triangular(
    factor: &UpperTriangularFactor,
    b: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    let n = factor.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| factor.get(i, k) * y[k]).sum();
        y[i] = (b[i] - s) / factor.get(i, i);
    }
    Ok(y)
}

/// Determinant of a small dense square matrix by partial-pivot elimination.
pub(crate) fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap_or(c);
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in (c + 1)..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_sigma() -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&[
            vec![0.01762222, 0.01135601],
            vec![0.01135601, 0.01265258],
        ])
        .unwrap()
    }

    fn max_abs_residual(f: &UpperTriangularFactor, sigma: &SymmetricMatrix) -> f64 {
        let p = f.precision().to_rows();
        let s = sigma.to_rows();
        let n = sigma.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| p[i][k] * s[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_factor() {
        let f = cholesky_inverse_factor(&SymmetricMatrix::identity(2)).unwrap();
        assert_eq!(f, UpperTriangularFactor::identity(2));
    }

    #[test]
    fn diagonal_factor() {
        let f = cholesky_inverse_factor(&SymmetricMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((f.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((f.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.get(0, 1), 0.0);
    }

    #[test]
    fn worked_example_factor_multiplies_back() {
        let s = paper_sigma();
        let f = cholesky_inverse_factor(&s).unwrap();
        assert!(max_abs_residual(&f, &s) < 1e-10);
        assert!(f.get(0, 0) > 0.0 && f.get(1, 1) > 0.0);
        assert_eq!(f.to_rows()[1][0], 0.0);
    }

    #[test]
    fn rejects_semi_definite_with_pivot_index() {
        let s = SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        match cholesky_inverse_factor(&s) {
            Err(LinalgError::NotPositiveDefinite { index, .. }) => assert!(index < 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(cholesky(&SymmetricMatrix::zeros(2)).is_err());
    }

    #[test]
    fn asymmetric_rows_rejected() {
        let r = SymmetricMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]);
        assert!(matches!(r, Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn log_det_cases() {
        assert_eq!(log_det(&SymmetricMatrix::identity(3)).unwrap(), 0.0);
        let d = log_det(&SymmetricMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((d - 36f64.ln()).abs() < 1e-14);
        // 2x2 closed form ad - b².
        let s = paper_sigma();
        let closed = (s.get(0, 0) * s.get(1, 1) - s.get(0, 1).powi(2)).ln();
        assert!((log_det(&s).unwrap() - closed).abs() < 1e-12);
        // det Λ = 1/√det Σ
        let f = cholesky_inverse_factor(&s).unwrap();
        assert!((f.log_det() + 0.5 * closed).abs() < 1e-12);
    }

    #[test]
    fn solve_triangular_cases() {
        let id = UpperTriangularFactor::identity(3);
        assert_eq!(solve_triangular(&id, &[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        let d = UpperTriangularFactor::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(solve_triangular(&d, &[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(
            solve_triangular(&d, &[1.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn determinant_matches_closed_forms() {
        assert!((determinant(vec![vec![1.0, 2.0], vec![3.0, 4.0]]) + 2.0).abs() < 1e-14);
        assert_eq!(determinant(vec![vec![0.0, 1.0], vec![1.0, 0.0]]), -1.0);
        assert_eq!(determinant(vec![vec![1.0, 2.0], vec![2.0, 4.0]]), 0.0);
    }

    fn spd(dim: usize, entries: &[f64]) -> SymmetricMatrix {
        // A^T A + 0.1 I
        let a: Vec<Vec<f64>> = entries.chunks(dim).map(<[f64]>::to_vec).collect();
        let mut s = SymmetricMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v: f64 = (0..dim).map(|k| a[k][i] * a[k][j]).sum();
                s.set(i, j, v + if i == j { 0.1 } else { 0.0 });
            }
        }
        s
    }

    proptest! {
        #[test]
        fn random_spd_factor_inverts(dim in 1usize..8, entries in prop::collection::vec(-2.0f64..2.0, 64)) {
            let s = spd(dim, &entries[..dim * dim]);
            let f = cholesky_inverse_factor(&s).unwrap();
            prop_assert!(max_abs_residual(&f, &s) < 1e-8);
            for i in 0..dim {
                prop_assert!(f.get(i, i) > 0.0);
            }
        }

        #[test]
        fn log_det_scaling(dim in 1usize..7, entries in prop::collection::vec(-2.0f64..2.0, 49)) {
            let s = spd(dim, &entries[..dim * dim]);
            let base = log_det(&s).unwrap();
            for c in [0.5, 2.0, 10.0] {
                let scaled = log_det(&s.scaled(c)).unwrap();
                prop_assert!((scaled - (dim as f64 * f64::ln(c) + base)).abs() < 1e-9);
            }
        }

        #[test]
        fn solve_multiplies_back(entries in prop::collection::vec(-1.0f64..1.0, 36), b in prop::collection::vec(-5.0f64..5.0, 6)) {
            let mut rows: Vec<Vec<f64>> = entries.chunks(6).map(<[f64]>::to_vec).collect();
            for (i, r) in rows.iter_mut().enumerate() {
                r[i] = r[i].abs() + 0.5;
            }
            let f = UpperTriangularFactor::from_rows(&rows).unwrap();
            let y = solve_triangular(&f, &b).unwrap();
            let back = f.mul_vec(&y);
            let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (u, v) in back.iter().zip(&b) {
                prop_assert!((u - v).abs() <= 1e-10 * norm.max(1.0));
            }
        }
    }
}
