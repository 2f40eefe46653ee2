//! Convex-combination feasibility by phase-one simplex.
//!
//! `y ∈ conv{x_1..x_S}` iff there is `θ ≥ 0` with `Aθ = y` and `1ᵀθ = 1`,
//! where `A` has the scenarios as columns. Artificial variables are added
//! to every row and their sum is minimised with Bland's rule; the point is
//! inside iff the minimum falls below [`FEASIBILITY_TOLERANCE`].

use super::HullError;

pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const PIVOT_TOLERANCE: f64 = 1e-12;
const REDUCED_COST_TOLERANCE: f64 = 1e-12;

/// Feasibility problem `Aθ = y, Bθ = 1, θ ≥ 0`.
#[derive(Debug, Clone)]
pub struct FeasibilityLp<'a> {
    columns: &'a [Vec<f64>],
    target: &'a [f64],
}

impl<'a> FeasibilityLp<'a> {
    pub fn new(columns: &'a [Vec<f64>], target: &'a [f64]) -> Result<Self, HullError> {
        if columns.is_empty() {
            return Err(HullError::Empty);
        }
        let dim = target.len();
        if let Some((index, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != dim) {
            return Err(HullError::DimensionMismatch {
                index,
                expected: dim,
                actual: c.len(),
            });
        }
        Ok(Self { columns, target })
    }

    /// Iteration cap for the simplex loop.
    pub fn iteration_limit(&self) -> usize {
        let m = self.target.len() + 1;
        50 * (self.columns.len() + m) + 1000
    }

    /// Weights `θ` when feasible, `None` otherwise.
    pub fn solve(&self) -> Result<Option<Vec<f64>>, HullError> {
        let s = self.columns.len();
        let m = self.target.len() + 1;
        let width = s + m + 1;
        let rhs_col = width - 1;
        let mut tab = vec![0.0; m * width];
        for i in 0..m {
            let row = &mut tab[i * width..(i + 1) * width];
            let (coeffs, rhs): (Vec<f64>, f64) = if i + 1 < m {
                (self.columns.iter().map(|c| c[i]).collect(), self.target[i])
            } else {
                (vec![1.0; s], 1.0)
            };
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, c) in coeffs.into_iter().enumerate() {
                row[j] = sign * c;
            }
            row[s + i] = 1.0;
            row[rhs_col] = sign * rhs;
        }
        let mut basis: Vec<usize> = (s..s + m).collect();
        // Reduced costs of the phase-one objective (sum of artificials).
        let mut cost = vec![0.0; width];
        for i in 0..m {
            for j in 0..s {
                cost[j] -= tab[i * width + j];
            }
            cost[rhs_col] -= tab[i * width + rhs_col];
        }

        let limit = self.iteration_limit();
        for _ in 0..limit {
            if -cost[rhs_col] < FEASIBILITY_TOLERANCE {
                break;
            }
            // Bland: lowest-index improving column; artificials never re-enter.
            let Some(enter) = (0..s).find(|&j| cost[j] < -REDUCED_COST_TOLERANCE) else {
                break;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = tab[i * width + enter];
                if a > PIVOT_TOLERANCE {
                    let ratio = tab[i * width + rhs_col] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best || (ratio == best && basis[i] < basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(HullError::Numerical("unbounded phase-one column"));
            };
            let piv = tab[row * width + enter];
            for k in 0..width {
                tab[row * width + k] /= piv;
            }
            let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
            for i in 0..m {
                if i == row {
                    continue;
                }
                let f = tab[i * width + enter];
                if f != 0.0 {
                    for (k, pv) in pivot_row.iter().enumerate() {
                        tab[i * width + k] -= f * pv;
                    }
                }
            }
            let f = cost[enter];
            for (k, pv) in pivot_row.iter().enumerate() {
                cost[k] -= f * pv;
            }
            basis[row] = enter;
        }

        let objective = -cost[rhs_col];
        if objective < FEASIBILITY_TOLERANCE {
            let mut theta = vec![0.0; s];
            for (i, &b) in basis.iter().enumerate() {
                if b < s {
                    theta[b] = tab[i * width + rhs_col].max(0.0);
                }
            }
            return Ok(Some(theta));
        }
        if (0..s).any(|j| cost[j] < -REDUCED_COST_TOLERANCE) {
            return Err(HullError::Stall { iterations: limit });
        }
        Ok(None)
    }
}

/// Whether `y` is a convex combination of the given points.
pub fn contains_lp(points: &[Vec<f64>], y: &[f64]) -> Result<bool, HullError> {
    Ok(FeasibilityLp::new(points, y)?.solve()?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]
    }

    #[test]
    fn scenario_points_are_members() {
        let t = triangle();
        for p in &t {
            assert!(contains_lp(&t, p).unwrap());
        }
    }

    #[test]
    fn triangle_membership() {
        let t = triangle();
        assert!(contains_lp(&t, &[0.25, 0.25]).unwrap());
        assert!(!contains_lp(&t, &[1.0, 1.0]).unwrap());
        assert!(!contains_lp(&t, &[-0.01, 0.5]).unwrap());
        assert!(contains_lp(&t, &[0.5, 0.5]).unwrap());
    }

    #[test]
    fn weights_reproduce_target() {
        let pts = vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.1, 0.4], vec![0.5, 0.8, 0.2], vec![0.4, 0.4, 0.9]];
        let y = [0.45, 0.4, 0.45];
        let theta = FeasibilityLp::new(&pts, &y).unwrap().solve().unwrap().expect("inside");
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for d in 0..3 {
            let v: f64 = pts.iter().zip(&theta).map(|(p, w)| p[d] * w).sum();
            assert!((v - y[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_point_and_negative_targets() {
        let one = vec![vec![0.3, 0.3]];
        assert!(contains_lp(&one, &[0.3, 0.3]).unwrap());
        assert!(!contains_lp(&one, &[0.3, 0.31]).unwrap());
        let neg = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![0.0, 1.0]];
        assert!(contains_lp(&neg, &[0.0, -0.5]).unwrap());
        assert!(!contains_lp(&neg, &[0.0, -1.5]).unwrap());
    }

    #[test]
    fn input_errors() {
        assert!(matches!(contains_lp(&[], &[0.0]), Err(HullError::Empty)));
        assert!(matches!(
            contains_lp(&[vec![0.0, 1.0]], &[0.0]),
            Err(HullError::DimensionMismatch { .. })
        ));
    }
}
