//! Small dense symmetric positive-definite routines.
//!
//! The fitters only ever solve weighted normal equations with a handful of
//! columns, so a plain Cholesky factorization is enough. Near-singular
//! systems get a diagonal jitter of 1e-10 (scaled to the matrix) before we
//! give up.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

const JITTER: f64 = 1e-10;
const MAX_JITTER_ESCALATIONS: u32 = 3;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is non-positive (matrix not PD).
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[[i, k]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

fn solve_upper_t(l: &Array2<f64>, b: Array1<f64>) -> Array1<f64> {
    // Solves L^T x = b given lower-triangular L.
    let n = l.nrows();
    let mut x = b;
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = x[k];
            x[i] -= l[[k, i]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solve `A x = b` for symmetric positive-definite `A` via a pre-computed
/// Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    solve_upper_t(l, solve_lower(l, b))
}

/// Factor `A`, adding an escalating diagonal jitter when the plain
/// factorization fails. Errors after the escalation budget is spent.
pub fn cholesky_with_jitter(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(l) = cholesky(a) {
        return Ok(l);
    }
    let n = a.nrows();
    let scale = {
        let mut t = 0.0;
        for i in 0..n {
            t += a[[i, i]].abs();
        }
        (t / n.max(1) as f64).max(1.0)
    };
    let mut jitter = JITTER * scale;
    for _ in 0..MAX_JITTER_ESCALATIONS {
        let mut aj = a.to_owned();
        for i in 0..n {
            aj[[i, i]] += jitter;
        }
        if let Some(l) = cholesky(aj.view()) {
            return Ok(l);
        }
        jitter *= 100.0;
    }
    Err(Error::SolveFailed(
        "matrix not positive definite after diagonal jitter".into(),
    ))
}

/// Inverse of a symmetric positive-definite matrix from its Cholesky factor.
pub fn cholesky_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let col = cholesky_solve(l, e.view());
        inv.column_mut(j).assign(&col);
    }
    // Symmetrize against round-off.
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = m;
            inv[[j, i]] = m;
        }
    }
    inv
}

/// Indices of columns that make `X` rank deficient, detected through pivot
/// collapse in a Cholesky of `X^T X`. Empty when full rank.
pub fn rank_deficient_columns(xtx: ArrayView2<f64>) -> Vec<usize> {
    let n = xtx.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    let mut bad = Vec::new();
    let scale = (0..n).map(|i| xtx[[i, i]].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..=i {
            let mut s = xtx[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= tol {
                    bad.push(i);
                    l[[i, i]] = 1.0; // neutralize so later columns can still be checked
                } else {
                    l[[i, i]] = s.sqrt();
                }
            } else {
                l[[i, j]] = if l[[j, j]] == 1.0 && bad.contains(&j) {
                    0.0
                } else {
                    s / l[[j, j]]
                };
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![2.0, 5.0];
        let l = cholesky(a.view()).unwrap();
        let x = cholesky_solve(&l, b.view());
        // Oracle: direct 2x2 inverse.
        let det = 4.0 * 3.0 - 2.0 * 2.0;
        let expect = [(3.0 * 2.0 - 2.0 * 5.0) / det, (-2.0 * 2.0 + 4.0 * 5.0) / det];
        assert!((x[0] - expect[0]).abs() < 1e-12);
        assert!((x[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_identity() {
        let a = array![[5.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let l = cholesky(a.view()).unwrap();
        let inv = cholesky_inverse(&l);
        let prod = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_recovers_semidefinite() {
        // Exactly singular: second row is a copy of the first.
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky(a.view()).is_none());
        let l = cholesky_with_jitter(a.view()).unwrap();
        assert!(l[[0, 0]] > 0.0);
    }

    #[test]
    fn detects_duplicate_column() {
        // X with col2 = col0 gives X^T X singular at pivot 2.
        let x = array![[1.0, 0.0, 1.0], [1.0, 1.0, 1.0], [1.0, 2.0, 1.0]];
        let xtx = x.t().dot(&x);
        let bad = rank_deficient_columns(xtx.view());
        assert_eq!(bad, vec![2]);
    }

    #[test]
    fn full_rank_reports_nothing() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let xtx = x.t().dot(&x);
        assert!(rank_deficient_columns(xtx.view()).is_empty());
    }
}
