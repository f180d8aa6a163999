//! Coordinate descent for `min ½ βᵀGβ − cᵀβ + Σ λⱼ|βⱼ|` with `G` positive
//! semidefinite, plus the conditioning checks shared by both regressions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative pivot below which a Gram matrix is treated as singular.
pub(crate) const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct CdOutcome {
    pub beta: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

#[inline]
pub(crate) fn soft_threshold(z: f64, lambda: f64) -> f64 {
    // Exact ties (duplicated columns) land within rounding of the threshold.
    if lambda > 0.0 && z.abs() <= lambda * (1.0 + 1e-12) {
        return 0.0;
    }
    z.signum() * (z.abs() - lambda).max(0.0)
}

/// Cholesky factor of `gram`, or `None` when some pivot is below
/// `PIVOT_TOLERANCE` relative to its diagonal entry.
pub(crate) fn checked_cholesky(gram: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = gram.clone().cholesky()?;
    let l = chol.l_dirty();
    for j in 0..gram.nrows() {
        let d = gram[(j, j)];
        if !(d > 0.0) || l[(j, j)] * l[(j, j)] < PIVOT_TOLERANCE * d {
            return None;
        }
    }
    Some(chol)
}

/// Greedily keeps columns of `gram` (visited in `order`) whose residual
/// variance after projecting out already-kept columns is non-negligible.
/// Returns `(kept, dropped)`, each sorted ascending.
pub(crate) fn independent_columns(
    gram: &DMatrix<f64>,
    order: &[usize],
    always: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let mut kept: Vec<usize> = always.to_vec();
    let mut dropped = Vec::new();
    for &j in order {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = submatrix(gram, &trial);
        if checked_cholesky(&sub).is_some() {
            kept = trial;
        } else {
            dropped.push(j);
        }
    }
    kept.sort_unstable();
    dropped.sort_unstable();
    (kept, dropped)
}

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// Cyclic coordinate descent from `init` until the largest coefficient
/// change in a sweep is below `tol`.
pub(crate) fn coordinate_descent(
    gram: &DMatrix<f64>,
    linear: &DVector<f64>,
    penalty: &[f64],
    init: DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> CdOutcome {
    let p = linear.len();
    let mut beta = init;
    // Negative gradient of the smooth part: c - Gβ.
    let mut grad = linear - gram * &beta;
    for sweep in 1..=max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let g = gram[(j, j)];
            let old = beta[j];
            let new = if g > 0.0 {
                soft_threshold(grad[j] + g * old, penalty[j]) / g
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                grad.axpy(-delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            return CdOutcome {
                beta,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    CdOutcome {
        beta,
        sweeps: max_sweeps,
        converged: false,
    }
}

/// Penalized quadratic minimizer, warm-started at the unpenalized solution
/// when `gram` is well conditioned and at `fallback` otherwise.
pub(crate) fn solve_penalized(
    gram: &DMatrix<f64>,
    linear: &DVector<f64>,
    penalty: &[f64],
    fallback: DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> CdOutcome {
    let init = checked_cholesky(gram)
        .map(|c| c.solve(linear))
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .unwrap_or(fallback);
    coordinate_descent(gram, linear, penalty, init, tol, max_sweeps)
}
