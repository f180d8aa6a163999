use nalgebra::{DMatrix, DVector};

use super::lasso::{checked_cholesky, independent_columns, solve_penalized, submatrix};
use super::{active_by_magnitude, validate_inputs, Dof, RegressionResult, StatsError};

pub const OLS_TOL: f64 = 1e-10;
pub const OLS_MAX_SWEEPS: usize = 10_000;

/// Residual sum of squares at or below this fraction of `Σ y²` is a perfect fit.
const PERFECT_FIT_RATIO: f64 = 1e-24;

/// Least squares of `y` on the columns of `x` plus an intercept, minimizing
/// `½·RSS/n + l1_weight·Σ|β|`.
pub fn fit_ols(
    x: &DMatrix<f64>,
    y: &[f64],
    l1_weight: f64,
) -> Result<RegressionResult, StatsError> {
    validate_inputs(x, y, l1_weight)?;
    let (n, p) = x.shape();
    let nf = n as f64;

    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let gram = xc.tr_mul(&xc) / nf;
    let linear = xc.tr_mul(&yc) / nf;
    let penalty = vec![l1_weight; p];
    let cd = solve_penalized(
        &gram,
        &linear,
        &penalty,
        DVector::zeros(p),
        OLS_TOL,
        OLS_MAX_SWEEPS,
    );
    let mut beta: Vec<f64> = cd.beta.iter().copied().collect();

    let (kept, dropped) = independent_columns(&gram, &active_by_magnitude(&beta), &[]);
    for &j in &dropped {
        beta[j] = 0.0;
    }

    let beta_v = DVector::from_column_slice(&beta);
    let residual = &yc - &xc * &beta_v;
    let rss = residual.norm_squared();
    let intercept = y_mean - x_mean.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
    let dof = n - kept.len() - 1;
    let scale = y.iter().map(|v| v * v).sum::<f64>();
    let perfect = rss <= PERFECT_FIT_RATIO * scale;

    let mut std_errors = vec![0.0; p];
    let mut t_values = vec![0.0; p];
    let mut p_values = vec![1.0; p];
    if !kept.is_empty() {
        let sigma2 = if perfect { 0.0 } else { rss / dof as f64 };
        // Var(β) = σ² (XcᵀXc)⁻¹ = σ²/n · G⁻¹ on the kept columns.
        let inv = checked_cholesky(&submatrix(&gram, &kept))
            .expect("kept columns are independent")
            .inverse();
        for (a, &j) in kept.iter().enumerate() {
            let se = (sigma2 / nf * inv[(a, a)]).max(0.0).sqrt();
            std_errors[j] = se;
            if perfect || se == 0.0 {
                t_values[j] = f64::INFINITY.copysign(beta[j]);
                p_values[j] = 0.0;
            } else {
                t_values[j] = beta[j] / se;
                p_values[j] = Dof::Finite(dof).two_sided_p(t_values[j]);
            }
        }
    }

    Ok(RegressionResult {
        coefficients: beta,
        intercept,
        std_errors,
        t_values,
        p_values,
        dof: Dof::Finite(dof),
        converged: cd.converged,
        iterations: cd.sweeps,
        separation_warning: false,
        dropped,
    })
}
