use nalgebra::{DMatrix, DVector};

use super::lasso::{checked_cholesky, independent_columns, solve_penalized, submatrix};
use super::{active_by_magnitude, validate_inputs, Dof, RegressionResult, StatsError};

pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_TOL: f64 = 1e-8;
/// Slope magnitude (log-odds units) above which quasi-separation is reported.
pub const SEPARATION_THRESHOLD: f64 = 30.0;

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_SWEEPS: usize = 10_000;
const MIN_WEIGHT: f64 = 1e-10;
const MAX_HALVINGS: usize = 50;

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood plus the L1 penalty on the slopes.
fn objective(xa: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, l1: f64) -> f64 {
    let eta = xa * beta;
    let nll: f64 = eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| softplus(e) - yi * e)
        .sum::<f64>()
        / y.len() as f64;
    nll + l1 * beta.iter().skip(1).map(|b| b.abs()).sum::<f64>()
}

/// Logistic regression of a 0/1 target on the columns of `x` plus an
/// intercept, by IRLS with an L1-penalized (soft-thresholded) inner step.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    l1_weight: f64,
) -> Result<RegressionResult, StatsError> {
    validate_inputs(x, y, l1_weight)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::NotBinary);
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(StatsError::SingleClass);
    }

    let xa = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let mut penalty = vec![l1_weight; p + 1];
    penalty[0] = 0.0;

    let mut beta = DVector::zeros(p + 1);
    let rate = positives as f64 / nf;
    beta[0] = (rate / (1.0 - rate)).ln();
    let mut current = objective(&xa, y, &beta, l1_weight);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=LOGISTIC_MAX_ITER {
        iterations = iter;
        let eta = &xa * &beta;
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let wi = (pi * (1.0 - pi)).max(MIN_WEIGHT);
            w[i] = wi;
            z[i] = eta[i] + (y[i] - pi) / wi;
        }
        let xw = DMatrix::from_fn(n, p + 1, |i, j| xa[(i, j)] * w[i]);
        let gram = xw.tr_mul(&xa) / nf;
        let linear = xw.tr_mul(&z) / nf;
        let cd = solve_penalized(
            &gram,
            &linear,
            &penalty,
            beta.clone(),
            INNER_TOL,
            INNER_MAX_SWEEPS,
        );
        let step = cd.beta - &beta;

        // Step halving keeps the penalized objective non-increasing.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let value = objective(&xa, y, &candidate, l1_weight);
            if value <= current {
                accepted = Some((candidate, value));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, value)) = accepted else {
            // No descent direction left: the iterate is optimal to working precision.
            converged = step.amax() * scale < LOGISTIC_TOL || step.amax() < LOGISTIC_TOL;
            break;
        };
        let change = (&candidate - &beta).amax();
        beta = candidate;
        current = value;
        if change < LOGISTIC_TOL {
            converged = true;
            break;
        }
    }

    let mut coefficients: Vec<f64> = beta.iter().skip(1).copied().collect();
    let separation_warning = coefficients.iter().any(|c| c.abs() > SEPARATION_THRESHOLD);

    // Fisher information XᵀWX at the solution.
    let eta = &xa * &beta;
    let xw = DMatrix::from_fn(n, p + 1, |i, j| {
        let pi = sigmoid(eta[i]);
        xa[(i, j)] * pi * (1.0 - pi)
    });
    let info = xw.tr_mul(&xa);
    let order: Vec<usize> = active_by_magnitude(&coefficients)
        .into_iter()
        .map(|j| j + 1)
        .collect();
    let (kept, dropped) = independent_columns(&info, &order, &[0]);
    let dropped: Vec<usize> = dropped.into_iter().map(|j| j - 1).collect();
    for &j in &dropped {
        coefficients[j] = 0.0;
    }

    let mut std_errors = vec![0.0; p];
    let mut t_values = vec![0.0; p];
    let mut p_values = vec![1.0; p];
    let inverse = checked_cholesky(&submatrix(&info, &kept)).map(|c| c.inverse());
    for (a, &col) in kept.iter().enumerate().skip(1) {
        let j = col - 1;
        match &inverse {
            Some(inv) => {
                let se = inv[(a, a)].max(0.0).sqrt();
                std_errors[j] = se;
                t_values[j] = coefficients[j] / se;
                p_values[j] = Dof::Infinite.two_sided_p(t_values[j]);
            }
            None => std_errors[j] = f64::INFINITY,
        }
    }

    Ok(RegressionResult {
        coefficients,
        intercept: beta[0],
        std_errors,
        t_values,
        p_values,
        dof: Dof::Infinite,
        converged,
        iterations,
        separation_warning,
        dropped,
    })
}
