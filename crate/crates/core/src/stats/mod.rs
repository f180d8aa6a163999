//! Significance regressions of a target on Shapley-value columns.
//!
//! Both fits carry an unpenalized intercept and an L1 penalty on the slopes.
//! Standard errors use the classical unpenalized formulas evaluated at the
//! penalized solution, restricted to columns with nonzero coefficients.

mod dist;
mod lasso;
mod logistic;
mod ols;
mod task;

pub use dist::{two_sided_normal_p, two_sided_t_p, Dof};
pub use logistic::{fit_logistic, LOGISTIC_MAX_ITER, LOGISTIC_TOL, SEPARATION_THRESHOLD};
pub use ols::{fit_ols, OLS_MAX_SWEEPS, OLS_TOL};
pub use task::{distinct_values, infer_task, TaskKind};

use nalgebra::DMatrix;
use thiserror::Error;

/// Default L1 weight: small enough to leave significance untouched, large
/// enough to break exact collinearity ties.
pub const DEFAULT_L1_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient observations: {n} rows for {p} regressors (need more than {})", p + 1)]
    InsufficientObservations { n: usize, p: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("target has {got} entries, design matrix has {expected} rows")]
    Length { expected: usize, got: usize },
    #[error("degenerate target: only one distinct value")]
    DegenerateTarget,
    #[error("logistic target must contain only 0 and 1")]
    NotBinary,
    #[error("logistic target contains a single class")]
    SingleClass,
    #[error("L1 weight must be finite and nonnegative, got {0}")]
    BadPenalty(f64),
    #[error("empty target")]
    EmptyTarget,
}

/// Coefficients and significance of one regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Zero for columns whose coefficient is zero and for perfect fits.
    pub std_errors: Vec<f64>,
    /// `coefficient / std_error`; `±inf` for a perfect fit, `0` for zeroed
    /// coefficients.
    pub t_values: Vec<f64>,
    /// Two-sided.
    pub p_values: Vec<f64>,
    pub dof: Dof,
    pub converged: bool,
    pub iterations: usize,
    pub separation_warning: bool,
    /// Columns forced to zero because they were linearly dependent on
    /// columns with larger coefficients.
    pub dropped: Vec<usize>,
}

impl RegressionResult {
    /// -1, 0 or +1.
    pub fn coefficient_sign(&self, j: usize) -> i8 {
        let c = self.coefficients[j];
        if c > 0.0 {
            1
        } else if c < 0.0 {
            -1
        } else {
            0
        }
    }
}

fn validate_inputs(x: &DMatrix<f64>, y: &[f64], l1_weight: f64) -> Result<(), StatsError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(StatsError::Length {
            expected: n,
            got: y.len(),
        });
    }
    if n <= p + 1 {
        return Err(StatsError::InsufficientObservations { n, p });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("design matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("target"));
    }
    if !(l1_weight >= 0.0 && l1_weight.is_finite()) {
        return Err(StatsError::BadPenalty(l1_weight));
    }
    Ok(())
}

/// Active columns ordered by decreasing coefficient magnitude (ties by index).
fn active_by_magnitude(beta: &[f64]) -> Vec<usize> {
    let mut active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    active.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
    active
}
