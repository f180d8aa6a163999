//! Two-sided tail probabilities for t and z statistics.

use statrs::function::beta::beta_reg;

/// Residual degrees of freedom of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    /// Student-t with this many degrees of freedom.
    Finite(usize),
    /// Standard normal (Wald z-test).
    Infinite,
}

impl Dof {
    pub fn two_sided_p(self, t: f64) -> f64 {
        match self {
            Dof::Finite(v) => two_sided_t_p(t, v as f64),
            Dof::Infinite => two_sided_normal_p(t),
        }
    }
}

/// `P(|T| >= |t|)` for `T ~ Student-t(dof)`.
pub fn two_sided_t_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    // 2 * sf(|t|) = I_{v / (v + t^2)}(v / 2, 1 / 2)
    let h = dof / (dof + t * t);
    beta_reg(dof / 2.0, 0.5, h).clamp(0.0, 1.0)
}

/// `P(|Z| >= |z|)` for a standard normal `Z`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}
