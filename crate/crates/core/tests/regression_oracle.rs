mod common;

use common::oracles::*;
use nalgebra::DMatrix;
use shapsel_core::{fit_logistic, fit_ols, Dof};

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x[0].len(), |r, c| x[r][c])
}

#[test]
fn quadrature_tails_match_known_values() {
    // Values from standard tables.
    assert!((normal_two_sided_p(1.959963984540054) - 0.05).abs() < 1e-12);
    assert!((t_two_sided_p(2.228138851986274, 10.0) - 0.05).abs() < 1e-11);
    assert!((t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-12);
}

#[test]
fn ols_matches_normal_equations() {
    for (name, x, y) in ols_fixtures() {
        let fit = fit_ols(&design(&x), &y, 0.0).unwrap();
        let oracle = ols_normal_equations(&x, &y);
        assert_eq!(fit.dof, Dof::Finite(x.len() - x[0].len() - 1), "{name}");
        assert!(fit.converged, "{name}");
        for (what, got, want) in [
            ("coefficients", &fit.coefficients, &oracle.coefficients),
            ("std_errors", &fit.std_errors, &oracle.std_errors),
            ("t_values", &fit.t_values, &oracle.t_values),
            ("p_values", &fit.p_values, &oracle.p_values),
        ] {
            let err = max_rel_err(got, want);
            assert!(
                err < 1e-8,
                "{name} {what}: {got:?} vs {want:?} (err {err:e})"
            );
        }
        assert!((fit.intercept - oracle.intercept).abs() < 1e-8 * oracle.intercept.abs().max(1.0));
    }
}

#[test]
fn logistic_matches_newton() {
    for (name, x, y) in logistic_fixtures() {
        let fit = fit_logistic(&design(&x), &y, 0.0).unwrap();
        let oracle = logistic_newton(&x, &y);
        assert!(fit.converged && !fit.separation_warning, "{name}");
        assert_eq!(fit.dof, Dof::Infinite);
        for (what, got, want) in [
            ("coefficients", &fit.coefficients, &oracle.coefficients),
            ("std_errors", &fit.std_errors, &oracle.std_errors),
            ("z_values", &fit.t_values, &oracle.t_values),
            ("p_values", &fit.p_values, &oracle.p_values),
        ] {
            let err = max_rel_err(got, want);
            assert!(
                err < 1e-6,
                "{name} {what}: {got:?} vs {want:?} (err {err:e})"
            );
        }
        assert!((fit.intercept - oracle.intercept).abs() < 1e-6);
    }
}

#[test]
fn small_penalty_barely_moves_significance() {
    for (name, x, y) in ols_fixtures() {
        let plain = fit_ols(&design(&x), &y, 0.0).unwrap();
        let tiny = fit_ols(&design(&x), &y, 1e-6).unwrap();
        for (a, b) in plain.t_values.iter().zip(&tiny.t_values) {
            assert!(
                (a - b).abs() < 1e-3 * a.abs().max(1.0),
                "{name}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn fits_are_bitwise_deterministic() {
    for (_, x, y) in ols_fixtures() {
        assert_eq!(
            fit_ols(&design(&x), &y, 1e-6).unwrap(),
            fit_ols(&design(&x), &y, 1e-6).unwrap()
        );
    }
    for (_, x, y) in logistic_fixtures() {
        assert_eq!(
            fit_logistic(&design(&x), &y, 1e-6).unwrap(),
            fit_logistic(&design(&x), &y, 1e-6).unwrap()
        );
    }
}
