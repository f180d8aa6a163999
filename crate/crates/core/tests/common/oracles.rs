//! Reference computations written from textbook definitions, sharing no code
//! with the library: coalition enumeration for Shapley values, Gauss-Jordan
//! normal equations for OLS, plain Newton for logistic regression, and
//! Simpson quadrature for tail probabilities.
#![allow(dead_code)]

use shapsel_core::{Branch, NodeKind, Tree, TreeEnsemble};

// ---------- Shapley values ----------

/// Cover-weighted expectation of one tree with features in `known` fixed to
/// the row's values.
fn tree_value(tree: &Tree, node: usize, row: &[f64], known: u32) -> f64 {
    let n = &tree.nodes()[node];
    match n.kind {
        NodeKind::Leaf { value } => value,
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
            missing,
        } => {
            if known & (1 << feature) != 0 {
                let x = row[feature];
                let go_left = if x.is_nan() {
                    missing == Branch::Left
                } else {
                    x < threshold
                };
                tree_value(tree, if go_left { left } else { right }, row, known)
            } else {
                let cl = tree.nodes()[left].cover;
                let cr = tree.nodes()[right].cover;
                (cl * tree_value(tree, left, row, known) + cr * tree_value(tree, right, row, known))
                    / n.cover
            }
        }
    }
}

/// `v(S)` for class `k`.
pub fn coalition_value(ensemble: &TreeEnsemble, row: &[f64], known: u32, k: usize) -> f64 {
    ensemble.base_score()[k]
        + ensemble
            .trees()
            .iter()
            .filter(|t| t.class_index == k)
            .map(|t| tree_value(t, 0, row, known))
            .sum::<f64>()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Returns `(phi[feature][class], base[class])` by enumerating all coalitions.
pub fn shapley_by_enumeration(ensemble: &TreeEnsemble, row: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = ensemble.n_features();
    assert!(p <= 16, "oracle enumerates 2^p coalitions");
    let k = ensemble.n_classes();
    let mut phi = vec![vec![0.0; k]; p];
    let mut base = vec![0.0; k];
    let weights: Vec<f64> = (0..p)
        .map(|s| factorial(s) * factorial(p - s - 1) / factorial(p))
        .collect();
    for c in 0..k {
        let v: Vec<f64> = (0..1u32 << p)
            .map(|s| coalition_value(ensemble, row, s, c))
            .collect();
        base[c] = v[0];
        for (i, phi_i) in phi.iter_mut().enumerate() {
            let bit = 1u32 << i;
            let mut total = 0.0;
            for s in 0..1u32 << p {
                if s & bit == 0 {
                    total +=
                        weights[s.count_ones() as usize] * (v[(s | bit) as usize] - v[s as usize]);
                }
            }
            phi_i[c] = total;
        }
    }
    (phi, base)
}

// ---------- Linear algebra ----------

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let d = m[col][col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot = m[col].clone();
                    for (v, q) in m[r].iter_mut().zip(&pivot) {
                        *v -= f * q;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Design rows with a leading 1 for the intercept.
fn with_intercept(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect()
}

// ---------- Tail probabilities ----------

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Two-sided Student-t tail `P(|T| ≥ |t|)` by integrating the density.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let log_c = libm::lgamma((dof + 1.0) / 2.0)
        - libm::lgamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI).ln();
    let c = log_c.exp();
    let density = |x: f64| c * (1.0 + x * x / dof).powf(-(dof + 1.0) / 2.0);
    let t = t.abs();
    if t > 60.0 {
        // Tail mass past 60 via the integral from t outward (finite grid).
        return 2.0 * simpson(density, t, t + 2000.0, 400_000);
    }
    (1.0 - 2.0 * simpson(density, 0.0, t, 40_000)).max(0.0)
}

/// Two-sided standard normal tail by integrating the density.
pub fn normal_two_sided_p(z: f64) -> f64 {
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let z = z.abs();
    if z > 8.0 {
        return 2.0 * simpson(density, z, z + 40.0, 40_000);
    }
    (1.0 - 2.0 * simpson(density, 0.0, z, 40_000)).max(0.0)
}

// ---------- Regressions ----------

#[derive(Debug, Clone)]
pub struct OracleFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
}

/// OLS with intercept: `β = (XᵀX)⁻¹Xᵀy`, `se = sqrt(σ̂² diag((XᵀX)⁻¹))`,
/// `σ̂² = RSS / (n − p − 1)`.
pub fn ols_normal_equations(x: &[Vec<f64>], y: &[f64]) -> OracleFit {
    let a = with_intercept(x);
    let n = a.len();
    let q = a[0].len();
    let xtx: Vec<Vec<f64>> = (0..q)
        .map(|i| {
            (0..q)
                .map(|j| (0..n).map(|r| a[r][i] * a[r][j]).sum())
                .collect()
        })
        .collect();
    let xty: Vec<f64> = (0..q)
        .map(|i| (0..n).map(|r| a[r][i] * y[r]).sum())
        .collect();
    let inv = gauss_jordan_inverse(&xtx);
    let beta = mat_vec(&inv, &xty);
    let rss: f64 = (0..n)
        .map(|r| {
            let fit: f64 = a[r].iter().zip(&beta).map(|(x, b)| x * b).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    let dof = (n - q) as f64;
    let sigma2 = rss / dof;
    let se: Vec<f64> = (1..q).map(|j| (sigma2 * inv[j][j]).sqrt()).collect();
    let t: Vec<f64> = (1..q).map(|j| beta[j] / se[j - 1]).collect();
    let p = t.iter().map(|&t| t_two_sided_p(t, dof)).collect();
    OracleFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        std_errors: se,
        t_values: t,
        p_values: p,
    }
}

/// Unpenalized logistic regression with intercept by Newton's method;
/// standard errors from the inverse observed information at the optimum.
pub fn logistic_newton(x: &[Vec<f64>], y: &[f64]) -> OracleFit {
    let a = with_intercept(x);
    let n = a.len();
    let q = a[0].len();
    let mut beta = vec![0.0; q];
    let info = |beta: &[f64]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut h = vec![vec![0.0; q]; q];
        let mut g = vec![0.0; q];
        for r in 0..n {
            let eta: f64 = a[r].iter().zip(beta).map(|(x, b)| x * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            for i in 0..q {
                g[i] += a[r][i] * (y[r] - mu);
                for j in 0..q {
                    h[i][j] += w * a[r][i] * a[r][j];
                }
            }
        }
        (h, g)
    };
    for _ in 0..200 {
        let (h, g) = info(&beta);
        let step = mat_vec(&gauss_jordan_inverse(&h), &g);
        let mut biggest: f64 = 0.0;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
            biggest = biggest.max(s.abs());
        }
        if biggest < 1e-14 {
            break;
        }
    }
    let (h, _) = info(&beta);
    let inv = gauss_jordan_inverse(&h);
    let se: Vec<f64> = (1..q).map(|j| inv[j][j].sqrt()).collect();
    let z: Vec<f64> = (1..q).map(|j| beta[j] / se[j - 1]).collect();
    let p = z.iter().map(|&z| normal_two_sided_p(z)).collect();
    OracleFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        std_errors: se,
        t_values: z,
        p_values: p,
    }
}

// ---------- Fixed datasets ----------

pub type Fixture = (&'static str, Vec<Vec<f64>>, Vec<f64>);

/// Five small regression problems of varied shape and conditioning.
pub fn ols_fixtures() -> Vec<Fixture> {
    let ten = vec![
        vec![1.0, 2.0],
        vec![2.0, 1.0],
        vec![3.0, 4.0],
        vec![4.0, 3.0],
        vec![5.0, 6.0],
        vec![6.0, 5.0],
        vec![7.0, 8.0],
        vec![8.0, 7.0],
        vec![9.0, 10.0],
        vec![10.0, 9.5],
    ];
    let ten_y = vec![3.1, 3.9, 7.2, 7.8, 11.1, 12.2, 14.8, 16.1, 19.3, 19.9];
    let single: Vec<Vec<f64>> = [0.5, 1.1, 1.9, 3.2, 3.8, 5.1, 6.3, 6.9]
        .iter()
        .map(|&v| vec![v])
        .collect();
    let single_y = vec![2.3, 1.9, 3.5, 2.8, 4.9, 4.1, 6.2, 5.3];
    let gen = |n: usize, p: usize, f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..p).map(|j| f(i, j)).collect()).collect()
    };
    let three = gen(15, 3, &|i, j| {
        ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64
    });
    let three_y: Vec<f64> = three
        .iter()
        .enumerate()
        .map(|(i, r)| 0.5 * r[0] - 1.5 * r[1] + 0.05 * r[2] + ((i * 5) % 7) as f64 * 0.3 - 1.0)
        .collect();
    let corr = gen(12, 2, &|i, j| {
        let base = i as f64 * 0.5;
        if j == 0 {
            base
        } else {
            base + ((i * 3) % 5) as f64 * 0.2
        }
    });
    let corr_y: Vec<f64> = corr
        .iter()
        .enumerate()
        .map(|(i, r)| r[0] - 0.3 * r[1] + ((i * 13) % 6) as f64 * 0.25)
        .collect();
    let four = gen(20, 4, &|i, j| {
        ((i as f64 + 1.0) * (j as f64 + 1.3)).sin() * (j + 1) as f64
    });
    let four_y: Vec<f64> = four
        .iter()
        .enumerate()
        .map(|(i, r)| 2.0 * r[0] - r[2] + 0.01 * r[3] + (i as f64 * 2.7).cos())
        .collect();
    vec![
        ("ten_rows_two_regressors", ten, ten_y),
        ("single_regressor", single, single_y),
        ("three_regressors_weak_third", three, three_y),
        ("correlated_pair", corr, corr_y),
        ("four_trigonometric", four, four_y),
    ]
}

/// Two classification problems without separation.
pub fn logistic_fixtures() -> Vec<Fixture> {
    let twelve: Vec<Vec<f64>> = [
        -3.0, -2.2, -1.5, -1.0, -0.4, 0.1, 0.3, 0.8, 1.2, 1.9, 2.5, 3.1,
    ]
    .iter()
    .map(|&v| vec![v])
    .collect();
    let twelve_y = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    let two: Vec<Vec<f64>> = (0..24)
        .map(|i| {
            let t = i as f64;
            vec![
                (t * 0.9).sin() * 2.0,
                (t * 0.37).cos() * 1.5 + 0.1 * t - 1.0,
            ]
        })
        .collect();
    let two_y: Vec<f64> = two
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let score = r[0] - 0.7 * r[1]
                + if i % 4 == 0 {
                    1.8
                } else if i % 5 == 0 {
                    -1.6
                } else {
                    0.0
                };
            f64::from(u8::from(score > 0.0))
        })
        .collect();
    vec![
        ("twelve_points", twelve, twelve_y),
        ("two_regressors", two, two_y),
    ]
}

/// Largest of `|a − b| / max(1, |b|)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs() / y.abs().max(1.0)
            }
        })
        .fold(0.0, f64::max)
}
