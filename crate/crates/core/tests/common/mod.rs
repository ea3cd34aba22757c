//! Independent oracles and fixtures shared by the integration tests. Nothing
//! here calls into the solver code it is used to check.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;

use paradise_core::corpus::{Conversation, Exchange};
use paradise_core::linalg::Matrix;
use paradise_core::regressors::tree::{Node, RegressionTree};
use paradise_core::regressors::{Regressor, SvrModel, SvrParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Print a line that bypasses the test harness's output capture.
pub fn announce(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn verdict(criterion: usize, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    announce(&format!(
        "acceptance criterion {criterion} [{tag}] {name}: {detail}"
    ));
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

pub fn conversation(id: &str, rating: Option<u8>, turns: &[(&str, &str)]) -> Conversation {
    Conversation {
        id: id.to_string(),
        rating,
        exchanges: turns
            .iter()
            .enumerate()
            .map(|(index, (topic, user))| Exchange {
                index,
                topic: topic.to_string(),
                response_generator: "template".to_string(),
                user_text: user.to_string(),
                system_text: String::new(),
                midas_tags: BTreeSet::new(),
                sda_tags: BTreeSet::new(),
            })
            .collect(),
    }
}

/// Solve `A x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Least squares with intercept through `[1 X]^T [1 X] w = [1 X]^T y`.
/// Returns `(coefficients, intercept)`.
pub fn normal_equations(x: &Matrix, y: &[f64]) -> (Vec<f64>, f64) {
    let d = x.cols() + 1;
    let aug = |i: usize, j: usize| if j == 0 { 1.0 } else { x.get(i, j - 1) };
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for i in 0..x.rows() {
        for j in 0..d {
            rhs[j] += aug(i, j) * y[i];
            for k in 0..d {
                gram[j][k] += aug(i, j) * aug(i, k);
            }
        }
    }
    let w = gauss_solve(gram, rhs);
    (w[1..].to_vec(), w[0])
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

fn sse(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum()
}

/// CART by exhaustive search: every feature, every midpoint between
/// consecutive distinct values, child SSE recomputed from scratch.
pub fn exhaustive_tree(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    depth: usize,
    max_depth: usize,
) -> OracleTree {
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let parent = sse(&ys);
    if depth == max_depth || rows.len() < 2 || parent <= 0.0 {
        return OracleTree::Leaf(mean);
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<f64>, Vec<f64>) = {
                let l = rows
                    .iter()
                    .filter(|&&i| x.get(i, f) <= t)
                    .map(|&i| y[i])
                    .collect();
                let r = rows
                    .iter()
                    .filter(|&&i| x.get(i, f) > t)
                    .map(|&i| y[i])
                    .collect();
                (l, r)
            };
            let child = sse(&l) + sse(&r);
            if best.is_none_or(|(b, _, _)| child < b) {
                best = Some((child, f, t));
            }
        }
    }
    match best {
        Some((child, f, t)) if parent - child > 1e-10 * parent => {
            let l: Vec<usize> = rows.iter().copied().filter(|&i| x.get(i, f) <= t).collect();
            let r: Vec<usize> = rows.iter().copied().filter(|&i| x.get(i, f) > t).collect();
            OracleTree::Split {
                feature: f,
                threshold: t,
                left: Box::new(exhaustive_tree(x, y, &l, depth + 1, max_depth)),
                right: Box::new(exhaustive_tree(x, y, &r, depth + 1, max_depth)),
            }
        }
        _ => OracleTree::Leaf(mean),
    }
}

/// Structural equality: same features and thresholds exactly, leaf means
/// within 1e-12.
pub fn same_tree(tree: &RegressionTree, node: usize, oracle: &OracleTree) -> bool {
    match (&tree.nodes[node], oracle) {
        (Node::Leaf { value, .. }, OracleTree::Leaf(v)) => (value - v).abs() < 1e-12,
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            },
            OracleTree::Split {
                feature: f,
                threshold: t,
                left: ol,
                right: or,
            },
        ) => {
            feature == f
                && threshold == t
                && same_tree(tree, *left, ol)
                && same_tree(tree, *right, or)
        }
        _ => false,
    }
}

/// Largest violation of the epsilon-SVR optimality conditions:
/// box `|coef| <= C`, equality `sum coef = 0`, and the tube conditions
/// for zero, free and bounded multipliers.
pub fn svr_kkt_violation(m: &SvrModel, x: &Matrix, y: &[f64], p: &SvrParams) -> f64 {
    let mut worst: f64 = 0.0;
    let mut coef = vec![0.0; x.rows()];
    for (&i, &c) in m.support_indices.iter().zip(&m.dual_coef) {
        coef[i] = c;
        worst = worst.max(c.abs() - p.c);
    }
    worst = worst.max(m.dual_coef.iter().sum::<f64>().abs());
    for i in 0..x.rows() {
        let resid = m.predict_row(x.row(i)) - y[i];
        let c = coef[i];
        let v = if c == 0.0 {
            resid.abs() - p.epsilon
        } else if c.abs() < p.c {
            let boundary = if c > 0.0 { -p.epsilon } else { p.epsilon };
            (resid - boundary).abs()
        } else {
            // a bounded multiplier sits on or outside the tube, on its side
            let outside = if c > 0.0 { -resid } else { resid };
            p.epsilon - outside
        };
        worst = worst.max(v);
    }
    worst
}

/// `ln Gamma(x)` for integer or half-integer `x > 0` by recurrence from
/// `Gamma(1) = 1` and `Gamma(1/2) = sqrt(pi)`.
pub fn ln_gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    assert!((2.0 * x - twice as f64).abs() < 1e-12 && twice > 0);
    let (mut acc, mut z) = if twice % 2 == 0 {
        (0.0, 1.0)
    } else {
        (0.5 * std::f64::consts::PI.ln(), 0.5)
    };
    while z < x - 1e-9 {
        acc += z.ln();
        z += 1.0;
    }
    acc
}

/// Two-tailed Student-t p-value by composite Simpson integration of the
/// density over `[0, |t|]`.
pub fn t_two_tailed_quadrature(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma_half_integer((df + 1.0) / 2.0)
        - ln_gamma_half_integer(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |s: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + s * s / df).ln()).exp();
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut sum = density(0.0) + density(t.abs());
    for i in 1..n {
        sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * sum * h / 3.0
}

/// Two centered series of length `n` whose sample correlation is `r`.
pub fn correlated_pair(n: usize, r: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut g = rng(seed);
    let center = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u = center((0..n).map(|_| g.random_range(-1.0..1.0)).collect());
    let u: Vec<f64> = u.iter().map(|x| x / norm(&u)).collect();
    let w = center((0..n).map(|_| g.random_range(-1.0..1.0)).collect());
    let proj: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let v: Vec<f64> = w.iter().zip(&u).map(|(b, a)| b - proj * a).collect();
    let v: Vec<f64> = v.iter().map(|x| x / norm(&v)).collect();
    let b = u
        .iter()
        .zip(&v)
        .map(|(a, c)| r * a + (1.0 - r * r).sqrt() * c)
        .collect();
    (u, b)
}
