//! Least squares, ridge and lasso with an unpenalized intercept.

use serde::{Deserialize, Serialize};

use super::{check_xy, FitError, Regressor};
use crate::linalg::{dot, lstsq_qr, solve_spd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearFamily {
    Ols,
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl Regressor for LinearModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        dot(&self.coefficients, x) + self.intercept
    }
}

const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;

/// Fit `y ~ X beta + b`.
///
/// * ols minimizes `sum (y - X beta - b)^2` (Householder QR),
/// * ridge adds `lambda * |beta|^2` (Cholesky on the centered normal equations),
/// * lasso adds `lambda * |beta|_1` (cyclic coordinate descent until no
///   coefficient moves by more than 1e-8 in a sweep).
pub fn fit_linear(
    x: &Matrix,
    y: &[f64],
    family: LinearFamily,
    lambda: f64,
) -> Result<LinearModel, FitError> {
    check_xy(x, y)?;
    if !(lambda >= 0.0) {
        return Err(FitError::InvalidHyperparameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    match family {
        LinearFamily::Ols => fit_ols(x, y),
        LinearFamily::Ridge => fit_ridge(x, y, lambda),
        LinearFamily::Lasso => fit_lasso(x, y, lambda),
    }
}

fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearModel, FitError> {
    let (n, d) = (x.rows(), x.cols());
    if n <= d {
        return Err(FitError::Singular(format!(
            "{n} rows for {d} features; least squares needs more rows than features"
        )));
    }
    let mut data = Vec::with_capacity(n * (d + 1));
    for r in x.row_iter() {
        data.extend_from_slice(r);
        data.push(1.0);
    }
    let design = Matrix::from_vec(n, d + 1, data);
    let solution = lstsq_qr(&design, y).ok_or_else(|| {
        FitError::Singular("normal equations are singular; use ridge instead".into())
    })?;
    Ok(LinearModel {
        intercept: solution[d],
        coefficients: solution[..d].to_vec(),
    })
}

struct Centered {
    x: Matrix,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &Matrix, y: &[f64]) -> Centered {
    let (n, d) = (x.rows(), x.cols());
    let mut x_mean = vec![0.0; d];
    for r in x.row_iter() {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for i in 0..n {
        for (v, m) in xc.row_mut(i).iter_mut().zip(&x_mean) {
            *v -= m;
        }
    }
    Centered {
        x: xc,
        y: y.iter().map(|v| v - y_mean).collect(),
        x_mean,
        y_mean,
    }
}

fn finish(c: &Centered, beta: Vec<f64>) -> LinearModel {
    LinearModel {
        intercept: c.y_mean - dot(&beta, &c.x_mean),
        coefficients: beta,
    }
}

fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel, FitError> {
    let c = center(x, y);
    let d = x.cols();
    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    for (r, yi) in c.x.row_iter().zip(&c.y) {
        for a in 0..d {
            rhs[a] += r[a] * yi;
            for b in 0..=a {
                let v = gram.get(a, b) + r[a] * r[b];
                gram.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram.set(b, a, gram.get(a, b));
        }
        gram.set(a, a, gram.get(a, a) + lambda);
    }
    let beta = solve_spd(&gram, &rhs)
        .ok_or_else(|| FitError::Singular("ridge system is singular; increase lambda".into()))?;
    Ok(finish(&c, beta))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel, FitError> {
    let c = center(x, y);
    let (n, d) = (x.rows(), x.cols());
    let cols: Vec<Vec<f64>> = (0..d).map(|j| c.x.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|col| dot(col, col)).collect();
    let mut beta = vec![0.0; d];
    let mut resid = c.y.clone();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            // rho = x_j . (r + x_j beta_j)
            let rho = dot(&cols[j], &resid) + norms[j] * old;
            // d/d beta_j of sum r^2 + lambda |beta_j| gives a threshold of lambda/2.
            let new = soft_threshold(rho, lambda / 2.0) / norms[j];
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    resid[i] -= delta * cols[j][i];
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            return Ok(finish(&c, beta));
        }
    }
    Err(FitError::NotConverged(format!(
        "lasso coordinate descent did not settle within {LASSO_MAX_SWEEPS} sweeps"
    )))
}
