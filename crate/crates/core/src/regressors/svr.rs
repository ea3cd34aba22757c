//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is written over `2n` variables `[alpha; alpha*]` with signs
//! `y = [+1; -1]` and linear term `p = [eps - z; eps + z]`:
//!
//! ```text
//! min 1/2 b'Qb + p'b   s.t.  y'b = 0,  0 <= b <= C,   Q_ij = y_i y_j K(i, j)
//! ```
//!
//! and solved by SMO with second-order working set selection. The solver
//! stops once the maximal KKT violation `m(b) - M(b)` drops below `tol`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{check_xy, FitError, Regressor};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / (d * mean per-feature variance)`.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Matrix,
    /// `alpha_i - alpha*_i` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub gamma: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub gap: f64,
}

impl Regressor for SvrModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let xx = dot(x, x);
        self.support_vectors
            .row_iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(self.gamma, sv, dot(sv, sv), x, xx))
            .sum::<f64>()
            + self.bias
    }
}

fn rbf(gamma: f64, a: &[f64], aa: f64, b: &[f64], bb: f64) -> f64 {
    let d2 = (aa + bb - 2.0 * dot(a, b)).max(0.0);
    (-gamma * d2).exp()
}

pub fn resolve_gamma(gamma: Gamma, x: &Matrix) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => {
            let d = x.cols();
            let mean_var = (0..d)
                .map(|j| crate::stats::population_variance(&x.column(j)))
                .sum::<f64>()
                / d as f64;
            if mean_var > 0.0 && d > 0 {
                1.0 / (d as f64 * mean_var)
            } else {
                1.0
            }
        }
    }
}

/// Kernel rows computed on demand, with FIFO eviction.
struct KernelCache<'a> {
    x: &'a Matrix,
    sq_norms: Vec<f64>,
    gamma: f64,
    rows: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Matrix, gamma: f64) -> Self {
        let n = x.rows();
        // Roughly 256 MB of cached rows.
        let capacity = ((256usize << 20) / (8 * n.max(1))).max(2);
        KernelCache {
            x,
            sq_norms: x.row_iter().map(|r| dot(r, r)).collect(),
            gamma,
            rows: HashMap::new(),
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let xi = self.x.row(i);
            let ii = self.sq_norms[i];
            let row = (0..self.x.rows())
                .map(|j| rbf(self.gamma, xi, ii, self.x.row(j), self.sq_norms[j]))
                .collect();
            self.rows.insert(i, row);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

const TAU: f64 = 1e-12;

pub fn fit_svr(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<SvrModel, FitError> {
    check_xy(x, y)?;
    if !(params.c > 0.0) {
        return Err(FitError::InvalidHyperparameter(format!(
            "C must be > 0, got {}",
            params.c
        )));
    }
    if !(params.epsilon >= 0.0) {
        return Err(FitError::InvalidHyperparameter(format!(
            "epsilon must be >= 0, got {}",
            params.epsilon
        )));
    }
    let n = x.rows();
    let l = 2 * n;
    let c = params.c;
    let gamma = resolve_gamma(params.gamma, x);
    let mut cache = KernelCache::new(x, gamma);

    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let base = |t: usize| if t < n { t } else { t - n };
    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let gap;
    loop {
        // Working set selection, second order (Fan, Chen and Lin).
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let v = if sign(t) > 0.0 {
                if is_upper(alpha[t]) {
                    continue;
                }
                -grad[t]
            } else {
                if is_lower(alpha[t]) {
                    continue;
                }
                grad[t]
            };
            if v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let yi = sign(i_sel);
            let ki = cache.row(base(i_sel)).to_vec();
            for t in 0..l {
                let yt = sign(t);
                let k_it = ki[base(t)];
                // Q_ii = Q_tt = 1 for the RBF kernel.
                let (grad_diff, candidate) = if yt > 0.0 {
                    if is_lower(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(grad[t]);
                    (gmax + grad[t], 2.0 - 2.0 * yi * yt * k_it)
                } else {
                    if is_upper(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(-grad[t]);
                    (gmax - grad[t], 2.0 - 2.0 * yi * yt * k_it)
                };
                if grad_diff > 0.0 {
                    let quad = if candidate > 0.0 { candidate } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax + gmax2 < params.tol || j_sel == usize::MAX {
            gap = (gmax + gmax2).max(0.0);
            break;
        }
        if iterations >= params.max_iter {
            return Err(FitError::NotConverged(format!(
                "SVR did not converge in {} iterations; final duality gap {:.3e}",
                iterations,
                gmax + gmax2
            )));
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (yi, yj) = (sign(i), sign(j));
        let k_ij = cache.row(base(i))[base(j)];
        let q_ij = yi * yj * k_ij;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = (2.0 + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let ki = cache.row(base(i)).to_vec();
        let kj = cache.row(base(j));
        for t in 0..l {
            let yt = sign(t);
            let bt = base(t);
            grad[t] += yt * (yi * ki[bt] * di + yj * kj[bt] * dj);
        }
    }

    // Offset from the free variables, or the midpoint of the feasible
    // interval when none are free.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if is_upper(alpha[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        0.5 * (ub + lb)
    };

    let mut support_indices = Vec::new();
    let mut dual_coef = Vec::new();
    for i in 0..n {
        let coef = alpha[i] - alpha[i + n];
        if coef != 0.0 {
            support_indices.push(i);
            dual_coef.push(coef);
        }
    }
    Ok(SvrModel {
        support_vectors: x.select_rows(&support_indices),
        dual_coef,
        support_indices,
        bias: -rho,
        gamma,
        iterations,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::linear::{fit_linear, LinearFamily};

    fn sine(n: usize) -> (Matrix, Vec<f64>) {
        let xs: Vec<[f64; 1]> = (0..n)
            .map(|i| [i as f64 / (n - 1) as f64 * 6.0 - 3.0])
            .collect();
        let y = xs.iter().map(|r| r[0].sin()).collect();
        (Matrix::from_rows(&xs), y)
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, -1.0]]);
        let y = [2.5; 4];
        for c in [0.1, 10.0] {
            let m = fit_svr(
                &x,
                &y,
                &SvrParams {
                    c,
                    ..Default::default()
                },
            )
            .unwrap();
            for r in x.row_iter() {
                assert!((m.predict_row(r) - 2.5).abs() <= 0.1 + 1e-9);
            }
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let (x, y) = sine(40);
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.05,
            ..Default::default()
        };
        let m = fit_svr(&x, &y, &params).unwrap();
        assert!(m.gap < params.tol);
        let coef_of = |i: usize| {
            m.support_indices
                .iter()
                .position(|&s| s == i)
                .map_or(0.0, |p| m.dual_coef[p])
        };
        let tol = params.tol;
        for i in 0..x.rows() {
            let coef = coef_of(i);
            assert!(coef.abs() <= params.c + 1e-12);
            let resid = m.predict_row(x.row(i)) - y[i];
            if coef == 0.0 {
                assert!(resid.abs() <= params.epsilon + tol, "i={i} resid={resid}");
            } else if coef.abs() < params.c {
                // free: on the tube boundary
                let boundary = if coef > 0.0 {
                    -params.epsilon
                } else {
                    params.epsilon
                };
                assert!((resid - boundary).abs() <= tol, "i={i} resid={resid}");
            } else {
                assert!(resid.abs() >= params.epsilon - tol, "i={i} resid={resid}");
            }
        }
        let eq: f64 = m.dual_coef.iter().sum();
        assert!(eq.abs() < 1e-9);
    }

    #[test]
    fn beats_linear_fit_on_sine() {
        let (x, y) = sine(30);
        let svr = fit_svr(
            &x,
            &y,
            &SvrParams {
                c: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let lin = fit_linear(&x, &y, LinearFamily::Ols, 0.0).unwrap();
        let mse = |p: Vec<f64>| p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 30.0;
        assert!(mse(svr.predict(&x)) < mse(lin.predict(&x)));
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let (x, y) = sine(30);
        let err = fit_svr(
            &x,
            &y,
            &SvrParams {
                c: 10.0,
                max_iter: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("duality gap"));
    }

    #[test]
    fn gamma_scale_uses_mean_feature_variance() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 4.0]]);
        // variances 1 and 4 -> mean 2.5, d = 2
        assert!((resolve_gamma(Gamma::Scale, &x) - 1.0 / 5.0).abs() < 1e-15);
        assert_eq!(resolve_gamma(Gamma::Value(0.3), &x), 0.3);
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = sine(5);
        assert!(fit_svr(
            &x,
            &y,
            &SvrParams {
                c: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_svr(
            &x,
            &y,
            &SvrParams {
                epsilon: -1.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
