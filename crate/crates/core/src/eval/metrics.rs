//! Regression metrics.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::stats;

/// Significance threshold marked with `**` in reports.
pub const SIGNIFICANCE: f64 = 0.01;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// `1 - SS_res / SS_tot`; negative when worse than predicting the mean.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    let m = stats::mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::Constant("truth".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    /// Two-tailed, from Student's t with `n - 2` degrees of freedom.
    pub p: f64,
    pub n: usize,
}

impl Pearson {
    pub fn significant(&self) -> bool {
        self.p <= SIGNIFICANCE
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Pearson, EvalError> {
    check_lengths(a, b)?;
    let n = a.len();
    if n < 3 {
        return Err(EvalError::TooFew { n, min: 3 });
    }
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(EvalError::Constant("first series".into()));
    }
    if sbb == 0.0 {
        return Err(EvalError::Constant("second series".into()));
    }
    let r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        stats::student_t_two_tailed(t, df)
    };
    Ok(Pearson { r, p, n })
}
