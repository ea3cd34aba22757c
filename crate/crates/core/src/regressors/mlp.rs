//! Multilayer perceptron: ReLU hidden layers, linear output, squared error,
//! Adam on shuffled mini-batches with early stopping.
//!
//! Targets are standardized internally; the network output is mapped back
//! with the stored mean and scale.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, FitError, Regressor};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![5],
            max_epochs: 1000,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 20,
            seed: 0,
        }
    }
}

/// Dense layer, `weights` row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub epochs_run: usize,
}

impl Regressor for Mlp {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.forward(x) * self.y_scale + self.y_mean
    }
}

/// Per-layer gradients, same shapes as the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(n_in: usize, hidden: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![n_in];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let limit = (6.0 / (a + b) as f64).sqrt();
                Layer {
                    n_in: a,
                    n_out: b,
                    weights: (0..a * b)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; b],
                }
            })
            .collect();
        Mlp {
            layers,
            y_mean: 0.0,
            y_scale: 1.0,
            epochs_run: 0,
        }
    }

    /// Raw network output (standardized target space).
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            a = affine(layer, &a);
            if li < last {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a[0]
    }

    /// `1/(2m) sum (out - t)^2` over the given rows, and its gradient.
    pub fn loss_and_gradient(&self, x: &Matrix, rows: &[usize], t: &[f64]) -> (f64, Gradient) {
        let mut grad = Gradient {
            weights: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        };
        let m = rows.len() as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for &r in rows {
            acts.clear();
            acts.push(x.row(r).to_vec());
            for (li, layer) in self.layers.iter().enumerate() {
                let mut z = affine(layer, acts.last().unwrap());
                if li < last {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(z);
            }
            let err = acts[last + 1][0] - t[r];
            loss += 0.5 * err * err;
            let mut delta = vec![err / m];
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let gw = &mut grad.weights[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grad.bias[li][o] += d;
                    let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if li == 0 {
                    break;
                }
                // Back through the weights and the ReLU of the layer below.
                let mut next = vec![0.0; layer.n_in];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, a) in next.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        (loss / m, grad)
    }

    fn mean_loss(&self, x: &Matrix, t: &[f64]) -> f64 {
        let n = x.rows();
        x.row_iter()
            .zip(t)
            .map(|(r, ti)| {
                let e = self.forward(r) - ti;
                0.5 * e * e
            })
            .sum::<f64>()
            / n as f64
    }
}

fn affine(layer: &Layer, input: &[f64]) -> Vec<f64> {
    (0..layer.n_out)
        .map(|o| {
            let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
            layer.bias[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
        })
        .collect()
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &Mlp) -> Adam {
        let shapes: Vec<usize> = model
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Adam {
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Mlp, grad: &Gradient, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let params = model
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias]);
        let grads = grad
            .weights
            .iter()
            .zip(&grad.bias)
            .flat_map(|(w, b)| [w, b]);
        for (k, (p, g)) in params.zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Train on `(x, y)`. Early stopping watches the dev loss when a dev set is
/// given and the training loss otherwise; the best weights are kept.
pub fn fit_mlp(
    x: &Matrix,
    y: &[f64],
    dev: Option<(&Matrix, &[f64])>,
    params: &MlpParams,
) -> Result<Mlp, FitError> {
    check_xy(x, y)?;
    if params.hidden.is_empty() || params.hidden.contains(&0) {
        return Err(FitError::InvalidHyperparameter(
            "hidden layout must be non-empty with positive widths".into(),
        ));
    }
    if params.max_epochs == 0 {
        return Err(FitError::InvalidHyperparameter(
            "max_epochs must be >= 1".into(),
        ));
    }
    if params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(FitError::InvalidHyperparameter(
            "batch_size and learning_rate must be positive".into(),
        ));
    }
    if let Some((dx, dy)) = dev {
        if dx.cols() != x.cols() || dx.rows() != dy.len() {
            return Err(FitError::Shape(
                "dev set shape does not match training set".into(),
            ));
        }
    }
    let n = x.rows();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let y_scale = if sd > 0.0 { sd } else { 1.0 };
    let t: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let dev_t: Option<(&Matrix, Vec<f64>)> =
        dev.map(|(dx, dy)| (dx, dy.iter().map(|v| (v - y_mean) / y_scale).collect()));

    let mut model = Mlp::init(x.cols(), &params.hidden, params.seed);
    model.y_mean = y_mean;
    model.y_scale = y_scale;
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=params.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let (_, grad) = model.loss_and_gradient(x, batch, &t);
            adam.step(&mut model, &grad, params.learning_rate);
        }
        model.epochs_run = epoch;
        let watched = match &dev_t {
            Some((dx, dt)) => model.mean_loss(dx, dt),
            None => model.mean_loss(x, &t),
        };
        if !watched.is_finite() {
            return Err(FitError::Diverged(format!(
                "loss became {watched} at epoch {epoch}; try a smaller learning rate"
            )));
        }
        if watched < best_loss {
            best_loss = watched;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                log::debug!("mlp early stop at epoch {epoch}");
                break;
            }
        }
    }
    best.epochs_run = model.epochs_run;
    Ok(best)
}
