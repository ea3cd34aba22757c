//! Regression models and the serialized model artifact.
//!
//! Every family implements [`Regressor`]. [`train_model`] wraps a fit with
//! the feature schema and (for non-tree families) a train-split
//! [`Standardizer`], producing a [`TrainedModel`] that refuses feature vectors
//! from any other schema.

pub mod forest;
pub mod linear;
pub mod mlp;
pub mod svr;
pub mod target;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    fingerprint, FeatureError, FeatureSet, FeatureTable, FeatureVector, Standardizer,
};
use crate::linalg::Matrix;

pub use forest::{fit_forest, ForestParams, RandomForest};
pub use linear::{fit_linear, LinearFamily, LinearModel};
pub use mlp::{fit_mlp, Mlp, MlpParams};
pub use svr::{fit_svr, Gamma, SvrModel, SvrParams};
pub use target::{make_targets, TargetKind};
pub use tree::{fit_tree, RegressionTree};

/// Serialized model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("target: {0}")]
    Target(String),
    #[error("feature schema fingerprint mismatch: model expects {expected}, got {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub trait Regressor {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Non-empty, consistent shapes, finite values.
pub fn check_xy(x: &Matrix, y: &[f64]) -> Result<(), FitError> {
    if x.rows() == 0 {
        return Err(FitError::Shape("no training rows".into()));
    }
    if x.rows() != y.len() {
        return Err(FitError::Shape(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::Shape("non-finite value in training data".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ols,
    Ridge,
    Lasso,
    Tree,
    Forest,
    Svr,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Ols,
        Family::Ridge,
        Family::Lasso,
        Family::Tree,
        Family::Forest,
        Family::Svr,
        Family::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::Ridge => "ridge",
            Family::Lasso => "lasso",
            Family::Tree => "tree",
            Family::Forest => "forest",
            Family::Svr => "svr",
            Family::Mlp => "mlp",
        }
    }

    /// Per-target defaults: rating models are kept small (depth 5, C = 0.1,
    /// one hidden layer of 5), length models large (unbounded depth, C = 10,
    /// hidden layers 100 and 50).
    pub fn default_spec(self, target: &TargetKind, seed: u64) -> ModelSpec {
        let rating = target.is_rating();
        match self {
            Family::Ols => ModelSpec::Ols,
            Family::Ridge => ModelSpec::Ridge { lambda: 1.0 },
            Family::Lasso => ModelSpec::Lasso { lambda: 1.0 },
            Family::Tree => ModelSpec::Tree {
                max_depth: if rating { Some(5) } else { None },
                min_leaf: 1,
            },
            Family::Forest => ModelSpec::Forest(ForestParams {
                max_depth: if rating { Some(5) } else { None },
                seed,
                ..ForestParams::default()
            }),
            Family::Svr => ModelSpec::Svr(SvrParams {
                c: if rating { 0.1 } else { 10.0 },
                ..SvrParams::default()
            }),
            Family::Mlp => ModelSpec::Mlp(MlpParams {
                hidden: if rating { vec![5] } else { vec![100, 50] },
                seed,
                ..MlpParams::default()
            }),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown model family {s:?}; expected one of ols, ridge, lasso, tree, forest, svr, mlp"))
    }
}

/// A family together with all of its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Ols,
    Ridge {
        lambda: f64,
    },
    Lasso {
        lambda: f64,
    },
    Tree {
        max_depth: Option<usize>,
        min_leaf: usize,
    },
    Forest(ForestParams),
    Svr(SvrParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Ols => Family::Ols,
            ModelSpec::Ridge { .. } => Family::Ridge,
            ModelSpec::Lasso { .. } => Family::Lasso,
            ModelSpec::Tree { .. } => Family::Tree,
            ModelSpec::Forest(_) => Family::Forest,
            ModelSpec::Svr(_) => Family::Svr,
            ModelSpec::Mlp(_) => Family::Mlp,
        }
    }

    /// Short display label, e.g. `tree(depth=5)`.
    pub fn label(&self) -> String {
        let depth = |d: &Option<usize>| d.map_or("none".to_string(), |d| d.to_string());
        match self {
            ModelSpec::Ols => "ols".into(),
            ModelSpec::Ridge { lambda } => format!("ridge(lambda={lambda})"),
            ModelSpec::Lasso { lambda } => format!("lasso(lambda={lambda})"),
            ModelSpec::Tree { max_depth, .. } => format!("tree(depth={})", depth(max_depth)),
            ModelSpec::Forest(p) => {
                format!("forest(trees={},depth={})", p.n_trees, depth(&p.max_depth))
            }
            ModelSpec::Svr(p) => format!("svr(C={})", p.c),
            ModelSpec::Mlp(p) => format!(
                "mlp({})",
                p.hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            ),
        }
    }

    /// Same spec with the seed of seeded families replaced.
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        match self {
            ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams { seed, ..*p }),
            ModelSpec::Mlp(p) => ModelSpec::Mlp(MlpParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }

    fn standardizes(&self) -> bool {
        !matches!(self, ModelSpec::Tree { .. } | ModelSpec::Forest(_))
    }

    /// Fit on `x`; `dev` is used only for early stopping.
    pub fn fit(
        &self,
        x: &Matrix,
        y: &[f64],
        dev: Option<(&Matrix, &[f64])>,
    ) -> Result<ModelParams, FitError> {
        Ok(match self {
            ModelSpec::Ols => ModelParams::Linear(fit_linear(x, y, LinearFamily::Ols, 0.0)?),
            ModelSpec::Ridge { lambda } => {
                ModelParams::Linear(fit_linear(x, y, LinearFamily::Ridge, *lambda)?)
            }
            ModelSpec::Lasso { lambda } => {
                ModelParams::Linear(fit_linear(x, y, LinearFamily::Lasso, *lambda)?)
            }
            ModelSpec::Tree {
                max_depth,
                min_leaf,
            } => {
                check_xy(x, y)?;
                ModelParams::Tree(fit_tree(x, y, *max_depth, *min_leaf))
            }
            ModelSpec::Forest(p) => ModelParams::Forest(fit_forest(x, y, p)?),
            ModelSpec::Svr(p) => ModelParams::Svr(fit_svr(x, y, p)?),
            ModelSpec::Mlp(p) => ModelParams::Mlp(fit_mlp(x, y, dev, p)?),
        })
    }
}

/// Learned state of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum ModelParams {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(RandomForest),
    Svr(SvrModel),
    Mlp(Mlp),
}

impl Regressor for ModelParams {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            ModelParams::Linear(m) => m.predict_row(x),
            ModelParams::Tree(m) => m.predict_row(x),
            ModelParams::Forest(m) => m.predict_row(x),
            ModelParams::Svr(m) => m.predict_row(x),
            ModelParams::Mlp(m) => m.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub target: TargetKind,
    pub feature_set: FeatureSet,
    pub prefix_k: Option<usize>,
    pub feature_names: Vec<String>,
    pub schema_fingerprint: String,
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
}

/// Fit `spec` on a training table. Targets must already be computed with a
/// fitted [`TargetKind`].
pub fn train_model(
    spec: &ModelSpec,
    target: TargetKind,
    train: &FeatureTable,
    y: &[f64],
    dev: Option<(&FeatureTable, &[f64])>,
) -> Result<TrainedModel, FitError> {
    let standardizer = if spec.standardizes() {
        Some(Standardizer::fit_matrix(&train.names, &train.x)?)
    } else {
        None
    };
    let prepare = |t: &FeatureTable| -> Result<Matrix, FitError> {
        Ok(match &standardizer {
            Some(s) => s.apply_matrix(&t.x)?,
            None => t.x.clone(),
        })
    };
    let x = prepare(train)?;
    let dev_x = match dev {
        Some((t, _)) => {
            if t.names != train.names {
                return Err(FitError::FingerprintMismatch {
                    expected: train.fingerprint(),
                    found: t.fingerprint(),
                });
            }
            Some(prepare(t)?)
        }
        None => None,
    };
    let params = spec.fit(&x, y, dev_x.as_ref().zip(dev.map(|(_, y)| y)))?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        target,
        feature_set: train.feature_set,
        prefix_k: train.prefix_k,
        feature_names: train.names.clone(),
        schema_fingerprint: train.fingerprint(),
        standardizer,
        params,
    })
}

impl TrainedModel {
    fn check_names(&self, names: &[String]) -> Result<(), FitError> {
        let found = fingerprint(names);
        if found != self.schema_fingerprint {
            return Err(FitError::FingerprintMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    fn predict_raw(&self, row: &[f64]) -> f64 {
        match &self.standardizer {
            Some(s) => self.params.predict_row(&s.apply_row(row)),
            None => self.params.predict_row(row),
        }
    }

    /// Unclamped prediction for one feature vector.
    pub fn predict(&self, v: &FeatureVector) -> Result<f64, FitError> {
        self.check_names(&v.names)?;
        Ok(self.predict_raw(&v.values))
    }

    pub fn predict_table(&self, t: &FeatureTable) -> Result<Vec<f64>, FitError> {
        self.check_names(&t.names)?;
        Ok(t.x.row_iter().map(|r| self.predict_raw(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<TrainedModel, FitError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| FitError::Format(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            None => return Err(FitError::Format("missing format_version".into())),
            Some(v) if v != u64::from(MODEL_FORMAT_VERSION) => {
                return Err(FitError::Format(format!(
                    "format_version {v} is not supported (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            Some(_) => {}
        }
        serde_json::from_value(value).map_err(|e| FitError::Format(e.to_string()))
    }
}
