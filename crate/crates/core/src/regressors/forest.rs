//! Random forest of CART trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, RegressionTree, TreeParams};
use super::{FitError, Regressor};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Fraction of features examined at each split, rounded up. Features
    /// that are constant within the node do not count towards it.
    pub feat_frac: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feat_frac: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl Regressor for RandomForest {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Each tree gets its own RNG stream derived from the seed and the tree
/// index, so results do not depend on scheduling.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<RandomForest, FitError> {
    super::check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(FitError::InvalidHyperparameter(
            "n_trees must be >= 1".into(),
        ));
    }
    if !(params.feat_frac > 0.0 && params.feat_frac <= 1.0) {
        return Err(FitError::InvalidHyperparameter(format!(
            "feat_frac must be in (0, 1], got {}",
            params.feat_frac
        )));
    }
    let n = x.rows();
    let d = x.cols();
    let max_features = ((params.feat_frac * d as f64).ceil() as usize).clamp(1, d.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(max_features),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build_tree(x, y, &rows, tree_params, &mut rng)
        })
        .collect();
    Ok(RandomForest { trees })
}
