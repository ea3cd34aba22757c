//! Metrics, the experiment and ablation harness, metric correlations and
//! tree export.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod tree_export;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::features::FeatureError;
use crate::regressors::FitError;
use crate::tagging::{SDA_COMPLAINT, SDA_COMPLIMENT};

pub use experiment::{
    ablate, ablate_tables, evaluate_predictions, fit_and_evaluate, run_experiment, table_targets,
    AblationResult, EvalReport, ExperimentCell, SplitTables,
};
pub use metrics::{mse, pearson, r_squared, Pearson};
pub use tree_export::{export_nodes, tree_of, tree_to_dot, tree_to_text};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("{0} is constant")]
    Constant(String),
    #[error("need at least {min} values, got {n}")]
    TooFew { n: usize, min: usize },
    #[error("{cell}: {source}")]
    Fit {
        cell: String,
        #[source]
        source: FitError,
    },
    #[error("in cell [{cell}]: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("{0}")]
    NotATree(String),
}

impl EvalError {
    pub fn in_cell(self, cell: &ExperimentCell) -> EvalError {
        EvalError::Cell {
            cell: cell.describe(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub a: String,
    pub b: String,
    pub stats: Pearson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pairs: Vec<MetricPair>,
}

impl CorrelationReport {
    /// Lookup in either order.
    pub fn get(&self, a: &str, b: &str) -> Option<&Pearson> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| &p.stats)
    }
}

pub const METRIC_PAIRS: [(&str, &str); 5] = [
    ("rating", "length"),
    ("rating", "compliments"),
    ("rating", "complaints"),
    ("length", "compliments"),
    ("length", "complaints"),
];

/// Per-conversation rating, capped length, and the fraction of exchanges
/// tagged as compliment and as complaint, correlated pairwise.
pub fn correlate_metrics(corpus: &Corpus) -> Result<CorrelationReport, EvalError> {
    let mut series: [Vec<f64>; 4] = Default::default();
    for c in &corpus.conversations {
        let rating = c
            .rating
            .ok_or_else(|| EvalError::Corpus(format!("conversation {:?} is unrated", c.id)))?;
        let n = c.raw_length().max(1) as f64;
        let count = |label: &str| {
            c.exchanges
                .iter()
                .filter(|e| e.sda_tags.contains(label))
                .count() as f64
        };
        series[0].push(f64::from(rating));
        series[1].push(c.capped_length() as f64);
        series[2].push(count(SDA_COMPLIMENT) / n);
        series[3].push(count(SDA_COMPLAINT) / n);
    }
    let idx = |name: &str| {
        ["rating", "length", "compliments", "complaints"]
            .iter()
            .position(|&m| m == name)
            .unwrap()
    };
    let pairs = METRIC_PAIRS
        .iter()
        .map(|&(a, b)| {
            let stats = pearson(&series[idx(a)], &series[idx(b)]).map_err(|e| match e {
                EvalError::Constant(_) => EvalError::Constant(format!("{a}/{b}: a metric")),
                e => e,
            })?;
            Ok(MetricPair {
                a: a.into(),
                b: b.into(),
                stats,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(CorrelationReport {
        n: corpus.len(),
        pairs,
    })
}
