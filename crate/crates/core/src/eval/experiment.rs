//! Train on the train split, evaluate on the test split.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mse, pearson, r_squared};
use super::EvalError;
use crate::corpus::{Corpus, Split};
use crate::features::{extract_table, FeatureSchema, FeatureSet, FeatureTable};
use crate::regressors::{train_model, ModelSpec, TargetKind, TrainedModel};

/// One point of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub spec: ModelSpec,
    pub feature_set: FeatureSet,
    pub target: TargetKind,
    pub prefix_k: Option<usize>,
}

impl ExperimentCell {
    pub fn describe(&self) -> String {
        format!(
            "{} / {} features / {} target / prefix {}",
            self.spec.label(),
            self.feature_set,
            self.target,
            self.prefix_k.map_or("all".to_string(), |k| k.to_string())
        )
    }
}

/// Test-split metrics of one fitted model. `pearson_r` and `p_value` are
/// absent when the predictions are constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub target: String,
    pub feature_set: FeatureSet,
    pub prefix_k: Option<usize>,
    pub n: usize,
    pub mse: f64,
    pub r2: f64,
    pub pearson_r: Option<f64>,
    pub p_value: Option<f64>,
}

/// Feature tables of the three splits, in corpus order within each split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTables {
    pub train: FeatureTable,
    pub dev: FeatureTable,
    pub test: FeatureTable,
}

impl SplitTables {
    pub fn build(
        corpus: &Corpus,
        schema: &FeatureSchema,
        set: FeatureSet,
        prefix_k: Option<usize>,
    ) -> Result<SplitTables, EvalError> {
        let table = extract_table(corpus, schema, set, prefix_k)?;
        SplitTables::partition(&table, corpus)
    }

    /// Partition a full-corpus table by the corpus split assignment.
    pub fn partition(table: &FeatureTable, corpus: &Corpus) -> Result<SplitTables, EvalError> {
        SplitTables::partition_by(table, |id| corpus.split_of(id))
    }

    /// Partition with an explicit id-to-split lookup, e.g. a splits file.
    pub fn partition_by(
        table: &FeatureTable,
        split_of: impl Fn(&str) -> Option<Split>,
    ) -> Result<SplitTables, EvalError> {
        let mut idx: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
        for (i, id) in table.ids.iter().enumerate() {
            let split = split_of(id).ok_or_else(|| {
                EvalError::Corpus(format!("conversation {id:?} has no split assignment"))
            })?;
            idx.entry(split).or_default().push(i);
        }
        let part = |s: Split| table.subset(idx.get(&s).map_or(&[][..], |v| v.as_slice()));
        Ok(SplitTables {
            train: part(Split::Train),
            dev: part(Split::Dev),
            test: part(Split::Test),
        })
    }

    pub fn drop_features(&self, names: &[String]) -> Result<SplitTables, EvalError> {
        Ok(SplitTables {
            train: self.train.drop_features(names)?,
            dev: self.dev.drop_features(names)?,
            test: self.test.drop_features(names)?,
        })
    }
}

/// Rows usable for `kind` (rated rows only for rating) and their targets.
pub fn table_targets(
    table: &FeatureTable,
    kind: &TargetKind,
) -> Result<(FeatureTable, Vec<f64>), EvalError> {
    let keep: Vec<usize> = (0..table.len())
        .filter(|&i| !kind.is_rating() || table.rating[i].is_some())
        .collect();
    let sub = table.subset(&keep);
    let y = (0..sub.len())
        .map(|i| kind.value(sub.rating[i], sub.capped_length[i]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EvalError::Fit {
            cell: "targets".into(),
            source: e,
        })?;
    Ok((sub, y))
}

/// Metrics of `pred` against `truth`, labelled for the report.
pub fn evaluate_predictions(
    label: &str,
    target: &TargetKind,
    feature_set: FeatureSet,
    prefix_k: Option<usize>,
    pred: &[f64],
    truth: &[f64],
) -> Result<EvalReport, EvalError> {
    let corr = match pearson(pred, truth) {
        Ok(p) => Some(p),
        Err(EvalError::Constant(_)) => {
            log::warn!("{label}: constant predictions; correlation undefined");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        model: label.to_string(),
        target: target.name().to_string(),
        feature_set,
        prefix_k,
        n: pred.len(),
        mse: mse(pred, truth)?,
        r2: r_squared(pred, truth)?,
        pearson_r: corr.map(|c| c.r),
        p_value: corr.map(|c| c.p),
    })
}

/// Fit on train (dev for early stopping) and score on test.
pub fn fit_and_evaluate(
    spec: &ModelSpec,
    target: TargetKind,
    tables: &SplitTables,
) -> Result<(TrainedModel, EvalReport), EvalError> {
    let context = |e| EvalError::Fit {
        cell: format!("{} / {target}", spec.label()),
        source: e,
    };
    let target = target
        .fitted(&tables.train.capped_length)
        .map_err(context)?;
    let (train, y_train) = table_targets(&tables.train, &target)?;
    let (dev, y_dev) = table_targets(&tables.dev, &target)?;
    let (test, y_test) = table_targets(&tables.test, &target)?;
    let dev_arg = if dev.is_empty() {
        None
    } else {
        Some((&dev, y_dev.as_slice()))
    };
    let model = train_model(spec, target, &train, &y_train, dev_arg).map_err(context)?;
    let pred = model.predict_table(&test).map_err(context)?;
    let report = evaluate_predictions(
        &spec.label(),
        &target,
        train.feature_set,
        train.prefix_k,
        &pred,
        &y_test,
    )?;
    Ok((model, report))
}

/// Run every cell, reusing featurization across cells that share a feature
/// set and prefix. Cells run in parallel; reports come back in grid order.
/// `seed` replaces the seed of every seeded model family.
pub fn run_experiment(
    corpus: &Corpus,
    grid: &[ExperimentCell],
    seed: u64,
) -> Result<Vec<EvalReport>, EvalError> {
    let schema = FeatureSchema::for_corpus(corpus);
    let mut tables: BTreeMap<(FeatureSet, Option<usize>), SplitTables> = BTreeMap::new();
    for cell in grid {
        let key = (cell.feature_set, cell.prefix_k);
        if let std::collections::btree_map::Entry::Vacant(slot) = tables.entry(key) {
            slot.insert(SplitTables::build(corpus, &schema, key.0, key.1)?);
        }
    }
    grid.par_iter()
        .map(|cell| {
            let t = &tables[&(cell.feature_set, cell.prefix_k)];
            fit_and_evaluate(&cell.spec.with_seed(seed), cell.target, t)
                .map(|(_, r)| r)
                .map_err(|e| e.in_cell(cell))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub ablated: Vec<String>,
    pub base: EvalReport,
    pub report: EvalReport,
}

impl AblationResult {
    pub fn delta_r2(&self) -> f64 {
        self.report.r2 - self.base.r2
    }
}

/// Refit `cell` without the named features and compare with the full model.
pub fn ablate(
    corpus: &Corpus,
    cell: &ExperimentCell,
    features: &[String],
    seed: u64,
) -> Result<AblationResult, EvalError> {
    let schema = FeatureSchema::for_corpus(corpus);
    let tables = SplitTables::build(corpus, &schema, cell.feature_set, cell.prefix_k)?;
    ablate_tables(&tables, cell, features, seed)
}

pub fn ablate_tables(
    tables: &SplitTables,
    cell: &ExperimentCell,
    features: &[String],
    seed: u64,
) -> Result<AblationResult, EvalError> {
    let reduced = tables.drop_features(features)?;
    let spec = cell.spec.with_seed(seed);
    let (_, base) = fit_and_evaluate(&spec, cell.target, tables).map_err(|e| e.in_cell(cell))?;
    let (model, report) =
        fit_and_evaluate(&spec, cell.target, &reduced).map_err(|e| e.in_cell(cell))?;
    debug_assert!(features.iter().all(|f| !model.feature_names.contains(f)));
    Ok(AblationResult {
        ablated: features.to_vec(),
        base,
        report,
    })
}
