//! Performance modeling for open-domain dialogue.
//!
//! The pipeline ingests conversation logs ([`corpus`]), tags social dialogue
//! acts ([`tagging`]), turns each conversation into length-neutral features
//! ([`features`]), and fits a suite of regressors ([`regressors`]) that
//! predict user rating or conversation length. [`eval`] holds the metrics,
//! the experiment and ablation harness and tree export; [`topicscore`]
//! ranks topics; [`synth`] generates corpora with planted structure.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod regressors;
pub mod stats;
pub mod synth;
pub mod tagging;
pub mod topicscore;
