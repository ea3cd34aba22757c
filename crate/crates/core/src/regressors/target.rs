//! Prediction targets derived from conversations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FitError;
use crate::corpus::Conversation;

pub const BIN_WIDTH: usize = 10;
pub const MAX_BIN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    Rating,
    CappedLength,
    /// 1 when the capped length reaches the train median, else 0.
    MedianSplit {
        median: Option<f64>,
    },
    /// `min(capped_length / 10, 7)`.
    BinnedLength,
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Rating => "rating",
            TargetKind::CappedLength => "length",
            TargetKind::MedianSplit { .. } => "median-split",
            TargetKind::BinnedLength => "binned",
        }
    }

    pub fn is_rating(&self) -> bool {
        matches!(self, TargetKind::Rating)
    }

    /// Freeze the median-split threshold from the capped lengths of the
    /// training split. Other kinds are returned unchanged.
    pub fn fitted(self, train_capped_lengths: &[usize]) -> Result<Self, FitError> {
        match self {
            TargetKind::MedianSplit { median: None } => {
                let lengths: Vec<f64> = train_capped_lengths.iter().map(|&l| l as f64).collect();
                let median = crate::stats::median(&lengths).ok_or_else(|| {
                    FitError::Target("median split needs training conversations".into())
                })?;
                Ok(TargetKind::MedianSplit {
                    median: Some(median),
                })
            }
            other => Ok(other),
        }
    }

    /// Target value from a rating and a capped length.
    pub fn value(&self, rating: Option<u8>, capped_length: usize) -> Result<f64, FitError> {
        match self {
            TargetKind::Rating => rating.map(f64::from).ok_or_else(|| {
                FitError::Target("rating target requires rated conversations".into())
            }),
            TargetKind::CappedLength => Ok(capped_length as f64),
            TargetKind::MedianSplit { median: Some(m) } => {
                Ok(if capped_length as f64 >= *m { 1.0 } else { 0.0 })
            }
            TargetKind::MedianSplit { median: None } => Err(FitError::Target(
                "median split threshold has not been fitted on the train split".into(),
            )),
            TargetKind::BinnedLength => Ok((capped_length / BIN_WIDTH).min(MAX_BIN) as f64),
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rating" => Ok(TargetKind::Rating),
            "length" | "capped_length" | "capped-length" => Ok(TargetKind::CappedLength),
            "median-split" | "median_split" => Ok(TargetKind::MedianSplit { median: None }),
            "binned" | "binned_length" | "binned-length" => Ok(TargetKind::BinnedLength),
            other => Err(format!(
                "unknown target {other:?}; expected rating, length, median-split or binned"
            )),
        }
    }
}

pub fn make_targets<'a>(
    conversations: impl IntoIterator<Item = &'a Conversation>,
    kind: &TargetKind,
) -> Result<Vec<f64>, FitError> {
    conversations
        .into_iter()
        .map(|c| {
            kind.value(c.rating, c.capped_length())
                .map_err(|e| FitError::Target(format!("conversation {}: {e}", c.id)))
        })
        .collect()
}
