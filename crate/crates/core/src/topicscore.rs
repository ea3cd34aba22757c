//! Per-topic quality scores.
//!
//! Each (conversation, topic) pair contributes a score built from the
//! number of exchanges `n` spent on the topic, the rating `r` and the mean
//! user word count `w` on that topic:
//!
//! | variant | contribution   |
//! |---------|----------------|
//! | F1      | `n * r`        |
//! | F2      | `sqrt(n) * r`  |
//! | F3      | `sqrt(n) * r * w` |
//!
//! Contributions are summed per topic and the sums standardized across
//! topics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Conversation, Corpus};
use crate::features::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreVariant {
    F1,
    F2,
    F3,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 3] = [ScoreVariant::F1, ScoreVariant::F2, ScoreVariant::F3];
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScoreVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "F1" => Ok(ScoreVariant::F1),
            "F2" => Ok(ScoreVariant::F2),
            "F3" => Ok(ScoreVariant::F3),
            _ => Err(format!(
                "unknown scoring variant {s:?}; expected F1, F2 or F3"
            )),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopicScoreError {
    #[error("conversation {0:?} is unrated; filter unrated conversations first")]
    Unrated(String),
    #[error("need >= 2 topics to compute z-scores, found {0}")]
    TooFewTopics(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic: String,
    pub raw_sum: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScoreReport {
    pub variant: ScoreVariant,
    /// Sorted by topic name.
    pub scores: Vec<TopicScore>,
}

impl TopicScoreReport {
    /// Highest z first; ties broken by topic name.
    pub fn ranked(&self) -> Vec<&TopicScore> {
        let mut v: Vec<&TopicScore> = self.scores.iter().collect();
        v.sort_by(|a, b| b.z.total_cmp(&a.z).then_with(|| a.topic.cmp(&b.topic)));
        v
    }

    /// 1-based rank of `topic`.
    pub fn rank_of(&self, topic: &str) -> Option<usize> {
        self.ranked()
            .iter()
            .position(|s| s.topic == topic)
            .map(|p| p + 1)
    }

    pub fn z_of(&self, topic: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.topic == topic).map(|s| s.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicScoreOptions {
    /// Topics left out of the population.
    pub exclude: Vec<String>,
}

impl Default for TopicScoreOptions {
    fn default() -> Self {
        TopicScoreOptions {
            exclude: vec!["intro".to_string()],
        }
    }
}

pub fn score_topics(
    corpus: &Corpus,
    variant: ScoreVariant,
) -> Result<TopicScoreReport, TopicScoreError> {
    score_topics_with(corpus, variant, &TopicScoreOptions::default())
}

fn contributions<'a>(
    conv: &'a Conversation,
    variant: ScoreVariant,
    opts: &TopicScoreOptions,
) -> Result<BTreeMap<&'a str, f64>, TopicScoreError> {
    let r = f64::from(
        conv.rating
            .ok_or_else(|| TopicScoreError::Unrated(conv.id.clone()))?,
    );
    // topic -> (exchanges, word total over non-empty utterances, non-empty utterances)
    let mut per_topic: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for e in &conv.exchanges {
        if opts.exclude.contains(&e.topic) {
            continue;
        }
        let slot = per_topic.entry(e.topic.as_str()).or_default();
        slot.0 += 1;
        let w = word_count(&e.user_text);
        if w > 0 {
            slot.1 += w;
            slot.2 += 1;
        }
    }
    Ok(per_topic
        .into_iter()
        .map(|(t, (n, words, utts))| {
            let n = n as f64;
            let score = match variant {
                ScoreVariant::F1 => n * r,
                ScoreVariant::F2 => n.sqrt() * r,
                ScoreVariant::F3 => {
                    let w = if utts > 0 {
                        words as f64 / utts as f64
                    } else {
                        0.0
                    };
                    n.sqrt() * r * w
                }
            };
            (t, score)
        })
        .collect())
}

pub fn score_topics_with(
    corpus: &Corpus,
    variant: ScoreVariant,
    opts: &TopicScoreOptions,
) -> Result<TopicScoreReport, TopicScoreError> {
    let per_conv: Vec<BTreeMap<&str, f64>> = corpus
        .conversations
        .par_iter()
        .map(|c| contributions(c, variant, opts))
        .collect::<Result<_, _>>()?;
    // Sequential reduction in corpus order keeps sums bit-reproducible.
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for m in &per_conv {
        for (t, s) in m {
            *sums.entry(t).or_default() += s;
        }
    }
    if sums.len() < 2 {
        return Err(TopicScoreError::TooFewTopics(sums.len()));
    }
    let values: Vec<f64> = sums.values().copied().collect();
    let mean = crate::stats::mean(&values);
    let std = crate::stats::population_std(&values);
    let scores = sums
        .into_iter()
        .map(|(t, raw)| TopicScore {
            topic: t.to_string(),
            raw_sum: raw,
            z: if std > 0.0 { (raw - mean) / std } else { 0.0 },
        })
        .collect();
    Ok(TopicScoreReport { variant, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::conversation;

    #[test]
    fn one_topic_is_too_few() {
        let c = Corpus::new(vec![conversation("a", Some(3), &[("music", "hi there")])]);
        assert_eq!(
            score_topics(&c, ScoreVariant::F1),
            Err(TopicScoreError::TooFewTopics(1))
        );
    }

    #[test]
    fn equal_sums_give_zero_z() {
        let c = Corpus::new(vec![conversation(
            "a",
            Some(3),
            &[("music", "x"), ("movies", "y")],
        )]);
        let r = score_topics(&c, ScoreVariant::F2).unwrap();
        assert!(r.scores.iter().all(|s| s.z == 0.0));
    }

    #[test]
    fn unrated_is_rejected() {
        let c = Corpus::new(vec![conversation(
            "a",
            None,
            &[("music", "x"), ("movies", "y")],
        )]);
        assert!(matches!(
            score_topics(&c, ScoreVariant::F1),
            Err(TopicScoreError::Unrated(_))
        ));
    }

    #[test]
    fn intro_is_excluded_by_default() {
        let c = Corpus::new(vec![conversation(
            "a",
            Some(4),
            &[("intro", "hello"), ("music", "x"), ("movies", "y y")],
        )]);
        let r = score_topics(&c, ScoreVariant::F3).unwrap();
        assert_eq!(r.scores.len(), 2);
        let all = score_topics_with(&c, ScoreVariant::F3, &TopicScoreOptions { exclude: vec![] })
            .unwrap();
        assert_eq!(all.scores.len(), 3);
    }

    #[test]
    fn f3_uses_non_empty_utterances_only() {
        let c = Corpus::new(vec![conversation(
            "a",
            Some(2),
            &[("music", "one two three"), ("music", ""), ("movies", "a")],
        )]);
        let r = score_topics(&c, ScoreVariant::F3).unwrap();
        let music = r.scores.iter().find(|s| s.topic == "music").unwrap();
        // sqrt(2) * 2 * 3
        assert!((music.raw_sum - 2f64.sqrt() * 6.0).abs() < 1e-12);
    }
}
