//! Per-conversation features and z-score standardization.
//!
//! Every feature is a frequency (share of exchanges in the window carrying a
//! tag or topic) or a median, so no feature grows with conversation length.
//!
//! Column order is fixed by [`FeatureSchema::feature_names`]:
//!
//! 1. `length_median`: median word count of non-empty user utterances
//! 2. one column per SDA label (`sda_compliment`, `sda_complaint`, ...)
//! 3. one column per MIDAS label, prefixed `midas_`
//!
//! and, for the system-dependent set only,
//!
//! 4. `topic_freq_<topic>` for every topic in the inventory
//! 5. `rg_freq_<generator>` for every response generator
//! 6. `topic_dist_median`: median share of the window spent on each topic
//!    that occurs in it

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Conversation, Corpus};
use crate::linalg::Matrix;
use crate::stats;
use crate::tagging::CORE_SDA_LABELS;

/// Topics with their own `topic_freq_*` column. Anything else is counted
/// under `other`.
pub const TOPIC_INVENTORY: [&str; 17] = [
    "movies",
    "music",
    "animals",
    "video_games",
    "hobbies",
    "sports",
    "tv",
    "books",
    "food",
    "travel",
    "astronomy",
    "nutrition",
    "comics",
    "news",
    "harry_potter",
    "intro",
    "other",
];

pub const OTHER_TOPIC: &str = "other";

/// MIDAS labels that always get a column.
pub const CORE_MIDAS_LABELS: [&str; 4] = ["user_init", "sys_init", "neg_answer", "pos_answer"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("conversation {0:?}: feature window contains no exchanges")]
    EmptyWindow(String),
    #[error("prefix length must be at least 1")]
    ZeroPrefix,
    #[error("need at least 2 vectors to fit a standardizer, got {0}")]
    TooFewVectors(usize),
    #[error("feature schema mismatch: expected {expected} columns [{expected_fp}], got {actual} [{actual_fp}]")]
    SchemaMismatch {
        expected: usize,
        actual: usize,
        expected_fp: String,
        actual_fp: String,
    },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Utterance-level features computable for any dialogue system.
    Independent,
    /// The independent features plus topic and response-generator features
    /// specific to one system.
    Dependent,
}

impl FeatureSet {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Independent => "independent",
            FeatureSet::Dependent => "dependent",
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(FeatureSet::Independent),
            "dependent" => Ok(FeatureSet::Dependent),
            other => Err(format!("unknown feature set {other:?}")),
        }
    }
}

/// Label inventories that determine the feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub sda_labels: Vec<String>,
    pub midas_labels: Vec<String>,
    pub topics: Vec<String>,
    pub response_generators: Vec<String>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            sda_labels: CORE_SDA_LABELS.iter().map(|s| s.to_string()).collect(),
            midas_labels: CORE_MIDAS_LABELS.iter().map(|s| s.to_string()).collect(),
            topics: TOPIC_INVENTORY.iter().map(|s| s.to_string()).collect(),
            response_generators: Vec::new(),
        }
    }
}

impl FeatureSchema {
    /// Default inventories extended with every SDA and MIDAS label seen in
    /// the corpus (sorted, after the core labels) and the sorted set of
    /// response generators.
    pub fn for_corpus(corpus: &Corpus) -> Self {
        let mut schema = FeatureSchema::default();
        let mut sda = BTreeSet::new();
        let mut midas = BTreeSet::new();
        let mut rgs = BTreeSet::new();
        for ex in corpus.conversations.iter().flat_map(|c| &c.exchanges) {
            sda.extend(ex.sda_tags.iter().cloned());
            midas.extend(ex.midas_tags.iter().cloned());
            rgs.insert(ex.response_generator.clone());
        }
        for label in sda {
            if !schema.sda_labels.contains(&label) {
                schema.sda_labels.push(label);
            }
        }
        for label in midas {
            if !schema.midas_labels.contains(&label) {
                schema.midas_labels.push(label);
            }
        }
        schema.response_generators = rgs.into_iter().collect();
        schema
    }

    pub fn feature_names(&self, set: FeatureSet) -> Vec<String> {
        let mut names = vec!["length_median".to_string()];
        names.extend(self.sda_labels.iter().cloned());
        names.extend(self.midas_labels.iter().map(|l| format!("midas_{l}")));
        if set == FeatureSet::Dependent {
            names.extend(self.topics.iter().map(|t| format!("topic_freq_{t}")));
            names.extend(
                self.response_generators
                    .iter()
                    .map(|g| format!("rg_freq_{g}")),
            );
            names.push("topic_dist_median".to_string());
        }
        names
    }

    fn topic_slot(&self, topic: &str) -> Option<usize> {
        self.topics
            .iter()
            .position(|t| t == topic)
            .or_else(|| self.topics.iter().position(|t| t == OTHER_TOPIC))
    }
}

/// Stable short hash of an ordered list of feature names.
pub fn fingerprint(names: &[String]) -> String {
    let mut hasher = Sha256::new();
    for n in names {
        hasher.update(n.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

/// Number of whitespace-delimited tokens.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Arc<[String]>,
    pub values: Vec<f64>,
    pub feature_set: FeatureSet,
    pub prefix_k: Option<usize>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.names)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().copied())
            .collect()
    }
}

fn compute_values(
    conv: &Conversation,
    schema: &FeatureSchema,
    set: FeatureSet,
    prefix_k: Option<usize>,
) -> Result<Vec<f64>, FeatureError> {
    if prefix_k == Some(0) {
        return Err(FeatureError::ZeroPrefix);
    }
    let end = prefix_k.map_or(conv.raw_length(), |k| k.min(conv.raw_length()));
    let window = &conv.exchanges[..end];
    if window.is_empty() {
        return Err(FeatureError::EmptyWindow(conv.id.clone()));
    }
    let n = window.len() as f64;
    let freq = |pred: &dyn Fn(&crate::corpus::Exchange) -> bool| {
        window.iter().filter(|e| pred(e)).count() as f64 / n
    };

    let words: Vec<f64> = window
        .iter()
        .map(|e| word_count(&e.user_text))
        .filter(|&w| w > 0)
        .map(|w| w as f64)
        .collect();
    let mut values = vec![stats::median(&words).unwrap_or(0.0)];
    values.extend(
        schema
            .sda_labels
            .iter()
            .map(|l| freq(&|e| e.sda_tags.contains(l))),
    );
    values.extend(
        schema
            .midas_labels
            .iter()
            .map(|l| freq(&|e| e.midas_tags.contains(l))),
    );

    if set == FeatureSet::Dependent {
        let mut topic_counts = vec![0usize; schema.topics.len()];
        let mut present: BTreeMap<usize, usize> = BTreeMap::new();
        for e in window {
            if let Some(slot) = schema.topic_slot(&e.topic) {
                topic_counts[slot] += 1;
                *present.entry(slot).or_default() += 1;
            }
        }
        values.extend(topic_counts.iter().map(|&c| c as f64 / n));
        values.extend(
            schema
                .response_generators
                .iter()
                .map(|g| freq(&|e| e.response_generator == *g)),
        );
        let shares: Vec<f64> = present.values().map(|&c| c as f64 / n).collect();
        values.push(stats::median(&shares).unwrap_or(0.0));
    }
    Ok(values)
}

/// Features over exchanges `[0, min(prefix_k, raw_length))`.
pub fn extract_features(
    conv: &Conversation,
    schema: &FeatureSchema,
    set: FeatureSet,
    prefix_k: Option<usize>,
) -> Result<FeatureVector, FeatureError> {
    let values = compute_values(conv, schema, set, prefix_k)?;
    Ok(FeatureVector {
        names: schema.feature_names(set).into(),
        values,
        feature_set: set,
        prefix_k,
    })
}

/// A feature matrix for many conversations together with their targets.
/// This is the interchange format between featurization and training.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub feature_set: FeatureSet,
    pub prefix_k: Option<usize>,
    pub ids: Vec<String>,
    pub x: Matrix,
    pub rating: Vec<Option<u8>>,
    pub capped_length: Vec<usize>,
}

/// Extract features for every conversation of the corpus, in order.
pub fn extract_table(
    corpus: &Corpus,
    schema: &FeatureSchema,
    set: FeatureSet,
    prefix_k: Option<usize>,
) -> Result<FeatureTable, FeatureError> {
    if set == FeatureSet::Dependent {
        let unknown: BTreeSet<&str> = corpus
            .conversations
            .iter()
            .flat_map(|c| &c.exchanges)
            .map(|e| e.topic.as_str())
            .filter(|t| !schema.topics.iter().any(|s| s == t))
            .collect();
        for t in unknown {
            log::warn!("topic {t:?} is not in the inventory; counted as {OTHER_TOPIC:?}");
        }
    }
    let rows: Vec<Vec<f64>> = corpus
        .conversations
        .par_iter()
        .map(|c| compute_values(c, schema, set, prefix_k))
        .collect::<Result<_, _>>()?;
    let names = schema.feature_names(set);
    let x = if rows.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&rows)
    };
    Ok(FeatureTable {
        names,
        feature_set: set,
        prefix_k,
        ids: corpus.conversations.iter().map(|c| c.id.clone()).collect(),
        x,
        rating: corpus.conversations.iter().map(|c| c.rating).collect(),
        capped_length: corpus
            .conversations
            .iter()
            .map(|c| c.capped_length())
            .collect(),
    })
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.names)
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            names: self.names.clone().into(),
            values: self.x.row(i).to_vec(),
            feature_set: self.feature_set,
            prefix_k: self.prefix_k,
        }
    }

    /// Rows at the given positions.
    pub fn subset(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            names: self.names.clone(),
            feature_set: self.feature_set,
            prefix_k: self.prefix_k,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            x: self.x.select_rows(idx),
            rating: idx.iter().map(|&i| self.rating[i]).collect(),
            capped_length: idx.iter().map(|&i| self.capped_length[i]).collect(),
        }
    }

    /// Copy without the named columns. Unknown names are an error.
    pub fn drop_features(&self, drop: &[String]) -> Result<FeatureTable, FeatureError> {
        for d in drop {
            if !self.names.contains(d) {
                return Err(FeatureError::UnknownFeature(d.clone()));
            }
        }
        let keep: Vec<usize> = (0..self.names.len())
            .filter(|&j| !drop.contains(&self.names[j]))
            .collect();
        Ok(FeatureTable {
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            x: self.x.select_columns(&keep),
            ..self.clone()
        })
    }

    /// CSV with header `id,<features...>,rating,capped_length`. Unrated rows
    /// leave the rating cell empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("rating".into());
        header.push("capped_length".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.rating[i].map(|r| r.to_string()).unwrap_or_default());
            rec.push(self.capped_length[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        input: R,
        feature_set: FeatureSet,
        prefix_k: Option<usize>,
    ) -> Result<FeatureTable, FeatureError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let d = header.len();
        if d < 3
            || header[0] != "id"
            || header[d - 2] != "rating"
            || header[d - 1] != "capped_length"
        {
            return Err(FeatureError::Table(
                "header must be id,<features...>,rating,capped_length".into(),
            ));
        }
        let names = header[1..d - 2].to_vec();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut rating = Vec::new();
        let mut capped_length = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| FeatureError::Table(format!("row {}: bad {what}", row + 1));
            ids.push(rec[0].to_string());
            for j in 1..d - 2 {
                data.push(rec[j].parse::<f64>().map_err(|_| bad(&header[j]))?);
            }
            rating.push(match &rec[d - 2] {
                "" => None,
                s => Some(s.parse::<u8>().map_err(|_| bad("rating"))?),
            });
            capped_length.push(rec[d - 1].parse().map_err(|_| bad("capped_length"))?);
        }
        let x = Matrix::from_vec(ids.len(), names.len(), data);
        Ok(FeatureTable {
            names,
            feature_set,
            prefix_k,
            ids,
            x,
            rating,
            capped_length,
        })
    }
}

/// Per-feature mean and population standard deviation, fitted on training
/// vectors only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit_vectors(train: &[FeatureVector]) -> Result<Self, FeatureError> {
        let first = train.first().ok_or(FeatureError::TooFewVectors(0))?;
        for v in train {
            if v.names != first.names {
                return Err(mismatch(&first.names, &v.names));
            }
        }
        let rows: Vec<&[f64]> = train.iter().map(|v| v.values.as_slice()).collect();
        Standardizer::fit_rows(first.names.to_vec(), &rows)
    }

    pub fn fit_matrix(names: &[String], x: &Matrix) -> Result<Self, FeatureError> {
        if names.len() != x.cols() {
            return Err(FeatureError::Table(format!(
                "{} names for {} columns",
                names.len(),
                x.cols()
            )));
        }
        let rows: Vec<&[f64]> = x.row_iter().collect();
        Standardizer::fit_rows(names.to_vec(), &rows)
    }

    fn fit_rows(names: Vec<String>, rows: &[&[f64]]) -> Result<Self, FeatureError> {
        if rows.len() < 2 {
            return Err(FeatureError::TooFewVectors(rows.len()));
        }
        let d = names.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                let c = r[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Standardizer { names, mean, std })
    }

    fn standardize_value(&self, j: usize, v: f64) -> f64 {
        // Zero-variance columns carry no information; map them to 0.
        if self.std[j] > 0.0 {
            (v - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector, FeatureError> {
        if *v.names != *self.names {
            return Err(mismatch(&self.names, &v.names));
        }
        Ok(FeatureVector {
            values: self.apply_row(&v.values),
            ..v.clone()
        })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.standardize_value(j, v))
            .collect()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix, FeatureError> {
        if x.cols() != self.names.len() {
            return Err(FeatureError::Table(format!(
                "standardizer has {} columns, matrix has {}",
                self.names.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.standardize_value(j, *v);
            }
        }
        Ok(out)
    }

    /// `value * std + mean`; zero-variance columns come back as their mean.
    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| v * self.std[j] + self.mean[j])
            .collect()
    }
}

fn mismatch(expected: &[String], actual: &[String]) -> FeatureError {
    FeatureError::SchemaMismatch {
        expected: expected.len(),
        actual: actual.len(),
        expected_fp: fingerprint(expected),
        actual_fp: fingerprint(actual),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::conversation;
    use crate::corpus::Exchange;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 41 exchanges: 13 comics, 5 movies, the rest split over intro/music.
    fn forty_one() -> Conversation {
        let mut turns = Vec::new();
        turns.extend(std::iter::repeat_n(("intro", "hi"), 8));
        turns.extend(std::iter::repeat_n(("comics", "captain marvel"), 13));
        turns.extend(std::iter::repeat_n(("movies", "i don't care"), 5));
        turns.extend(std::iter::repeat_n(("music", "yeah"), 15));
        conversation("c41", Some(5), &turns)
    }

    #[test]
    fn topic_frequencies_are_shares_of_the_window() {
        let v = extract_features(
            &forty_one(),
            &FeatureSchema::default(),
            FeatureSet::Dependent,
            None,
        )
        .unwrap();
        assert_eq!(v.get("topic_freq_comics"), Some(13.0 / 41.0));
        assert_eq!(v.get("topic_freq_movies"), Some(5.0 / 41.0));
        assert_eq!(v.get("topic_freq_books"), Some(0.0));
        // shares: intro 8, comics 13, movies 5, music 15 -> median (8+13)/2 / 41
        assert_eq!(v.get("topic_dist_median"), Some(10.5 / 41.0));
        assert!(v.get("topic_freq_comics").is_some());
        let indep = extract_features(
            &forty_one(),
            &FeatureSchema::default(),
            FeatureSet::Independent,
            None,
        )
        .unwrap();
        assert_eq!(indep.get("topic_freq_comics"), None);
    }

    #[test]
    fn single_word_replies() {
        let conv = conversation("y", None, &[("movies", "yes"); 6]);
        let v = extract_features(
            &conv,
            &FeatureSchema::default(),
            FeatureSet::Independent,
            None,
        )
        .unwrap();
        assert_eq!(v.get("length_median"), Some(1.0));
        for l in CORE_SDA_LABELS {
            assert_eq!(v.get(l), Some(0.0));
        }
    }

    #[test]
    fn prefix_clamps_to_length() {
        let conv = conversation(
            "p",
            None,
            &[("movies", "yes i do"), ("music", "no")].repeat(3),
        );
        let schema = FeatureSchema::default();
        let full = extract_features(&conv, &schema, FeatureSet::Dependent, None).unwrap();
        let prefix = extract_features(&conv, &schema, FeatureSet::Dependent, Some(10)).unwrap();
        assert_eq!(full.values, prefix.values);
        let two = extract_features(&conv, &schema, FeatureSet::Dependent, Some(1)).unwrap();
        assert_eq!(two.get("topic_freq_movies"), Some(1.0));
        assert!(matches!(
            extract_features(&conv, &schema, FeatureSet::Dependent, Some(0)),
            Err(FeatureError::ZeroPrefix)
        ));
    }

    #[test]
    fn unknown_topics_count_as_other() {
        let conv = conversation("u", None, &[("cooking", "a"), ("movies", "b")]);
        let v = extract_features(
            &conv,
            &FeatureSchema::default(),
            FeatureSet::Dependent,
            None,
        )
        .unwrap();
        assert_eq!(v.get("topic_freq_other"), Some(0.5));
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count("i don't care"), 3);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("  captain  marvel "), 2);
        assert_eq!(word_count("how she's like super empowering"), 5);
        assert_eq!(word_count("\ttabs\nand newlines "), 3);
    }

    #[test]
    fn empty_user_text_is_excluded_from_length_median() {
        let conv = conversation(
            "e",
            None,
            &[("intro", ""), ("intro", "one two three"), ("intro", "a")],
        );
        let v = extract_features(
            &conv,
            &FeatureSchema::default(),
            FeatureSet::Independent,
            None,
        )
        .unwrap();
        assert_eq!(v.get("length_median"), Some(2.0));
    }

    #[test]
    fn schema_from_corpus_appends_observed_labels() {
        let mut conv = conversation("s", None, &[("intro", "a"), ("movies", "b")]);
        conv.exchanges[0].midas_tags.insert("command".into());
        conv.exchanges[1].response_generator = "kg".into();
        let schema = FeatureSchema::for_corpus(&Corpus::new(vec![conv]));
        assert_eq!(schema.midas_labels.last().unwrap(), "command");
        assert_eq!(schema.response_generators, vec!["kg", "template"]);
        let names = schema.feature_names(FeatureSet::Dependent);
        let unique: BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn standardizer_closed_forms() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let x = Matrix::from_rows(&[[1.0, 4.0], [2.0, 4.0], [3.0, 4.0]]);
        let s = Standardizer::fit_matrix(&names, &x).unwrap();
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.std[1], 0.0);
        assert_eq!(s.apply_row(&[2.0, 9.0]), vec![0.0, 0.0]);

        let s = Standardizer {
            names: vec!["v".into()],
            mean: vec![3.0],
            std: vec![2.0],
        };
        assert_eq!(s.apply_row(&[5.0]), vec![1.0]);
    }

    #[test]
    fn standardizer_rejects_mismatch_and_tiny_input() {
        let a = FeatureVector {
            names: vec!["a".to_string()].into(),
            values: vec![1.0],
            feature_set: FeatureSet::Independent,
            prefix_k: None,
        };
        let b = FeatureVector {
            names: vec!["b".to_string()].into(),
            ..a.clone()
        };
        assert!(matches!(
            Standardizer::fit_vectors(&[a.clone()]),
            Err(FeatureError::TooFewVectors(1))
        ));
        assert!(matches!(
            Standardizer::fit_vectors(&[a.clone(), b.clone()]),
            Err(FeatureError::SchemaMismatch { .. })
        ));
        let s = Standardizer::fit_vectors(&[a.clone(), a.clone()]).unwrap();
        assert!(s.apply(&b).is_err());
    }

    #[test]
    fn standardized_random_vectors_have_unit_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let mut r: Vec<f64> = (0..5)
                    .map(|j| rng.random::<f64>() * (j + 1) as f64 * 10.0 - 3.0)
                    .collect();
                r.push(7.0);
                r
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let s = Standardizer::fit_matrix(&names, &x).unwrap();
        let z = s.apply_matrix(&x).unwrap();
        for j in 0..5 {
            let col = z.column(j);
            assert!(stats::mean(&col).abs() < 1e-10);
            assert!((stats::population_std(&col) - 1.0).abs() < 1e-10);
        }
        assert!(z.column(5).iter().all(|&v| v == 0.0));
        for i in 0..x.rows() {
            let back = s.invert_row(z.row(i));
            for j in 0..5 {
                assert!((back[j] - x.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_drop() {
        let corpus = Corpus::new(vec![
            forty_one(),
            conversation("b,quoted", None, &[("movies", "yes")]),
        ]);
        let table = extract_table(
            &corpus,
            &FeatureSchema::default(),
            FeatureSet::Dependent,
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = FeatureTable::read_csv(buf.as_slice(), FeatureSet::Dependent, None).unwrap();
        assert_eq!(back, table);

        let dropped = table
            .drop_features(&["topic_freq_movies".to_string()])
            .unwrap();
        assert_eq!(dropped.names.len(), table.names.len() - 1);
        assert!(!dropped.names.contains(&"topic_freq_movies".to_string()));
        assert!(table.drop_features(&["nope".to_string()]).is_err());
    }

    fn arbitrary_conversation() -> impl Strategy<Value = Conversation> {
        let topics = prop::sample::select(vec!["movies", "music", "comics", "intro", "weird"]);
        let texts = prop::sample::select(vec![
            "yes",
            "i don't care",
            "",
            "tell me more about it",
            "no",
        ]);
        let sda =
            prop::sample::subsequence(vec!["sda_compliment", "sda_complaint", "sda_abuse"], 0..=2);
        let midas = prop::sample::subsequence(vec!["user_init", "neg_answer"], 0..=2);
        let rg = prop::sample::select(vec!["kg", "neural"]);
        prop::collection::vec((topics, texts, sda, midas, rg), 1..30).prop_map(|ex| Conversation {
            id: "p".into(),
            rating: Some(3),
            exchanges: ex
                .into_iter()
                .enumerate()
                .map(|(index, (t, u, s, m, g))| Exchange {
                    index,
                    topic: t.into(),
                    response_generator: g.into(),
                    user_text: u.into(),
                    system_text: String::new(),
                    midas_tags: m.into_iter().map(String::from).collect(),
                    sda_tags: s.into_iter().map(String::from).collect(),
                })
                .collect(),
        })
    }

    fn schema_with_rgs() -> FeatureSchema {
        FeatureSchema {
            response_generators: vec!["kg".into(), "neural".into()],
            ..FeatureSchema::default()
        }
    }

    proptest! {
        #[test]
        fn duplicating_exchanges_leaves_features_unchanged(conv in arbitrary_conversation(), interleave in any::<bool>()) {
            let schema = schema_with_rgs();
            let mut doubled = conv.clone();
            doubled.exchanges = if interleave {
                conv.exchanges.iter().flat_map(|e| [e.clone(), e.clone()]).collect()
            } else {
                conv.exchanges.iter().chain(&conv.exchanges).cloned().collect()
            };
            for (i, e) in doubled.exchanges.iter_mut().enumerate() {
                e.index = i;
            }
            let a = extract_features(&conv, &schema, FeatureSet::Dependent, None).unwrap();
            let b = extract_features(&doubled, &schema, FeatureSet::Dependent, None).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
            }
        }

        #[test]
        fn frequencies_are_bounded_and_topic_shares_sum_to_one(conv in arbitrary_conversation(), k in prop::option::of(1usize..40)) {
            let schema = schema_with_rgs();
            let v = extract_features(&conv, &schema, FeatureSet::Dependent, k).unwrap();
            let mut topic_sum = 0.0;
            let mut rg_sum = 0.0;
            for (name, value) in v.names.iter().zip(&v.values) {
                prop_assert!(!value.is_nan());
                if name == "length_median" {
                    prop_assert!(*value >= 0.0);
                } else {
                    prop_assert!((0.0..=1.0).contains(value), "{} = {}", name, value);
                }
                if name.starts_with("topic_freq_") { topic_sum += value; }
                if name.starts_with("rg_freq_") { rg_sum += value; }
            }
            prop_assert!((topic_sum - 1.0).abs() < 1e-12);
            prop_assert!((rg_sum - 1.0).abs() < 1e-12);
            if let Some(k) = k {
                if k >= conv.raw_length() {
                    let full = extract_features(&conv, &schema, FeatureSet::Dependent, None).unwrap();
                    prop_assert_eq!(full.values, v.values);
                }
            }
        }
    }
}
