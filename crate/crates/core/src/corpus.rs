//! Conversation data model, JSONL ingestion, filtering and splitting.
//!
//! One conversation per line:
//!
//! ```text
//! {"id": str, "rating": int|null, "exchanges": [{"topic": str, "rg": str,
//!   "user": str, "system": str, "midas": [str], "sda": [str]}]}
//! ```
//!
//! `midas` and `sda` are optional. Unknown fields are ignored.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conversations longer than this are modeled as if they had this length.
pub const LENGTH_CAP: usize = 75;

/// Shortest conversation kept for modeling by default.
pub const DEFAULT_MIN_LENGTH: usize = 5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate conversation id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: rating out of range: {rating} (expected 1..=5)")]
    RatingOutOfRange { line: usize, rating: i64 },
    #[error("corpus of {0} conversations is too small to split (need at least 3)")]
    TooSmallToSplit(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("split assignment does not cover conversation {0:?}")]
    Unassigned(String),
    #[error("split assignment names unknown conversation {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One user/system pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub index: usize,
    pub topic: String,
    pub response_generator: String,
    pub user_text: String,
    pub system_text: String,
    pub midas_tags: BTreeSet<String>,
    pub sda_tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub exchanges: Vec<Exchange>,
    pub rating: Option<u8>,
}

impl Conversation {
    /// Number of exchanges.
    pub fn raw_length(&self) -> usize {
        self.exchanges.len()
    }

    /// `min(raw_length, 75)`.
    pub fn capped_length(&self) -> usize {
        self.raw_length().min(LENGTH_CAP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    pub split_assignment: Option<BTreeMap<String, Split>>,
}

// Wire records. Kept separate from the domain types so that derived fields
// (exchange index, lengths) never appear on disk.
#[derive(Debug, Serialize, Deserialize)]
struct ConversationRecord {
    id: String,
    rating: Option<i64>,
    exchanges: Vec<ExchangeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExchangeRecord {
    topic: String,
    #[serde(default = "unknown_rg")]
    rg: String,
    #[serde(default)]
    user: String,
    #[serde(default)]
    system: String,
    #[serde(default)]
    midas: Vec<String>,
    #[serde(default)]
    sda: Vec<String>,
}

fn unknown_rg() -> String {
    "unknown".to_string()
}

impl Corpus {
    pub fn new(conversations: Vec<Conversation>) -> Self {
        Corpus {
            conversations,
            split_assignment: None,
        }
    }

    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.as_ref()?.get(id).copied()
    }

    /// Conversations assigned to `split`, in corpus order.
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Conversation> + '_ {
        self.conversations
            .iter()
            .filter(move |c| self.split_of(&c.id) == Some(split))
    }

    /// Attach an externally produced split assignment, checking that it
    /// partitions the conversation ids exactly.
    pub fn with_splits(mut self, splits: BTreeMap<String, Split>) -> Result<Self, CorpusError> {
        let ids: HashSet<&str> = self.conversations.iter().map(|c| c.id.as_str()).collect();
        for id in splits.keys() {
            if !ids.contains(id.as_str()) {
                return Err(CorpusError::UnknownId(id.clone()));
            }
        }
        for c in &self.conversations {
            if !splits.contains_key(&c.id) {
                return Err(CorpusError::Unassigned(c.id.clone()));
            }
        }
        self.split_assignment = Some(splits);
        Ok(self)
    }

    /// Serialize as JSONL, one conversation per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for conv in &self.conversations {
            let record = ConversationRecord {
                id: conv.id.clone(),
                rating: conv.rating.map(i64::from),
                exchanges: conv
                    .exchanges
                    .iter()
                    .map(|e| ExchangeRecord {
                        topic: e.topic.clone(),
                        rg: e.response_generator.clone(),
                        user: e.user_text.clone(),
                        system: e.system_text.clone(),
                        midas: e.midas_tags.iter().cloned().collect(),
                        sda: e.sda_tags.iter().cloned().collect(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parse a JSONL stream into a corpus. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<Corpus, CorpusError> {
    let mut conversations = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConversationRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let conv = record_to_conversation(record, line_no)?;
        if !seen.insert(conv.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: conv.id,
            });
        }
        conversations.push(conv);
    }
    Ok(Corpus::new(conversations))
}

pub fn parse_corpus_str(s: &str) -> Result<Corpus, CorpusError> {
    parse_corpus(s.as_bytes())
}

fn record_to_conversation(
    record: ConversationRecord,
    line: usize,
) -> Result<Conversation, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };
    if record.id.is_empty() {
        return Err(malformed("empty conversation id".into()));
    }
    if record.exchanges.is_empty() {
        return Err(malformed(format!(
            "conversation {:?} has no exchanges",
            record.id
        )));
    }
    let rating = match record.rating {
        None => None,
        Some(r) if (1..=5).contains(&r) => Some(r as u8),
        Some(r) => return Err(CorpusError::RatingOutOfRange { line, rating: r }),
    };
    let mut exchanges = Vec::with_capacity(record.exchanges.len());
    for (index, ex) in record.exchanges.into_iter().enumerate() {
        if ex.topic.trim().is_empty() {
            return Err(malformed(format!(
                "conversation {:?} exchange {index}: empty topic",
                record.id
            )));
        }
        if index > 0 && ex.user.trim().is_empty() {
            log::warn!(
                "line {line}: conversation {:?} exchange {index} has empty user text",
                record.id
            );
        }
        exchanges.push(Exchange {
            index,
            topic: ex.topic,
            response_generator: ex.rg,
            user_text: ex.user,
            system_text: ex.system,
            midas_tags: ex.midas.into_iter().collect(),
            sda_tags: ex.sda.into_iter().collect(),
        });
    }
    Ok(Conversation {
        id: record.id,
        exchanges,
        rating,
    })
}

/// Keep conversations with at least `min_len` exchanges, preserving order.
pub fn filter_min_length(corpus: &Corpus, min_len: usize) -> Corpus {
    let conversations: Vec<Conversation> = corpus
        .conversations
        .iter()
        .filter(|c| c.raw_length() >= min_len)
        .cloned()
        .collect();
    let split_assignment = corpus.split_assignment.as_ref().map(|splits| {
        conversations
            .iter()
            .filter_map(|c| splits.get(&c.id).map(|s| (c.id.clone(), *s)))
            .collect()
    });
    Corpus {
        conversations,
        split_assignment,
    }
}

/// Split sizes for `n` items: dev and test get `floor(n * ratio)`, train
/// takes the remainder.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    // The epsilon keeps e.g. 10 * 0.1 from flooring to 0 when the product
    // lands a hair under an integer.
    let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let dev = floor(ratios.1);
    let test = floor(ratios.2);
    (n - dev - test, dev, test)
}

/// Assign every conversation to train/dev/test by shuffling positions with a
/// seeded RNG. The assignment depends only on `n`, the ratios and the seed.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Corpus, CorpusError> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let n = corpus.len();
    if n < 3 {
        return Err(CorpusError::TooSmallToSplit(n));
    }
    let (n_train, n_dev, _) = split_sizes(n, ratios);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut splits = BTreeMap::new();
    for (rank, &pos) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        splits.insert(corpus.conversations[pos].id.clone(), split);
    }
    Ok(Corpus {
        conversations: corpus.conversations.clone(),
        split_assignment: Some(splits),
    })
}

/// Write a split assignment as `id,split` CSV.
pub fn write_splits<W: Write>(splits: &BTreeMap<String, Split>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "id,split")?;
    for (id, split) in splits {
        writeln!(out, "{id},{split}")?;
    }
    Ok(())
}

pub fn parse_splits<R: BufRead>(input: R) -> Result<BTreeMap<String, Split>, CorpusError> {
    let mut splits = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (id, split) = line
            .rsplit_once(',')
            .ok_or_else(|| CorpusError::Malformed {
                line: i + 1,
                message: "expected `id,split`".into(),
            })?;
        let split = split
            .trim()
            .parse()
            .map_err(|message| CorpusError::Malformed {
                line: i + 1,
                message,
            })?;
        if splits.insert(id.to_string(), split).is_some() {
            return Err(CorpusError::DuplicateId {
                line: i + 1,
                id: id.to_string(),
            });
        }
    }
    Ok(splits)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Build a conversation from `(topic, user_text)` pairs.
    pub fn conversation(id: &str, rating: Option<u8>, turns: &[(&str, &str)]) -> Conversation {
        Conversation {
            id: id.to_string(),
            rating,
            exchanges: turns
                .iter()
                .enumerate()
                .map(|(index, (topic, user))| Exchange {
                    index,
                    topic: topic.to_string(),
                    response_generator: "template".to_string(),
                    user_text: user.to_string(),
                    system_text: String::new(),
                    midas_tags: BTreeSet::new(),
                    sda_tags: BTreeSet::new(),
                })
                .collect(),
        }
    }

    pub fn of_length(id: &str, len: usize) -> Conversation {
        let turns = vec![("movies", "yes"); len];
        conversation(id, Some(4), &turns)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn line(id: &str, rating: &str, n: usize) -> String {
        let ex: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"topic":"movies","rg":"kg","user":"u{i}","system":"s{i}","midas":["pos_answer"]}}"#
                )
            })
            .collect();
        format!(
            r#"{{"id":"{id}","rating":{rating},"exchanges":[{}],"extra":1}}"#,
            ex.join(",")
        )
    }

    #[test]
    fn parses_single_conversation() {
        let corpus = parse_corpus_str(&line("a", "5", 3)).unwrap();
        assert_eq!(corpus.len(), 1);
        let c = &corpus.conversations[0];
        assert_eq!(c.raw_length(), 3);
        assert_eq!(c.rating, Some(5));
        assert_eq!(c.exchanges[2].index, 2);
        assert!(c.exchanges[0].sda_tags.is_empty());
        assert!(c.exchanges[0].midas_tags.contains("pos_answer"));
    }

    #[test]
    fn rejects_rating_out_of_range() {
        let text = format!("{}\n{}", line("a", "5", 1), line("b", "7", 1));
        let err = parse_corpus_str(&text).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::RatingOutOfRange { line: 2, rating: 7 }
        ));
        assert!(err.to_string().contains("rating out of range"));
    }

    #[test]
    fn rejects_duplicates_and_garbage_with_line_numbers() {
        let text = format!("{}\n\n{}", line("a", "null", 1), line("a", "3", 2));
        match parse_corpus_str(&text).unwrap_err() {
            CorpusError::DuplicateId { line, id } => {
                assert_eq!(line, 3);
                assert_eq!(id, "a");
            }
            other => panic!("unexpected {other}"),
        }
        let err = parse_corpus_str("{\"id\": \"x\"}\nnot json").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn caps_long_conversations() {
        let corpus = parse_corpus_str(&line("long", "4", 200)).unwrap();
        assert_eq!(corpus.conversations[0].raw_length(), 200);
        assert_eq!(corpus.conversations[0].capped_length(), 75);
    }

    #[test]
    fn filter_keeps_length_at_least_min() {
        let corpus = Corpus::new(
            [1, 3, 5, 41]
                .iter()
                .enumerate()
                .map(|(i, &n)| of_length(&i.to_string(), n))
                .collect(),
        );
        let kept = filter_min_length(&corpus, DEFAULT_MIN_LENGTH);
        let lengths: Vec<usize> = kept.conversations.iter().map(|c| c.raw_length()).collect();
        assert_eq!(lengths, vec![5, 41]);

        assert!(filter_min_length(&Corpus::default(), 5).is_empty());

        let fives = Corpus::new((0..4).map(|i| of_length(&i.to_string(), 5)).collect());
        assert_eq!(filter_min_length(&fives, 5), fives);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(10, (0.8, 0.1, 0.1)), (8, 1, 1));
        assert_eq!(split_sizes(32_235, (0.8, 0.1, 0.1)), (25_789, 3_223, 3_223));
    }

    #[test]
    fn split_is_deterministic_and_counts_match() {
        let corpus = Corpus::new((0..10).map(|i| of_length(&format!("c{i}"), 5)).collect());
        let a = split_corpus(&corpus, (0.8, 0.1, 0.1), 7).unwrap();
        let b = split_corpus(&corpus, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a.split_assignment, b.split_assignment);
        let count = |s| a.in_split(s).count();
        assert_eq!(
            (count(Split::Train), count(Split::Dev), count(Split::Test)),
            (8, 1, 1)
        );
    }

    #[test]
    fn split_counts_for_a_32k_corpus() {
        let corpus = Corpus::new(
            (0..32_235)
                .map(|i| of_length(&format!("c{i}"), 1))
                .collect(),
        );
        let split = split_corpus(&corpus, (0.8, 0.1, 0.1), 1).unwrap();
        let mut counts = BTreeMap::new();
        for s in split.split_assignment.as_ref().unwrap().values() {
            *counts.entry(*s).or_insert(0usize) += 1;
        }
        assert_eq!(counts[&Split::Train], 25_789);
        assert_eq!(counts[&Split::Dev], 3_223);
        assert_eq!(counts[&Split::Test], 3_223);
    }

    #[test]
    fn split_rejects_tiny_corpus_and_bad_ratios() {
        let corpus = Corpus::new(vec![of_length("a", 5), of_length("b", 5)]);
        assert!(matches!(
            split_corpus(&corpus, (0.8, 0.1, 0.1), 0),
            Err(CorpusError::TooSmallToSplit(2))
        ));
        let corpus = Corpus::new((0..5).map(|i| of_length(&i.to_string(), 5)).collect());
        assert!(split_corpus(&corpus, (0.8, 0.1, 0.2), 0).is_err());
    }

    #[test]
    fn splits_csv_round_trip() {
        let corpus = Corpus::new((0..10).map(|i| of_length(&format!("c{i}"), 5)).collect());
        let split = split_corpus(&corpus, (0.8, 0.1, 0.1), 3).unwrap();
        let mut buf = Vec::new();
        write_splits(split.split_assignment.as_ref().unwrap(), &mut buf).unwrap();
        let parsed = parse_splits(buf.as_slice()).unwrap();
        assert_eq!(Some(&parsed), split.split_assignment.as_ref());
        let rebuilt = corpus.with_splits(parsed).unwrap();
        assert_eq!(rebuilt, split);
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(lengths in prop::collection::vec(1usize..30, 0..40), min in 1usize..10) {
            let corpus = Corpus::new(lengths.iter().enumerate().map(|(i, &n)| of_length(&i.to_string(), n)).collect());
            let once = filter_min_length(&corpus, min);
            prop_assert_eq!(filter_min_length(&once, min), once.clone());
            for c in &once.conversations {
                prop_assert!(c.capped_length() <= LENGTH_CAP);
                if c.raw_length() <= LENGTH_CAP {
                    prop_assert_eq!(c.capped_length(), c.raw_length());
                }
            }
        }

        #[test]
        fn split_partitions_ids(n in 3usize..200, seed in any::<u64>()) {
            let corpus = Corpus::new((0..n).map(|i| of_length(&format!("c{i}"), 1)).collect());
            let split = split_corpus(&corpus, (0.8, 0.1, 0.1), seed).unwrap();
            let assignment = split.split_assignment.unwrap();
            prop_assert_eq!(assignment.len(), n);
            let (tr, dv, te) = split_sizes(n, (0.8, 0.1, 0.1));
            let count = |s: Split| assignment.values().filter(|&&v| v == s).count();
            prop_assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (tr, dv, te));
        }

        #[test]
        fn jsonl_round_trip(lengths in prop::collection::vec(1usize..8, 1..10), rated in any::<bool>()) {
            let corpus = Corpus::new(lengths.iter().enumerate().map(|(i, &n)| {
                let mut c = of_length(&format!("c{i}"), n);
                c.rating = if rated { Some((i % 5 + 1) as u8) } else { None };
                c.exchanges[0].sda_tags.insert("sda_compliment".into());
                c
            }).collect());
            let parsed = parse_corpus_str(&corpus.to_jsonl_string()).unwrap();
            prop_assert_eq!(parsed, corpus);
        }
    }
}
