//! Lexicon-based social dialogue act (SDA) tagging of user utterances.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub const SDA_COMPLIMENT: &str = "sda_compliment";
pub const SDA_COMPLAINT: &str = "sda_complaint";
pub const SDA_ABUSE: &str = "sda_abuse";
pub const SDA_REPEAT: &str = "sda_repeat";
pub const SDA_DEV_COMMAND: &str = "sda_dev_command";
pub const SDA_RED_TOPIC: &str = "sda_red_topic";

/// The SDA labels that always get a feature column, in column order.
pub const CORE_SDA_LABELS: [&str; 6] = [
    SDA_COMPLIMENT,
    SDA_COMPLAINT,
    SDA_ABUSE,
    SDA_REPEAT,
    SDA_DEV_COMMAND,
    SDA_RED_TOPIC,
];

const DEFAULT_LEXICONS: [(&str, &str); 2] = [
    (
        SDA_COMPLIMENT,
        include_str!("../lexicons/default/sda_compliment.txt"),
    ),
    (
        SDA_COMPLAINT,
        include_str!("../lexicons/default/sda_complaint.txt"),
    ),
];

const EXTENDED_LEXICONS: [(&str, &str); 4] = [
    (
        SDA_ABUSE,
        include_str!("../lexicons/extended/sda_abuse.txt"),
    ),
    (
        SDA_REPEAT,
        include_str!("../lexicons/extended/sda_repeat.txt"),
    ),
    (
        SDA_DEV_COMMAND,
        include_str!("../lexicons/extended/sda_dev_command.txt"),
    ),
    (
        SDA_RED_TOPIC,
        include_str!("../lexicons/extended/sda_red_topic.txt"),
    ),
];

#[derive(Debug, Error)]
pub enum TaggingError {
    #[error("lexicon {label:?}: {message}")]
    InvalidLexicon { label: String, message: String },
    #[error("duplicate lexicon label {0:?}")]
    DuplicateLabel(String),
    #[error("reading lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    label: String,
    patterns: Vec<String>,
}

impl Lexicon {
    /// Patterns must be non-empty, lowercase and trimmed.
    pub fn new(label: impl Into<String>, patterns: Vec<String>) -> Result<Self, TaggingError> {
        let label = label.into();
        let invalid = |message: String| TaggingError::InvalidLexicon {
            label: label.clone(),
            message,
        };
        if patterns.is_empty() {
            return Err(invalid("no patterns".into()));
        }
        for p in &patterns {
            if p.is_empty() {
                return Err(invalid("empty pattern".into()));
            }
            if p.trim() != p {
                return Err(invalid(format!("pattern {p:?} has surrounding whitespace")));
            }
            if p.to_lowercase() != *p {
                return Err(invalid(format!("pattern {p:?} is not lowercase")));
            }
        }
        Ok(Lexicon { label, patterns })
    }

    /// One pattern per line; blank lines and `#` comments skipped. Internal
    /// whitespace runs are collapsed to single spaces.
    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self, TaggingError> {
        let patterns = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect();
        Lexicon::new(label, patterns)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// Returns a copy with one more pattern.
    pub fn with_pattern(&self, pattern: &str) -> Result<Self, TaggingError> {
        let mut patterns = self.patterns.clone();
        patterns.push(pattern.to_string());
        Lexicon::new(self.label.clone(), patterns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// The whole normalized utterance must equal a pattern.
    WholeUtterance,
    /// A pattern may occur anywhere, as long as it starts and ends on word
    /// boundaries.
    #[default]
    WordBoundary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerConfig {
    lexicons: Vec<Lexicon>,
    pub match_mode: MatchMode,
}

impl Default for TaggerConfig {
    /// Compliment and complaint lexicons, word-boundary matching.
    fn default() -> Self {
        TaggerConfig::from_embedded(&DEFAULT_LEXICONS)
    }
}

impl TaggerConfig {
    pub fn new(lexicons: Vec<Lexicon>, match_mode: MatchMode) -> Result<Self, TaggingError> {
        let mut seen = HashSet::new();
        for lex in &lexicons {
            if !seen.insert(lex.label.clone()) {
                return Err(TaggingError::DuplicateLabel(lex.label.clone()));
            }
        }
        Ok(TaggerConfig {
            lexicons,
            match_mode,
        })
    }

    /// The default lexicons plus abuse, repeat, dev-command and red-topic.
    pub fn extended() -> Self {
        let all: Vec<(&str, &str)> = DEFAULT_LEXICONS
            .iter()
            .chain(EXTENDED_LEXICONS.iter())
            .copied()
            .collect();
        TaggerConfig::from_embedded(&all)
    }

    pub fn empty() -> Self {
        TaggerConfig {
            lexicons: Vec::new(),
            match_mode: MatchMode::default(),
        }
    }

    fn from_embedded(files: &[(&str, &str)]) -> Self {
        let lexicons = files
            .iter()
            .map(|(label, text)| Lexicon::parse(*label, text).expect("embedded lexicon is valid"))
            .collect();
        TaggerConfig {
            lexicons,
            match_mode: MatchMode::default(),
        }
    }

    /// Load every `*.txt` file in `dir` as a lexicon named after its stem.
    /// Files are read in name order.
    pub fn load_dir(dir: &Path, match_mode: MatchMode) -> Result<Self, TaggingError> {
        let io_err = |source| TaggingError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        paths.sort();
        let mut lexicons = Vec::new();
        for path in paths {
            let label = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let text = std::fs::read_to_string(&path).map_err(|source| TaggingError::Io {
                path: path.display().to_string(),
                source,
            })?;
            lexicons.push(Lexicon::parse(label, &text)?);
        }
        TaggerConfig::new(lexicons, match_mode)
    }

    pub fn lexicons(&self) -> &[Lexicon] {
        &self.lexicons
    }

    pub fn lexicon(&self, label: &str) -> Option<&Lexicon> {
        self.lexicons.iter().find(|l| l.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.lexicons.iter().map(|l| l.label.as_str())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn occurs_on_word_boundaries(text: &str, pattern: &str) -> bool {
    let starts_with_word = pattern.chars().next().is_some_and(is_word_char);
    let ends_with_word = pattern.chars().next_back().is_some_and(is_word_char);
    text.match_indices(pattern).any(|(start, m)| {
        let end = start + m.len();
        let left_ok = !starts_with_word
            || text[..start]
                .chars()
                .next_back()
                .is_none_or(|c| !is_word_char(c));
        let right_ok =
            !ends_with_word || text[end..].chars().next().is_none_or(|c| !is_word_char(c));
        left_ok && right_ok
    })
}

/// Case-insensitive lexicon match of one utterance. A label is emitted iff
/// some pattern of its lexicon matches.
pub fn tag_utterance(text: &str, cfg: &TaggerConfig) -> BTreeSet<String> {
    let text = normalize(text);
    if text.is_empty() {
        return BTreeSet::new();
    }
    cfg.lexicons
        .iter()
        .filter(|lex| {
            lex.patterns.iter().any(|p| match cfg.match_mode {
                MatchMode::WholeUtterance => text == *p,
                MatchMode::WordBoundary => occurs_on_word_boundaries(&text, p),
            })
        })
        .map(|lex| lex.label.clone())
        .collect()
}

/// Tag every user utterance. With `overwrite = false` the lexicon tags are
/// unioned with whatever was ingested from the logs.
pub fn tag_corpus(corpus: &Corpus, cfg: &TaggerConfig, overwrite: bool) -> Corpus {
    let conversations = corpus
        .conversations
        .par_iter()
        .map(|conv| {
            let mut conv = conv.clone();
            for ex in &mut conv.exchanges {
                let tags = tag_utterance(&ex.user_text, cfg);
                if overwrite {
                    ex.sda_tags = tags;
                } else {
                    ex.sda_tags.extend(tags);
                }
            }
            conv
        })
        .collect();
    Corpus {
        conversations,
        split_assignment: corpus.split_assignment.clone(),
    }
}
