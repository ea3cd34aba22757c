//! Seeded generator of synthetic rated conversations with planted structure.
//!
//! Every conversation has a latent engagement `z ~ N(0, 1)`, squashed to
//! `e = logistic(slope * z)`. Engagement drives
//!
//! * length: `offset + floor(median * exp(sigma * (rho z + sqrt(1 - rho^2) nu)))`,
//!   capped at `max`, except for a point mass of accidental 1-4 exchange
//!   conversations;
//! * compliment count: `round(rate(e) * L)` exchanges at random positions;
//! * per-exchange Bernoulli rates of the other tags, and utterance verbosity;
//! * the rating, an ordinal cut of `coupling * z + appeal_weight * appeal +
//!   noise * eta` whose cut points reproduce a target rating distribution.
//!
//! Topic choice and the split of exchanges over topics do not depend on
//! length, so topic frequencies carry no length signal of their own.
//!
//! When `rating.target_length_correlation` is set the coupling is solved by
//! bisection on a pilot sample so that the rating/capped-length Pearson
//! correlation over conversations of at least `calibration_min_length`
//! exchanges hits the target.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Conversation, Corpus, Exchange, LENGTH_CAP};
use crate::features::CORE_MIDAS_LABELS;
use crate::tagging::{
    TaggerConfig, SDA_ABUSE, SDA_COMPLAINT, SDA_COMPLIMENT, SDA_DEV_COMMAND, SDA_RED_TOPIC,
    SDA_REPEAT,
};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("requested rating/length correlation {target} is not attainable (range {low:.3} to {high:.3} under these settings)")]
    Infeasible { target: f64, low: f64, high: f64 },
}

/// A rate that moves linearly with engagement: `base + engagement * (e - 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLink {
    pub base: f64,
    pub engagement: f64,
}

impl RateLink {
    pub const fn fixed(base: f64) -> Self {
        RateLink {
            base,
            engagement: 0.0,
        }
    }

    pub fn at(&self, e: f64) -> f64 {
        (self.base + self.engagement * (e - 0.5)).clamp(0.0, 1.0)
    }

    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let lo = self.base - self.engagement.abs() / 2.0;
        let hi = self.base + self.engagement.abs() / 2.0;
        if !(lo >= 0.0 && hi <= 1.0) {
            return Err(SynthError::InvalidConfig(format!(
                "{name}: rate range [{lo}, {hi}] leaves [0, 1]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicProfile {
    pub name: String,
    /// Relative chance of being chosen for a conversation.
    pub popularity: f64,
    /// Relative number of exchanges once chosen.
    pub share: f64,
    /// Multiplier on user utterance length.
    pub verbosity: f64,
    /// Additive effect on the latent rating score.
    pub appeal: f64,
}

impl TopicProfile {
    fn new(name: &str, popularity: f64, share: f64, verbosity: f64, appeal: f64) -> Self {
        TopicProfile {
            name: name.to_string(),
            popularity,
            share,
            verbosity,
            appeal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthModel {
    pub offset: usize,
    /// Median of the log-normal body (before the offset).
    pub median: f64,
    pub sigma: f64,
    /// Correlation of log length with engagement, in [0, 1].
    pub engagement_coupling: f64,
    pub max: usize,
    /// Share of accidental conversations of 1 to 4 exchanges.
    pub short_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbosityModel {
    pub mean_words: f64,
    /// Log-scale slope on `z`.
    pub engagement: f64,
    /// Log-scale sd of the per-user level.
    pub user_spread: f64,
    /// Log-scale sd per utterance.
    pub utterance_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingModel {
    /// Target shares of ratings 1..=5.
    pub distribution: [f64; 5],
    /// Solve `coupling` so that rating/capped-length r hits this value.
    pub target_length_correlation: Option<f64>,
    pub coupling: f64,
    pub noise: f64,
    pub appeal_weight: f64,
    pub rated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagModel {
    /// Compliments are allocated as `round(rate * L)` exchanges.
    pub compliment: RateLink,
    /// The remaining rates are per-exchange Bernoulli probabilities.
    pub complaint: RateLink,
    pub abuse: RateLink,
    pub repeat: RateLink,
    pub dev_command: RateLink,
    pub red_topic: RateLink,
    pub user_init: RateLink,
    pub sys_init: RateLink,
    pub neg_answer: RateLink,
    pub pos_answer: RateLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_conversations: usize,
    pub seed: u64,
    pub engagement_slope: f64,
    pub length: LengthModel,
    pub topics: Vec<TopicProfile>,
    pub min_topics: usize,
    pub max_topics: usize,
    pub verbosity: VerbosityModel,
    pub tags: TagModel,
    pub rating: RatingModel,
    pub response_generators: Vec<String>,
    pub pilot_size: usize,
    pub calibration_min_length: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let t = TopicProfile::new;
        GeneratorConfig {
            n_conversations: 30_000,
            seed: 0,
            engagement_slope: 1.7,
            length: LengthModel {
                offset: 5,
                median: 12.0,
                sigma: 0.94,
                engagement_coupling: 0.975,
                max: 200,
                short_fraction: 0.10,
            },
            topics: vec![
                t("movies", 1.00, 1.20, 1.00, 0.30),
                t("music", 0.90, 1.10, 1.00, 0.20),
                t("animals", 0.70, 1.00, 1.00, 0.15),
                t("video_games", 0.72, 1.05, 1.05, 0.10),
                t("hobbies", 0.80, 0.60, 1.38, 0.25),
                t("sports", 0.55, 1.00, 0.95, 0.00),
                t("tv", 0.50, 1.00, 1.00, 0.05),
                t("books", 0.45, 1.00, 1.10, 0.05),
                t("food", 0.55, 0.90, 1.00, 0.00),
                t("travel", 0.45, 0.90, 1.05, 0.00),
                t("astronomy", 0.30, 1.00, 0.90, -0.10),
                t("nutrition", 0.25, 0.80, 0.90, -0.20),
                t("comics", 0.25, 1.00, 1.00, -0.15),
                t("news", 0.35, 0.90, 0.90, -0.25),
                t("harry_potter", 0.30, 1.00, 1.00, -0.05),
            ],
            min_topics: 1,
            max_topics: 4,
            verbosity: VerbosityModel {
                mean_words: 5.0,
                engagement: 0.15,
                user_spread: 0.35,
                utterance_spread: 0.3,
            },
            tags: TagModel {
                compliment: RateLink {
                    base: 0.20,
                    engagement: 0.36,
                },
                complaint: RateLink {
                    base: 0.03,
                    engagement: -0.04,
                },
                abuse: RateLink::fixed(0.01),
                repeat: RateLink::fixed(0.02),
                dev_command: RateLink::fixed(0.015),
                red_topic: RateLink::fixed(0.005),
                user_init: RateLink {
                    base: 0.15,
                    engagement: 0.10,
                },
                sys_init: RateLink::fixed(0.30),
                neg_answer: RateLink {
                    base: 0.08,
                    engagement: -0.08,
                },
                pos_answer: RateLink {
                    base: 0.12,
                    engagement: 0.10,
                },
            },
            rating: RatingModel {
                distribution: [0.12, 0.08, 0.15, 0.25, 0.40],
                target_length_correlation: Some(0.134),
                coupling: 0.0,
                noise: 1.0,
                appeal_weight: 1.0,
                rated_fraction: 1.0,
            },
            response_generators: ["template", "neural", "retrieval", "knowledge"]
                .map(String::from)
                .to_vec(),
            pilot_size: 40_000,
            calibration_min_length: 5,
        }
    }
}

impl GeneratorConfig {
    /// Compliments are the only tag and the only carrier of engagement;
    /// verbosity and the topic mix are independent of it.
    ///
    /// The other tag rates are zero rather than unlinked: a frequency `k / L`
    /// with `k > 0` pins down `L`, so any nonzero per-exchange tag leaks length.
    pub fn compliments_only() -> Self {
        let mut cfg = GeneratorConfig::default();
        cfg.verbosity.engagement = 0.0;
        let t = &mut cfg.tags;
        for link in [
            &mut t.complaint,
            &mut t.abuse,
            &mut t.repeat,
            &mut t.dev_command,
            &mut t.red_topic,
            &mut t.user_init,
            &mut t.sys_init,
            &mut t.neg_answer,
            &mut t.pos_answer,
        ] {
            *link = RateLink::fixed(0.0);
        }
        cfg
    }

    /// Length is a deterministic function of engagement and compliments are
    /// its only carrier; no short conversations.
    pub fn noise_free() -> Self {
        let mut cfg = GeneratorConfig::compliments_only();
        cfg.length.engagement_coupling = 1.0;
        cfg.length.short_fraction = 0.0;
        cfg.tags.compliment = RateLink {
            base: 0.40,
            engagement: 0.70,
        };
        cfg
    }

    /// Rating unlinked from calibration: fixed coupling with the given noise.
    pub fn with_rating_noise(mut self, coupling: f64, noise: f64) -> Self {
        self.rating.target_length_correlation = None;
        self.rating.coupling = coupling;
        self.rating.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_conversations == 0 {
            return bad("n_conversations must be >= 1".into());
        }
        if self.topics.is_empty()
            || self
                .topics
                .iter()
                .any(|t| !(t.popularity > 0.0 && t.share > 0.0 && t.verbosity > 0.0))
        {
            return bad("topics need positive popularity, share and verbosity".into());
        }
        if self.min_topics == 0
            || self.min_topics > self.max_topics
            || self.max_topics > self.topics.len()
        {
            return bad(format!(
                "topics per conversation must satisfy 1 <= {} <= {} <= {}",
                self.min_topics,
                self.max_topics,
                self.topics.len()
            ));
        }
        let l = &self.length;
        if !(0.0..=1.0).contains(&l.engagement_coupling) || !(0.0..=1.0).contains(&l.short_fraction)
        {
            return bad("length coupling and short_fraction must lie in [0, 1]".into());
        }
        if !(l.median > 0.0 && l.sigma >= 0.0) || l.max < l.offset.max(4) || l.offset == 0 {
            return bad("length model needs median > 0, sigma >= 0, 1 <= offset <= max".into());
        }
        let r = &self.rating;
        let total: f64 = r.distribution.iter().sum();
        if r.distribution.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
            return bad("rating distribution must be 5 probabilities summing to 1".into());
        }
        if !(0.0..=1.0).contains(&r.rated_fraction) || !(r.noise >= 0.0) {
            return bad("rated_fraction must lie in [0, 1] and noise be >= 0".into());
        }
        if self.verbosity.mean_words <= 0.0 {
            return bad("mean_words must be positive".into());
        }
        if self.response_generators.is_empty() {
            return bad("need at least one response generator".into());
        }
        let t = &self.tags;
        for (name, link) in [
            ("compliment", t.compliment),
            ("complaint", t.complaint),
            ("abuse", t.abuse),
            ("repeat", t.repeat),
            ("dev_command", t.dev_command),
            ("red_topic", t.red_topic),
            ("user_init", t.user_init),
            ("sys_init", t.sys_init),
            ("neg_answer", t.neg_answer),
            ("pos_answer", t.pos_answer),
        ] {
            link.validate(name)?;
        }
        if self.pilot_size < 100 {
            return bad("pilot_size must be >= 100".into());
        }
        Ok(())
    }
}

/// Everything about a conversation except its text.
struct Latent {
    z: f64,
    eta: f64,
    length: usize,
    /// (topic index, exchanges), in conversation order.
    blocks: Vec<(usize, usize)>,
    appeal: f64,
    rated: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn weighted_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Split `total` into parts proportional to `weights` by largest remainder,
/// each part at least 1.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let k = weights.len();
    let sum: f64 = weights.iter().sum();
    let spare = total - k;
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut parts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = spare - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts.iter().map(|p| p + 1).collect()
}

fn draw_latent<R: Rng>(rng: &mut R, cfg: &GeneratorConfig) -> Latent {
    let z = normal(rng);
    let nu = normal(rng);
    let eta = normal(rng);
    let l = &cfg.length;
    let length = if rng.random::<f64>() < l.short_fraction {
        rng.random_range(1..=4)
    } else {
        let rho = l.engagement_coupling;
        let g = rho * z + (1.0 - rho * rho).sqrt() * nu;
        let body = (l.median * (l.sigma * g).exp()).floor();
        (l.offset + body.min(l.max as f64) as usize).min(l.max)
    };
    let k = rng
        .random_range(cfg.min_topics..=cfg.max_topics)
        .min(length);
    let mut pop: Vec<f64> = cfg.topics.iter().map(|t| t.popularity).collect();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let i = weighted_index(rng, &pop);
        pop[i] = 0.0;
        chosen.push(i);
    }
    let weights: Vec<f64> = chosen
        .iter()
        .map(|&i| cfg.topics[i].share * rng.random_range(0.5..1.5))
        .collect();
    let parts = apportion(length, &weights);
    let blocks: Vec<(usize, usize)> = chosen.into_iter().zip(parts).collect();
    let appeal = blocks
        .iter()
        .map(|&(t, n)| cfg.topics[t].appeal * n as f64)
        .sum::<f64>()
        / length as f64;
    let rated = rng.random::<f64>() < cfg.rating.rated_fraction;
    Latent {
        z,
        eta,
        length,
        blocks,
        appeal,
        rated,
    }
}

/// Resolved rating mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingCalibration {
    pub coupling: f64,
    /// Cut points between ratings 1|2, 2|3, 3|4 and 4|5.
    pub cuts: [f64; 4],
    /// Rating/capped-length correlation achieved on the pilot sample.
    pub pilot_correlation: f64,
}

impl RatingCalibration {
    fn rating(&self, cfg: &GeneratorConfig, lat: &Latent) -> u8 {
        let u = latent_score(cfg, self.coupling, lat);
        1 + self.cuts.iter().filter(|&&c| u > c).count() as u8
    }
}

fn latent_score(cfg: &GeneratorConfig, coupling: f64, lat: &Latent) -> f64 {
    coupling * lat.z + cfg.rating.appeal_weight * lat.appeal + cfg.rating.noise * lat.eta
}

fn conversation_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pilot streams sit far above any conversation index.
const PILOT_STREAM: u64 = 1 << 48;

fn cuts_and_correlation(cfg: &GeneratorConfig, pilot: &[Latent], coupling: f64) -> ([f64; 4], f64) {
    let mut scores: Vec<f64> = pilot
        .iter()
        .map(|l| latent_score(cfg, coupling, l))
        .collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let mut cuts = [0.0; 4];
    let mut cum = 0.0;
    for (i, c) in cuts.iter_mut().enumerate() {
        cum += cfg.rating.distribution[i];
        let pos = ((cum * sorted.len() as f64).round() as usize).clamp(1, sorted.len() - 1);
        *c = 0.5 * (sorted[pos - 1] + sorted[pos]);
    }
    let ratings: Vec<f64> = scores
        .iter_mut()
        .map(|u| 1.0 + cuts.iter().filter(|&&c| *u > c).count() as f64)
        .collect();
    let lengths: Vec<f64> = pilot
        .iter()
        .map(|l| l.length.min(LENGTH_CAP) as f64)
        .collect();
    (cuts, correlation(&ratings, &lengths))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = crate::stats::mean(a);
    let mb = crate::stats::mean(b);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma) * (x - ma);
        bb += (y - mb) * (y - mb);
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}

/// Cut points (and, with a correlation target, the coupling) from a pilot
/// sample of rated conversations of at least `calibration_min_length`.
pub fn calibrate(cfg: &GeneratorConfig) -> Result<RatingCalibration, SynthError> {
    cfg.validate()?;
    let pilot: Vec<Latent> = (0..cfg.pilot_size as u64)
        .map(|i| draw_latent(&mut conversation_rng(cfg.seed, PILOT_STREAM + i), cfg))
        .filter(|l| l.length >= cfg.calibration_min_length)
        .collect();
    if pilot.len() < 100 {
        return Err(SynthError::InvalidConfig(
            "too few pilot conversations reach calibration_min_length".into(),
        ));
    }
    let coupling = match cfg.rating.target_length_correlation {
        None => cfg.rating.coupling,
        Some(target) => {
            let r_at = |c: f64| cuts_and_correlation(cfg, &pilot, c).1;
            let low = r_at(0.0);
            let mut hi = 1.0;
            while r_at(hi) < target && hi < 1e4 {
                hi *= 2.0;
            }
            let high = r_at(hi);
            if !(target >= low && target <= high) {
                return Err(SynthError::Infeasible { target, low, high });
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if r_at(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let (cuts, pilot_correlation) = cuts_and_correlation(cfg, &pilot, coupling);
    Ok(RatingCalibration {
        coupling,
        cuts,
        pilot_correlation,
    })
}

/// Words that appear in no shipped lexicon phrase.
const FILLER: [&str; 36] = [
    "um",
    "okay",
    "well",
    "maybe",
    "probably",
    "sometimes",
    "weekend",
    "friends",
    "garden",
    "guitar",
    "pizza",
    "honestly",
    "kind",
    "like",
    "think",
    "yeah",
    "sure",
    "hmm",
    "mostly",
    "usually",
    "family",
    "summer",
    "movie",
    "game",
    "reading",
    "cooking",
    "hiking",
    "dogs",
    "cats",
    "morning",
    "evening",
    "work",
    "school",
    "lately",
    "fun",
    "weather",
];

fn filler<R: Rng>(rng: &mut R, n: usize, out: &mut Vec<String>) {
    for _ in 0..n {
        out.push(FILLER[rng.random_range(0..FILLER.len())].to_string());
    }
}

struct Phrases {
    by_label: Vec<(&'static str, Vec<String>)>,
}

impl Phrases {
    fn load() -> Phrases {
        let tagger = TaggerConfig::extended();
        let labels = [
            SDA_COMPLIMENT,
            SDA_COMPLAINT,
            SDA_ABUSE,
            SDA_REPEAT,
            SDA_DEV_COMMAND,
            SDA_RED_TOPIC,
        ];
        Phrases {
            by_label: labels
                .iter()
                .map(|&l| {
                    let lex = tagger.lexicon(l).expect("shipped lexicon");
                    (l, lex.patterns().to_vec())
                })
                .collect(),
        }
    }

    fn pick<R: Rng>(&self, label: &str, rng: &mut R) -> &str {
        let list = &self
            .by_label
            .iter()
            .find(|(l, _)| *l == label)
            .expect("known label")
            .1;
        &list[rng.random_range(0..list.len())]
    }
}

fn render(
    cfg: &GeneratorConfig,
    cal: &RatingCalibration,
    phrases: &Phrases,
    index: usize,
) -> Conversation {
    let mut rng = conversation_rng(cfg.seed, index as u64);
    let lat = draw_latent(&mut rng, cfg);
    let e = logistic(cfg.engagement_slope * lat.z);
    let t = &cfg.tags;
    let len = lat.length;

    let n_compliments = ((t.compliment.at(e) * len as f64).round() as usize).min(len);
    let compliment_at: BTreeSet<usize> = sample(&mut rng, len, n_compliments).into_iter().collect();

    let v = &cfg.verbosity;
    let user_level = v.mean_words * (v.engagement * lat.z + v.user_spread * normal(&mut rng)).exp();

    let mut exchanges = Vec::with_capacity(len);
    for &(topic_idx, n) in &lat.blocks {
        let topic = &cfg.topics[topic_idx];
        let rg = &cfg.response_generators[rng.random_range(0..cfg.response_generators.len())];
        for _ in 0..n {
            let index = exchanges.len();
            let mut sda = BTreeSet::new();
            if compliment_at.contains(&index) {
                sda.insert(SDA_COMPLIMENT.to_string());
            }
            for (label, link) in [
                (SDA_COMPLAINT, t.complaint),
                (SDA_ABUSE, t.abuse),
                (SDA_REPEAT, t.repeat),
                (SDA_DEV_COMMAND, t.dev_command),
                (SDA_RED_TOPIC, t.red_topic),
            ] {
                if rng.random::<f64>() < link.at(e) {
                    sda.insert(label.to_string());
                }
            }
            let mut midas = BTreeSet::new();
            for (label, link) in
                CORE_MIDAS_LABELS
                    .iter()
                    .zip([t.user_init, t.sys_init, t.neg_answer, t.pos_answer])
            {
                if rng.random::<f64>() < link.at(e) {
                    midas.insert(label.to_string());
                }
            }

            let target_words =
                (user_level * topic.verbosity * (v.utterance_spread * normal(&mut rng)).exp())
                    .round()
                    .max(1.0) as usize;
            let mut words: Vec<String> = Vec::new();
            for label in &sda {
                if !words.is_empty() {
                    filler(&mut rng, 1, &mut words);
                }
                words.extend(phrases.pick(label, &mut rng).split(' ').map(String::from));
            }
            let pad = target_words.saturating_sub(words.len());
            let lead = if words.is_empty() {
                pad
            } else {
                rng.random_range(0..=pad)
            };
            let mut text = Vec::with_capacity(words.len() + pad);
            filler(&mut rng, lead, &mut text);
            text.extend(words);
            filler(&mut rng, pad - lead, &mut text);

            exchanges.push(Exchange {
                index,
                topic: topic.name.clone(),
                response_generator: rg.clone(),
                user_text: text.join(" "),
                system_text: format!("let us keep talking about {}", topic.name.replace('_', " ")),
                midas_tags: midas,
                sda_tags: sda,
            });
        }
    }
    Conversation {
        id: format!("synth-{:06}", index),
        rating: lat.rated.then(|| cal.rating(cfg, &lat)),
        exchanges,
    }
}

/// Generate a corpus; conversation `i` depends only on the seed, `i` and the
/// calibration, so output is identical regardless of thread count.
pub fn generate(cfg: &GeneratorConfig) -> Result<Corpus, SynthError> {
    let cal = calibrate(cfg)?;
    Ok(generate_with(cfg, &cal))
}

pub fn generate_with(cfg: &GeneratorConfig, cal: &RatingCalibration) -> Corpus {
    let phrases = Phrases::load();
    let conversations = (0..cfg.n_conversations)
        .into_par_iter()
        .map(|i| render(cfg, cal, &phrases, i))
        .collect();
    Corpus::new(conversations)
}
