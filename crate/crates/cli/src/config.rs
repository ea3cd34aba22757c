//! The run configuration: a TOML file whose every field has a default.
//! Command-line flags are applied on top; the merged result is what gets
//! hashed and recorded next to every report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paradise_core::features::FeatureSet;
use paradise_core::regressors::{
    Family, ForestParams, Gamma, MlpParams, ModelSpec, SvrParams, TargetKind,
};
use paradise_core::tagging::MatchMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthStage,
    pub ingest: IngestStage,
    pub tag: TagStage,
    pub features: FeatureStage,
    pub model: ModelStage,
    pub ablate: AblateStage,
    pub topics: TopicStage,
}

/// Interchange files. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Unfiltered conversation log (synth output, ingest input).
    pub raw: PathBuf,
    /// Validated, filtered corpus.
    pub corpus: PathBuf,
    pub splits: PathBuf,
    /// Feature matrix CSV; its metadata sits next to it as `.meta.json`.
    pub features: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            raw: "raw.jsonl".into(),
            corpus: "corpus.jsonl".into(),
            splits: "splits.csv".into(),
            features: "features.csv".into(),
            model: "model.json".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Default,
    ComplimentsOnly,
    NoiseFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthStage {
    pub preset: Preset,
    /// A full generator configuration (TOML); replaces the preset.
    pub generator: Option<PathBuf>,
    pub n_conversations: Option<usize>,
}

impl Default for SynthStage {
    fn default() -> Self {
        SynthStage {
            preset: Preset::Default,
            generator: None,
            n_conversations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestStage {
    pub min_length: usize,
    pub ratios: [f64; 3],
}

impl Default for IngestStage {
    fn default() -> Self {
        IngestStage {
            min_length: paradise_core::corpus::DEFAULT_MIN_LENGTH,
            ratios: [0.8, 0.1, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagStage {
    /// Directory of `<label>.txt` lexicons; the built-in ones when absent.
    pub lexicon_dir: Option<PathBuf>,
    /// Built-in set: compliments and complaints only, or all six SDA labels.
    pub extended: bool,
    pub match_mode: MatchMode,
    /// Replace existing tags rather than adding to them.
    pub overwrite: bool,
}

impl Default for TagStage {
    fn default() -> Self {
        TagStage {
            lexicon_dir: None,
            extended: true,
            match_mode: MatchMode::default(),
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureStage {
    pub feature_set: FeatureSet,
    pub prefix_k: Option<usize>,
}

impl Default for FeatureStage {
    fn default() -> Self {
        FeatureStage {
            feature_set: FeatureSet::Independent,
            prefix_k: None,
        }
    }
}

/// Family, target and hyperparameters. Unset hyperparameters take the
/// per-target family defaults. `max_depth = 0` means unbounded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelStage {
    pub family: Option<String>,
    pub target: Option<String>,
    pub lambda: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub n_trees: Option<usize>,
    pub feat_frac: Option<f64>,
    pub bootstrap: Option<bool>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub max_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
}

pub const DEFAULT_FAMILY: Family = Family::Forest;

impl ModelStage {
    pub fn family(&self) -> Result<Family> {
        match &self.family {
            None => Ok(DEFAULT_FAMILY),
            Some(f) => f.parse().map_err(anyhow::Error::msg),
        }
    }

    pub fn target(&self) -> Result<TargetKind> {
        match &self.target {
            None => Ok(TargetKind::CappedLength),
            Some(t) => t.parse().map_err(anyhow::Error::msg),
        }
    }

    /// The fully specified model: family defaults overridden by every set
    /// hyperparameter. Setting one that the family does not use is an error.
    pub fn spec(&self, seed: u64) -> Result<ModelSpec> {
        let family = self.family()?;
        let depth = |d: usize| if d == 0 { None } else { Some(d) };
        let spec = match family.default_spec(&self.target()?, seed) {
            ModelSpec::Ols => ModelSpec::Ols,
            ModelSpec::Ridge { lambda } => ModelSpec::Ridge {
                lambda: self.lambda.unwrap_or(lambda),
            },
            ModelSpec::Lasso { lambda } => ModelSpec::Lasso {
                lambda: self.lambda.unwrap_or(lambda),
            },
            ModelSpec::Tree {
                max_depth,
                min_leaf,
            } => ModelSpec::Tree {
                max_depth: self.max_depth.map_or(max_depth, depth),
                min_leaf: self.min_leaf.unwrap_or(min_leaf),
            },
            ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams {
                n_trees: self.n_trees.unwrap_or(p.n_trees),
                max_depth: self.max_depth.map_or(p.max_depth, depth),
                min_leaf: self.min_leaf.unwrap_or(p.min_leaf),
                feat_frac: self.feat_frac.unwrap_or(p.feat_frac),
                bootstrap: self.bootstrap.unwrap_or(p.bootstrap),
                seed,
            }),
            ModelSpec::Svr(p) => ModelSpec::Svr(SvrParams {
                c: self.c.unwrap_or(p.c),
                epsilon: self.epsilon.unwrap_or(p.epsilon),
                gamma: self.gamma.map_or(p.gamma, Gamma::Value),
                ..p
            }),
            ModelSpec::Mlp(p) => ModelSpec::Mlp(MlpParams {
                hidden: self.hidden.clone().unwrap_or(p.hidden),
                max_epochs: self.max_epochs.unwrap_or(p.max_epochs),
                learning_rate: self.learning_rate.unwrap_or(p.learning_rate),
                batch_size: self.batch_size.unwrap_or(p.batch_size),
                patience: self.patience.unwrap_or(p.patience),
                seed,
            }),
        };
        let unused: Vec<&str> = self
            .set_hyperparameters()
            .into_iter()
            .filter(|h| !uses(family, h))
            .collect();
        if !unused.is_empty() {
            bail!("{} does not take {}", family, unused.join(", "));
        }
        Ok(spec)
    }

    fn set_hyperparameters(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |set: bool, name| {
            if set {
                v.push(name)
            }
        };
        add(self.lambda.is_some(), "lambda");
        add(self.max_depth.is_some(), "max_depth");
        add(self.min_leaf.is_some(), "min_leaf");
        add(self.n_trees.is_some(), "n_trees");
        add(self.feat_frac.is_some(), "feat_frac");
        add(self.bootstrap.is_some(), "bootstrap");
        add(self.c.is_some(), "c");
        add(self.epsilon.is_some(), "epsilon");
        add(self.gamma.is_some(), "gamma");
        add(self.hidden.is_some(), "hidden");
        add(self.max_epochs.is_some(), "max_epochs");
        add(self.learning_rate.is_some(), "learning_rate");
        add(self.batch_size.is_some(), "batch_size");
        add(self.patience.is_some(), "patience");
        v
    }
}

fn uses(family: Family, hyperparameter: &str) -> bool {
    let allowed: &[&str] = match family {
        Family::Ols => &[],
        Family::Ridge | Family::Lasso => &["lambda"],
        Family::Tree => &["max_depth", "min_leaf"],
        Family::Forest => &["max_depth", "min_leaf", "n_trees", "feat_frac", "bootstrap"],
        Family::Svr => &["c", "epsilon", "gamma"],
        Family::Mlp => &[
            "hidden",
            "max_epochs",
            "learning_rate",
            "batch_size",
            "patience",
        ],
    };
    allowed.contains(&hyperparameter)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateStage {
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicStage {
    pub exclude: Vec<String>,
}

impl Default for TopicStage {
    fn default() -> Self {
        TopicStage {
            exclude: vec!["intro".into()],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))[..16].to_string()
    }
}
