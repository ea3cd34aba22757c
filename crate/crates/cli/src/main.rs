//! `paradise`: run the performance-modeling pipeline stage by stage.
//!
//! Every stage reads and writes plain files (JSONL corpus, CSV splits and
//! features, JSON models, CSV reports) whose locations come from the run
//! configuration. Flags override the configuration; the merged result is
//! hashed and recorded with every report.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paradise_core::features::FeatureSet;
use paradise_core::regressors::{Family, TargetKind};
use paradise_core::tagging::MatchMode;
use paradise_core::topicscore::ScoreVariant;

use config::{Preset, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "paradise",
    version,
    about = "Performance modeling for open-domain dialogue logs"
)]
struct Cli {
    /// Run configuration (TOML). Missing keys take their defaults.
    #[arg(long, env = "PARADISE_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Seed for splitting, generation and seeded model families.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    feature_set: Option<FeatureSet>,
    /// rating, length, median-split or binned.
    #[arg(long, global = true)]
    target: Option<TargetKind>,
    /// Use only the first K exchanges of each conversation.
    #[arg(long, global = true)]
    prefix_k: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic conversation log.
    Synth(SynthArgs),
    /// Validate a log, drop short conversations and assign splits.
    Ingest(IngestArgs),
    /// Add lexicon-based dialogue-act tags.
    Tag(TagArgs),
    /// Extract the feature table.
    Featurize(FeaturizeArgs),
    /// Rank topics by rating-weighted exposure.
    ScoreTopics(ScoreTopicsArgs),
    /// Fit one model on the train split.
    Train(TrainArgs),
    /// Score saved models on the test split.
    Evaluate(EvaluateArgs),
    /// Retrain without some features and report the change in R².
    Ablate(AblateArgs),
    /// Correlate rating, length, compliments and complaints.
    Correlate(CorrelateArgs),
    /// Print a tree model (or one forest member) as text or Graphviz dot.
    ExportTree(ExportTreeArgs),
    /// Histograms of length and rating, and topic z-scores, as SVG and CSV.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Generator configuration (TOML); replaces the preset.
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective generator configuration as TOML and exit.
    #[arg(long)]
    dump_generator: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    min_length: Option<usize>,
    /// Train, dev and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    ratios: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TagArgs {
    /// Corpus to tag; defaults to the ingested corpus, tagged in place.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of `<label>.txt` lexicons, one pattern per line.
    #[arg(long)]
    lexicon_dir: Option<PathBuf>,
    /// Built-in compliment and complaint lexicons only.
    #[arg(long)]
    core_only: bool,
    #[arg(long, value_enum)]
    match_mode: Option<MatchModeArg>,
    /// Replace existing tags instead of adding to them.
    #[arg(long)]
    overwrite: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MatchModeArg {
    WholeUtterance,
    WordBoundary,
}

impl From<MatchModeArg> for MatchMode {
    fn from(m: MatchModeArg) -> Self {
        match m {
            MatchModeArg::WholeUtterance => MatchMode::WholeUtterance,
            MatchModeArg::WordBoundary => MatchMode::WordBoundary,
        }
    }
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreTopicsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Variants to compute; all three by default.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<ScoreVariant>,
    /// Topics left out of the population.
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    /// Also draw the z-scores as an SVG bar chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Feature table CSV.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
}

/// Hyperparameters left unset take the family's per-target defaults.
#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    family: Option<Family>,
    /// Ridge and lasso penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Tree and forest depth limit; 0 means unbounded.
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    /// Fraction of features tried at each forest split.
    #[arg(long)]
    feat_frac: Option<f64>,
    #[arg(long)]
    bootstrap: Option<bool>,
    /// SVR box constraint.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// RBF width; the scale heuristic when unset.
    #[arg(long)]
    gamma: Option<f64>,
    /// MLP hidden layer widths, e.g. 100,50.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Model files; repeat for one report row each.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Report file stem inside the reports directory.
    #[arg(long, default_value = "evaluation")]
    name: String,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Features to remove, e.g. sda_compliment,length_median.
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    /// One ablation per listed feature rather than one for all of them.
    #[arg(long)]
    each: bool,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TreeFormat {
    Text,
    Dot,
}

#[derive(Args, Debug)]
struct ExportTreeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Forest member to export.
    #[arg(long)]
    member: Option<usize>,
    /// Levels below the root to print.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: TreeFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PlotKind {
    Length,
    Rating,
    Topics,
    All,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    kind: PlotKind,
    /// Output directory; the reports directory by default.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Cli {
    /// The configuration file (or defaults) with every flag applied.
    fn effective_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.features.feature_set, self.feature_set);
        if self.prefix_k.is_some() {
            cfg.features.prefix_k = self.prefix_k;
        }
        if let Some(t) = &self.target {
            cfg.model.target = Some(t.name().to_string());
        }
        let p = &mut cfg.paths;
        match &self.command {
            Command::Synth(a) => {
                set(&mut p.raw, a.out.clone());
                set(&mut cfg.synth.preset, a.preset);
                if a.generator.is_some() {
                    cfg.synth.generator = a.generator.clone();
                }
                if a.n.is_some() {
                    cfg.synth.n_conversations = a.n;
                }
            }
            Command::Ingest(a) => {
                set(&mut p.raw, a.input.clone());
                set(&mut p.corpus, a.out.clone());
                set(&mut p.splits, a.splits.clone());
                set(&mut cfg.ingest.min_length, a.min_length);
                if let Some(r) = &a.ratios {
                    cfg.ingest.ratios = [r[0], r[1], r[2]];
                }
            }
            Command::Tag(a) => {
                set(&mut p.corpus, a.input.clone());
                if a.lexicon_dir.is_some() {
                    cfg.tag.lexicon_dir = a.lexicon_dir.clone();
                }
                if a.core_only {
                    cfg.tag.extended = false;
                }
                set(&mut cfg.tag.match_mode, a.match_mode.map(Into::into));
                cfg.tag.overwrite |= a.overwrite;
            }
            Command::Featurize(a) => {
                set(&mut p.corpus, a.input.clone());
                set(&mut p.features, a.out.clone());
            }
            Command::ScoreTopics(a) => {
                set(&mut p.corpus, a.input.clone());
                set(&mut cfg.topics.exclude, a.exclude.clone());
            }
            Command::Train(a) => {
                a.table.apply(p);
                set(&mut p.model, a.out.clone());
                a.model.apply(&mut cfg.model);
            }
            Command::Evaluate(a) => {
                a.table.apply(p);
                if let [only] = a.model.as_slice() {
                    p.model = only.clone();
                }
            }
            Command::Ablate(a) => {
                a.table.apply(p);
                a.model.apply(&mut cfg.model);
                if !a.drop.is_empty() {
                    cfg.ablate.features = a.drop.clone();
                }
            }
            Command::Correlate(a) => set(&mut p.corpus, a.input.clone()),
            Command::ExportTree(a) => set(&mut p.model, a.model.clone()),
            Command::Plot(a) => {
                set(&mut p.corpus, a.input.clone());
                set(&mut p.reports, a.out_dir.clone());
            }
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl TableArgs {
    fn apply(&self, p: &mut config::Paths) {
        set(&mut p.features, self.features.clone());
        set(&mut p.splits, self.splits.clone());
    }
}

impl ModelArgs {
    fn apply(&self, m: &mut config::ModelStage) {
        if let Some(f) = self.family {
            m.family = Some(f.to_string());
        }
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if self.$field.is_some() {
                    m.$field = self.$field.clone();
                })*
            };
        }
        merge!(
            lambda,
            max_depth,
            min_leaf,
            n_trees,
            feat_frac,
            bootstrap,
            c,
            epsilon,
            gamma,
            hidden,
            max_epochs,
            learning_rate,
            batch_size,
            patience
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cfg = cli.effective_config()?;
    let mut run = commands::Run::new(cfg);
    log::debug!("run config {}", run.hash);
    match &cli.command {
        Command::Synth(a) => run.synth(a.dump_generator),
        Command::Ingest(_) => run.ingest(),
        Command::Tag(a) => run.tag(a.out.as_deref()),
        Command::Featurize(_) => run.featurize(),
        Command::ScoreTopics(a) => run.score_topics(&a.variant, a.svg.as_deref()),
        Command::Train(_) => run.train(),
        Command::Evaluate(a) => run.evaluate(&a.model, &a.name),
        Command::Ablate(a) => run.ablate(a.each),
        Command::Correlate(_) => run.correlate(),
        Command::ExportTree(a) => run.export_tree(
            a.member,
            a.depth,
            a.format == TreeFormat::Dot,
            a.out.as_deref(),
        ),
        Command::Plot(a) => run.plot(
            matches!(a.kind, PlotKind::Length | PlotKind::All),
            matches!(a.kind, PlotKind::Rating | PlotKind::All),
            matches!(a.kind, PlotKind::Topics | PlotKind::All),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
