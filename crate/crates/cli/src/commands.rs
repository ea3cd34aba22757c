//! One method per subcommand. Inputs and outputs are the files named in the
//! run configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use paradise_core::corpus::{
    filter_min_length, parse_corpus, parse_splits, split_corpus, write_splits, Corpus,
};
use paradise_core::eval::report::{
    ablations_csv, aligned, correlations_csv, correlations_table, reports_csv, reports_table,
};
use paradise_core::eval::{
    ablate_tables, correlate_metrics, evaluate_predictions, table_targets, tree_of, tree_to_dot,
    tree_to_text, AblationResult, ExperimentCell, SplitTables,
};
use paradise_core::features::{extract_table, FeatureSchema, FeatureSet, FeatureTable};
use paradise_core::regressors::{train_model, TrainedModel};
use paradise_core::synth::{generate, GeneratorConfig};
use paradise_core::tagging::{tag_corpus, TaggerConfig};
use paradise_core::topicscore::{
    score_topics_with, ScoreVariant, TopicScoreOptions, TopicScoreReport,
};
use serde::{Deserialize, Serialize};

use crate::config::{Preset, RunConfig};
use crate::plot::{bar_chart, Series};

const FEATURES_FORMAT_VERSION: u32 = 1;

/// Written next to the feature CSV; the CSV alone does not say which
/// feature set or prefix produced it.
#[derive(Debug, Serialize, Deserialize)]
struct FeatureMeta {
    format_version: u32,
    feature_set: FeatureSet,
    prefix_k: Option<usize>,
    fingerprint: String,
    rows: usize,
    schema: FeatureSchema,
}

pub struct Run {
    pub cfg: RunConfig,
    pub hash: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes())
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn meta_path(features: &Path) -> PathBuf {
    features.with_extension("meta.json")
}

/// Unrated conversations cannot enter rating-weighted statistics.
fn rated_only(corpus: Corpus) -> Corpus {
    let n = corpus.len();
    let rated: Vec<_> = corpus
        .conversations
        .into_iter()
        .filter(|c| c.rating.is_some())
        .collect();
    if rated.len() < n {
        log::warn!("skipping {} unrated conversations", n - rated.len());
    }
    Corpus::new(rated)
}

impl Run {
    pub fn new(cfg: RunConfig) -> Run {
        let hash = cfg.hash();
        Run { cfg, hash }
    }

    fn load_corpus(&self, path: &Path) -> Result<Corpus> {
        let corpus = parse_corpus(open(path, "corpus")?)
            .with_context(|| format!("in {}", path.display()))?;
        log::info!(
            "read {} conversations from {}",
            corpus.len(),
            path.display()
        );
        Ok(corpus)
    }

    fn write_corpus(&self, corpus: &Corpus, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        corpus
            .write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("cannot write {}", path.display()))?;
        log::info!("wrote {} conversations to {}", corpus.len(), path.display());
        Ok(())
    }

    /// Writes `<reports>/<stem>.csv`, optionally `<stem>.txt`, and the
    /// effective configuration as `run-<hash>.toml`.
    fn write_report(&self, stem: &str, csv: &str, table: Option<&str>) -> Result<()> {
        let dir = &self.cfg.paths.reports;
        write_file(&dir.join(format!("{stem}.csv")), csv)?;
        if let Some(t) = table {
            write_file(&dir.join(format!("{stem}.txt")), t)?;
            print!("{t}");
        }
        write_file(
            &dir.join(format!("run-{}.toml", self.hash)),
            &self.cfg.to_toml(),
        )?;
        log::info!("wrote {}/{stem}.csv", dir.display());
        Ok(())
    }

    fn generator(&self) -> Result<GeneratorConfig> {
        let s = &self.cfg.synth;
        let mut g = match &s.generator {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read generator config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid generator config {}", path.display()))?
            }
            None => match s.preset {
                Preset::Default => GeneratorConfig::default(),
                Preset::ComplimentsOnly => GeneratorConfig::compliments_only(),
                Preset::NoiseFree => GeneratorConfig::noise_free(),
            },
        };
        if let Some(n) = s.n_conversations {
            g.n_conversations = n;
        }
        g.seed = self.cfg.seed;
        Ok(g)
    }

    pub fn synth(&self, dump: bool) -> Result<()> {
        let g = self.generator()?;
        if dump {
            print!("{}", toml::to_string(&g)?);
            return Ok(());
        }
        let corpus = generate(&g)?;
        self.write_corpus(&corpus, &self.cfg.paths.raw)
    }

    pub fn ingest(&self) -> Result<()> {
        let p = &self.cfg.paths;
        let raw = self.load_corpus(&p.raw)?;
        let min = self.cfg.ingest.min_length;
        let kept = filter_min_length(&raw, min);
        log::info!(
            "dropped {} conversations shorter than {min} exchanges",
            raw.len() - kept.len()
        );
        let [a, b, c] = self.cfg.ingest.ratios;
        let split = split_corpus(&kept, (a, b, c), self.cfg.seed)?;
        let assignment = split
            .split_assignment
            .as_ref()
            .expect("split_corpus assigns splits");
        self.write_corpus(&split, &p.corpus)?;
        let mut w = create(&p.splits)?;
        write_splits(assignment, &mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("cannot write {}", p.splits.display()))?;
        Ok(())
    }

    pub fn tag(&self, out: Option<&Path>) -> Result<()> {
        let t = &self.cfg.tag;
        let mut tagger = match &t.lexicon_dir {
            Some(dir) => TaggerConfig::load_dir(dir, t.match_mode)
                .with_context(|| format!("in lexicon directory {}", dir.display()))?,
            None if t.extended => TaggerConfig::extended(),
            None => TaggerConfig::default(),
        };
        tagger.match_mode = t.match_mode;
        let input = &self.cfg.paths.corpus;
        let corpus = self.load_corpus(input)?;
        let tagged = tag_corpus(&corpus, &tagger, t.overwrite);
        self.write_corpus(&tagged, out.unwrap_or(input))
    }

    pub fn featurize(&self) -> Result<()> {
        let p = &self.cfg.paths;
        let f = &self.cfg.features;
        let corpus = self.load_corpus(&p.corpus)?;
        let schema = FeatureSchema::for_corpus(&corpus);
        let table = extract_table(&corpus, &schema, f.feature_set, f.prefix_k)?;
        let mut w = create(&p.features)?;
        table.write_csv(&mut w)?;
        w.flush()?;
        let meta = FeatureMeta {
            format_version: FEATURES_FORMAT_VERSION,
            feature_set: f.feature_set,
            prefix_k: f.prefix_k,
            fingerprint: table.fingerprint(),
            rows: table.len(),
            schema,
        };
        write_file(
            &meta_path(&p.features),
            &(serde_json::to_string_pretty(&meta)? + "\n"),
        )?;
        log::info!(
            "wrote {} x {} {} features to {}",
            table.len(),
            table.names.len(),
            f.feature_set,
            p.features.display()
        );
        Ok(())
    }

    fn load_tables(&mut self) -> Result<SplitTables> {
        let p = self.cfg.paths.clone();
        let meta_file = meta_path(&p.features);
        let meta: FeatureMeta = serde_json::from_reader(open(&meta_file, "feature metadata")?)
            .with_context(|| format!("invalid feature metadata {}", meta_file.display()))?;
        ensure!(
            meta.format_version == FEATURES_FORMAT_VERSION,
            "{} has format version {}, expected {FEATURES_FORMAT_VERSION}",
            meta_file.display(),
            meta.format_version
        );
        let table = FeatureTable::read_csv(
            open(&p.features, "features")?,
            meta.feature_set,
            meta.prefix_k,
        )
        .with_context(|| format!("in {}", p.features.display()))?;
        ensure!(
            table.fingerprint() == meta.fingerprint && table.len() == meta.rows,
            "{} does not match its metadata {}",
            p.features.display(),
            meta_file.display()
        );
        let f = &mut self.cfg.features;
        if (f.feature_set, f.prefix_k) != (meta.feature_set, meta.prefix_k) {
            // the table decides; record what was actually used
            log::info!(
                "{} holds {} features (prefix {:?})",
                p.features.display(),
                meta.feature_set,
                meta.prefix_k
            );
            f.feature_set = meta.feature_set;
            f.prefix_k = meta.prefix_k;
            self.hash = self.cfg.hash();
        }
        let splits = parse_splits(open(&p.splits, "splits")?)
            .with_context(|| format!("in {}", p.splits.display()))?;
        Ok(SplitTables::partition_by(&table, |id| {
            splits.get(id).copied()
        })?)
    }

    pub fn train(&mut self) -> Result<()> {
        let spec = self.cfg.model.spec(self.cfg.seed)?;
        let target = self.cfg.model.target()?;
        let tables = self.load_tables()?;
        let target = target.fitted(&tables.train.capped_length)?;
        let (train, y) = table_targets(&tables.train, &target)?;
        let (dev, y_dev) = table_targets(&tables.dev, &target)?;
        let dev_arg = (!dev.is_empty()).then_some((&dev, y_dev.as_slice()));
        let model = train_model(&spec, target, &train, &y, dev_arg)?;
        let path = &self.cfg.paths.model;
        write_file(path, &model.to_json())?;
        log::info!(
            "trained {} for {target} on {} conversations; wrote {}",
            spec.label(),
            train.len(),
            path.display()
        );
        Ok(())
    }

    fn load_model(path: &Path) -> Result<TrainedModel> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read model {}", path.display()))?;
        TrainedModel::from_json(&text).with_context(|| format!("invalid model {}", path.display()))
    }

    pub fn evaluate(&mut self, models: &[PathBuf], stem: &str) -> Result<()> {
        let default = [self.cfg.paths.model.clone()];
        let models = if models.is_empty() {
            &default[..]
        } else {
            models
        };
        // fail on a missing model before reading any tables
        let loaded = models
            .iter()
            .map(|p| Run::load_model(p).map(|m| (p, m)))
            .collect::<Result<Vec<_>>>()?;
        let tables = self.load_tables()?;
        let mut reports = Vec::new();
        for (path, model) in loaded {
            let test = &tables.test;
            ensure!(
                (model.feature_set, model.prefix_k) == (test.feature_set, test.prefix_k),
                "model {} was trained on {} features (prefix {:?}) but {} holds {} features (prefix {:?})",
                path.display(),
                model.feature_set,
                model.prefix_k,
                self.cfg.paths.features.display(),
                test.feature_set,
                test.prefix_k
            );
            let (rows, truth) = table_targets(test, &model.target)?;
            let pred = model
                .predict_table(&rows)
                .with_context(|| format!("model {}", path.display()))?;
            reports.push(evaluate_predictions(
                &model.spec.label(),
                &model.target,
                model.feature_set,
                model.prefix_k,
                &pred,
                &truth,
            )?);
        }
        self.write_report(
            stem,
            &reports_csv(&reports, &self.hash),
            Some(&reports_table(&reports, &self.hash)),
        )
    }

    pub fn ablate(&mut self, each: bool) -> Result<()> {
        let features = self.cfg.ablate.features.clone();
        if features.is_empty() {
            bail!("nothing to ablate; pass --drop or set ablate.features");
        }
        let spec = self.cfg.model.spec(self.cfg.seed)?;
        let target = self.cfg.model.target()?;
        let tables = self.load_tables()?;
        let cell = ExperimentCell {
            spec,
            feature_set: tables.train.feature_set,
            target,
            prefix_k: tables.train.prefix_k,
        };
        let groups: Vec<Vec<String>> = if each {
            features.iter().map(|f| vec![f.clone()]).collect()
        } else {
            vec![features.clone()]
        };
        let results = groups
            .iter()
            .map(|g| ablate_tables(&tables, &cell, g, self.cfg.seed))
            .collect::<Result<Vec<AblationResult>, _>>()?;
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|a| {
                vec![
                    a.ablated.join(", "),
                    format!("{:.4}", a.base.r2),
                    format!("{:.4}", a.report.r2),
                    format!("{:+.4}", a.delta_r2()),
                ]
            })
            .collect();
        let table = format!(
            "{}\n{}",
            cell.describe(),
            aligned(&["Ablated", "Base R²", "R²", "ΔR²"], &rows)
        );
        self.write_report(
            "ablation",
            &ablations_csv(&results, &self.hash),
            Some(&table),
        )
    }

    pub fn correlate(&self) -> Result<()> {
        let corpus = rated_only(self.load_corpus(&self.cfg.paths.corpus)?);
        let report = correlate_metrics(&corpus)?;
        let table = format!("{}n = {}\n", correlations_table(&report), report.n);
        self.write_report(
            "correlations",
            &correlations_csv(&report, &self.hash),
            Some(&table),
        )
    }

    fn topic_reports(
        &self,
        corpus: &Corpus,
        variants: &[ScoreVariant],
    ) -> Result<Vec<TopicScoreReport>> {
        let opts = TopicScoreOptions {
            exclude: self.cfg.topics.exclude.clone(),
        };
        let variants = if variants.is_empty() {
            &ScoreVariant::ALL[..]
        } else {
            variants
        };
        Ok(variants
            .iter()
            .map(|&v| score_topics_with(corpus, v, &opts))
            .collect::<Result<_, _>>()?)
    }

    pub fn score_topics(&self, variants: &[ScoreVariant], svg: Option<&Path>) -> Result<()> {
        let corpus = rated_only(self.load_corpus(&self.cfg.paths.corpus)?);
        let reports = self.topic_reports(&corpus, variants)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "topic", "raw_sum", "z", "rank", "run_config"])?;
        for r in &reports {
            for s in &r.scores {
                let rank = r.rank_of(&s.topic).expect("topic is in its own report");
                w.write_record([
                    r.variant.to_string(),
                    s.topic.clone(),
                    format!("{:.6}", s.raw_sum),
                    format!("{:.6}", s.z),
                    rank.to_string(),
                    self.hash.clone(),
                ])?;
            }
        }
        let csv = String::from_utf8(w.into_inner()?)?;
        let header: Vec<String> = std::iter::once("Topic".to_string())
            .chain(reports.iter().map(|r| format!("{} z (rank)", r.variant)))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = reports[0]
            .ranked()
            .iter()
            .map(|s| {
                std::iter::once(s.topic.clone())
                    .chain(reports.iter().map(|r| {
                        format!(
                            "{:.3} ({})",
                            r.z_of(&s.topic).unwrap_or(f64::NAN),
                            r.rank_of(&s.topic).unwrap_or(0)
                        )
                    }))
                    .collect()
            })
            .collect();
        self.write_report("topic_scores", &csv, Some(&aligned(&header, &rows)))?;
        if let Some(path) = svg {
            write_file(path, &topic_chart(&reports))?;
        }
        Ok(())
    }

    pub fn export_tree(
        &self,
        member: Option<usize>,
        depth: usize,
        dot: bool,
        out: Option<&Path>,
    ) -> Result<()> {
        let model = Run::load_model(&self.cfg.paths.model)?;
        let tree = tree_of(&model, member)?;
        let text = if dot {
            tree_to_dot(tree, &model.feature_names, depth)
        } else {
            tree_to_text(tree, &model.feature_names, depth)
        };
        match out {
            Some(p) => write_file(p, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    pub fn plot(&self, length: bool, rating: bool, topics: bool) -> Result<()> {
        let corpus = self.load_corpus(&self.cfg.paths.corpus)?;
        let dir = &self.cfg.paths.reports;
        if length {
            const WIDTH: usize = 5;
            let cap = paradise_core::corpus::LENGTH_CAP;
            let bins = cap.div_ceil(WIDTH);
            let mut counts = vec![0usize; bins];
            for c in &corpus.conversations {
                let l = c.capped_length();
                if l > 0 {
                    counts[(l - 1) / WIDTH] += 1;
                }
            }
            let labels: Vec<String> = (0..bins)
                .map(|b| {
                    let hi = ((b + 1) * WIDTH).min(cap);
                    let plus = if hi == cap { "+" } else { "" };
                    format!("{}-{hi}{plus}", b * WIDTH + 1)
                })
                .collect();
            self.histogram(
                dir,
                "length_histogram",
                "Conversation length (exchanges)",
                &labels,
                &counts,
            )?;
        }
        if rating {
            let mut counts = vec![0usize; 5];
            for r in corpus.conversations.iter().filter_map(|c| c.rating) {
                counts[usize::from(r) - 1] += 1;
            }
            let labels: Vec<String> = (1..=5).map(|r| r.to_string()).collect();
            self.histogram(dir, "rating_histogram", "User rating", &labels, &counts)?;
        }
        if topics {
            let reports = self.topic_reports(&rated_only(corpus), &[])?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["topic".to_string()];
            header.extend(reports.iter().map(|r| r.variant.to_string()));
            header.push("run_config".into());
            w.write_record(&header)?;
            for (i, s) in reports[0].scores.iter().enumerate() {
                let mut rec = vec![s.topic.clone()];
                rec.extend(reports.iter().map(|r| format!("{:.6}", r.scores[i].z)));
                rec.push(self.hash.clone());
                w.write_record(&rec)?;
            }
            write_file(
                &dir.join("topic_z.csv"),
                &String::from_utf8(w.into_inner()?)?,
            )?;
            write_file(&dir.join("topic_z.svg"), &topic_chart(&reports))?;
        }
        write_file(
            &dir.join(format!("run-{}.toml", self.hash)),
            &self.cfg.to_toml(),
        )?;
        log::info!("wrote plots to {}", dir.display());
        Ok(())
    }

    fn histogram(
        &self,
        dir: &Path,
        stem: &str,
        title: &str,
        labels: &[String],
        counts: &[usize],
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin", "count", "run_config"])?;
        for (l, c) in labels.iter().zip(counts) {
            w.write_record([l.as_str(), &c.to_string(), &self.hash])?;
        }
        write_file(
            &dir.join(format!("{stem}.csv")),
            &String::from_utf8(w.into_inner()?)?,
        )?;
        let series = [Series {
            name: "conversations".into(),
            values: counts.iter().map(|&c| c as f64).collect(),
        }];
        write_file(
            &dir.join(format!("{stem}.svg")),
            &bar_chart(title, "Conversations", labels, &series),
        )
    }
}

/// Grouped z-score bars, topics in descending order of the first variant.
fn topic_chart(reports: &[TopicScoreReport]) -> String {
    let topics: Vec<String> = reports[0]
        .ranked()
        .iter()
        .map(|s| s.topic.clone())
        .collect();
    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            name: r.variant.to_string(),
            values: topics.iter().map(|t| r.z_of(t).unwrap_or(0.0)).collect(),
        })
        .collect();
    bar_chart("Topic scores", "z-score", &topics, &series)
}
