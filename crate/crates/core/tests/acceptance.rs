//! Acceptance suite. Each test checks one criterion and prints a single
//! PASS/FAIL line before asserting, so a full run lists every verdict.

mod common;

use std::time::Instant;

use common::*;
use paradise_core::corpus::{
    filter_min_length, parse_corpus_str, split_corpus, Corpus, DEFAULT_MIN_LENGTH,
};
use paradise_core::eval::report::reports_csv;
use paradise_core::eval::*;
use paradise_core::features::*;
use paradise_core::regressors::*;
use paradise_core::stats::median;
use paradise_core::synth::{generate, GeneratorConfig};
use paradise_core::tagging::SDA_COMPLIMENT;
use rand::Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn modeled_corpus(cfg: &GeneratorConfig) -> Corpus {
    let raw = generate(cfg).expect("generator config is valid");
    split_corpus(
        &filter_min_length(&raw, DEFAULT_MIN_LENGTH),
        (0.8, 0.1, 0.1),
        cfg.seed,
    )
    .expect("corpus is large")
}

fn seeded(mut cfg: GeneratorConfig, seed: u64) -> GeneratorConfig {
    cfg.seed = seed;
    cfg
}

/// Collects failures without stopping at the first one.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn finish(self, criterion: usize, name: &str, detail: String) {
        let ok = self.failures.is_empty();
        let detail = if ok {
            detail
        } else {
            format!("{detail}; failed: {}", self.failures.join("; "))
        };
        verdict(criterion, name, ok, &detail);
        assert!(ok, "criterion {criterion} failed: {}", detail);
    }
}

#[test]
fn criterion_1_solver_oracles() {
    let start = Instant::now();
    let mut c = Checks::default();

    let mut worst_ols: f64 = 0.0;
    for seed in 0..20 {
        let mut g = rng(1000 + seed);
        let x = random_matrix(&mut g, 50, 5);
        let y: Vec<f64> = (0..50).map(|_| g.random_range(-3.0..3.0)).collect();
        let fit = fit_linear(&x, &y, LinearFamily::Ols, 0.0).unwrap();
        let (beta, b) = normal_equations(&x, &y);
        for (a, o) in fit
            .coefficients
            .iter()
            .zip(&beta)
            .chain([(&fit.intercept, &b)])
        {
            worst_ols = worst_ols.max((a - o).abs());
        }
    }
    c.check(worst_ols < 1e-8, format!("OLS deviation {worst_ols:e}"));

    let mut tree_matches = 0;
    for seed in 0..20 {
        let mut g = rng(2000 + seed);
        let x = random_matrix(&mut g, 20, 3);
        let y: Vec<f64> = (0..20).map(|_| g.random_range(0.0..10.0)).collect();
        for depth in 1..=2 {
            let tree = fit_tree(&x, &y, Some(depth), 1);
            let oracle = exhaustive_tree(&x, &y, &(0..20).collect::<Vec<_>>(), 0, depth);
            if same_tree(&tree, 0, &oracle) {
                tree_matches += 1;
            }
        }
    }
    c.check(
        tree_matches == 40,
        format!("CART matched {tree_matches}/40"),
    );

    let mut worst_grad: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let mut g = rng(3000 + seed);
        let x = random_matrix(&mut g, 3, 4);
        let t: Vec<f64> = (0..3).map(|_| g.random_range(-1.0..1.0)).collect();
        let mut model = Mlp::init(4, &[6, 3], seed);
        for l in &mut model.layers {
            for b in &mut l.bias {
                *b = g.random_range(0.05..0.2);
            }
        }
        let rows = [0, 1, 2];
        let (_, grad) = model.loss_and_gradient(&x, &rows, &t);
        let h = 1e-6;
        for li in 0..model.layers.len() {
            let n_w = model.layers[li].weights.len();
            let n_b = model.layers[li].bias.len();
            for k in 0..n_w + n_b {
                let perturbed = |delta: f64| {
                    let mut m = model.clone();
                    if k < n_w {
                        m.layers[li].weights[k] += delta;
                    } else {
                        m.layers[li].bias[k - n_w] += delta;
                    }
                    m.loss_and_gradient(&x, &rows, &t).0
                };
                let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let an = if k < n_w {
                    grad.weights[li][k]
                } else {
                    grad.bias[li][k - n_w]
                };
                let scale = fd.abs().max(an.abs());
                // near-zero entries are compared absolutely
                let err = if scale > 1e-6 {
                    (fd - an).abs() / scale
                } else {
                    (fd - an).abs() * 1e3
                };
                worst_grad = worst_grad.max(err);
                checked += 1;
            }
        }
    }
    c.check(
        worst_grad < 1e-4,
        format!("MLP gradient relative error {worst_grad:e}"),
    );

    let mut worst_kkt: f64 = 0.0;
    for (seed, cost) in [(0u64, 0.1), (1, 1.0), (2, 10.0)] {
        let mut g = rng(4000 + seed);
        let x = random_matrix(&mut g, 60, 3);
        let y: Vec<f64> = (0..60)
            .map(|i| {
                (2.0 * x.get(i, 0)).sin()
                    + x.get(i, 1) * x.get(i, 2)
                    + 0.1 * g.random_range(-1.0..1.0)
            })
            .collect();
        let params = SvrParams {
            c: cost,
            epsilon: 0.05,
            ..SvrParams::default()
        };
        let m = fit_svr(&x, &y, &params).unwrap();
        worst_kkt = worst_kkt.max(svr_kkt_violation(&m, &x, &y, &params));
    }
    c.check(
        worst_kkt <= 1e-3,
        format!("SVR KKT violation {worst_kkt:e}"),
    );

    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 60.0, format!("runtime {secs:.1}s"));
    c.finish(
        1,
        "solver oracles",
        format!(
            "OLS max dev {worst_ols:.1e}, CART {tree_matches}/40 exact, MLP grad rel err {worst_grad:.1e} over {checked} params, SVR KKT {worst_kkt:.1e}, {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_2_metric_correctness() {
    let mut c = Checks::default();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-10;

    // pred = [2,3,4,4], truth = [2,2,5,3]: residual squares 0,1,1,1; truth
    // deviations -1,-1,2,0; pred deviations -1.25,-0.25,0.75,0.75.
    let pred = [2.0, 3.0, 4.0, 4.0];
    let truth = [2.0, 2.0, 5.0, 3.0];
    c.check(close(mse(&pred, &truth).unwrap(), 0.75), "mse fixture");
    c.check(close(r_squared(&pred, &truth).unwrap(), 0.5), "r2 fixture");
    let p = pearson(&pred, &truth).unwrap();
    c.check(close(p.r, 3.0 / (2.75f64 * 6.0).sqrt()), "pearson fixture");
    c.check(
        close(mse(&[0.0, 0.0], &[3.0, -3.0]).unwrap(), 9.0),
        "mse [0,0] vs [3,-3]",
    );

    let mean_pred = [3.0; 4];
    c.check(
        r_squared(&mean_pred, &truth).unwrap() == 0.0,
        "mean predictor r2",
    );

    let mut worst_identity: f64 = 0.0;
    for seed in 0..10 {
        let mut g = rng(5000 + seed);
        let x = random_matrix(&mut g, 200, 4);
        let y: Vec<f64> = (0..200)
            .map(|i| x.get(i, 0) - 2.0 * x.get(i, 3) + g.random_range(-1.0..1.0))
            .collect();
        for family in [LinearFamily::Ols, LinearFamily::Ridge, LinearFamily::Lasso] {
            let m = fit_linear(&x, &y, family, 0.0).unwrap();
            let pred = m.predict(&x);
            let r2 = r_squared(&pred, &y).unwrap();
            let r = pearson(&pred, &y).unwrap().r;
            worst_identity = worst_identity.max((r2 - r * r).abs());
        }
    }
    c.check(
        worst_identity < 1e-9,
        format!("R2 = r^2 identity off by {worst_identity:e}"),
    );

    let mut worst_p: f64 = 0.0;
    for (seed, n, r) in [(0, 20, 0.5), (1, 20, -0.3), (2, 4, 0.9), (3, 11, 0.1)] {
        let (a, b) = correlated_pair(n, r, seed);
        let stats = pearson(&a, &b).unwrap();
        c.check((stats.r - r).abs() < 1e-12, format!("constructed r={r}"));
        let df = (n - 2) as f64;
        let t = stats.r * (df / (1.0 - stats.r * stats.r)).sqrt();
        worst_p = worst_p.max((stats.p - t_two_tailed_quadrature(t, df)).abs());
    }
    let fixture_p = t_two_tailed_quadrature(p.r * (2.0 / (1.0 - p.r * p.r)).sqrt(), 2.0);
    worst_p = worst_p.max((p.p - fixture_p).abs());
    c.check(worst_p < 1e-6, format!("p-value vs quadrature {worst_p:e}"));

    c.finish(
        2,
        "metric correctness",
        format!(
            "fixtures exact to 1e-10, identity dev {worst_identity:.1e}, p-value dev {worst_p:.1e}"
        ),
    );
}

#[test]
fn criterion_3_feature_invariants() {
    let mut c = Checks::default();
    let schema = FeatureSchema {
        response_generators: vec!["a".into(), "b".into()],
        ..FeatureSchema::default()
    };

    let topics = ["movies", "music", "comics", "intro", "cooking"];
    let texts = [
        "yes",
        "",
        "i don't care",
        "tell me about the new one",
        "wow that's cool",
    ];
    let tags = ["sda_compliment", "sda_complaint", "user_init", "neg_answer"];
    let mut g = rng(6000);
    let mut worst_dup: f64 = 0.0;
    for i in 0..300 {
        let len = g.random_range(1..40);
        let turns: Vec<(&str, &str)> = (0..len)
            .map(|_| {
                (
                    topics[g.random_range(0..topics.len())],
                    texts[g.random_range(0..texts.len())],
                )
            })
            .collect();
        let mut conv = conversation(&format!("c{i}"), Some(3), &turns);
        for e in &mut conv.exchanges {
            e.response_generator = if g.random_bool(0.5) {
                "a".into()
            } else {
                "b".into()
            };
            for t in tags {
                if g.random_bool(0.2) {
                    if t.starts_with("sda") {
                        e.sda_tags.insert(t.into());
                    } else {
                        e.midas_tags.insert(t.into());
                    }
                }
            }
        }
        let mut doubled = conv.clone();
        doubled.exchanges = conv
            .exchanges
            .iter()
            .flat_map(|e| [e.clone(), e.clone()])
            .collect();
        for (k, e) in doubled.exchanges.iter_mut().enumerate() {
            e.index = k;
        }
        let a = extract_features(&conv, &schema, FeatureSet::Dependent, None).unwrap();
        let b = extract_features(&doubled, &schema, FeatureSet::Dependent, None).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            worst_dup = worst_dup.max((x - y).abs());
        }
    }
    c.check(
        worst_dup < 1e-12,
        format!("duplication changed a feature by {worst_dup:e}"),
    );

    let corpus = modeled_corpus(&GeneratorConfig {
        n_conversations: 3000,
        ..GeneratorConfig::default()
    });
    let tables = SplitTables::build(
        &corpus,
        &FeatureSchema::for_corpus(&corpus),
        FeatureSet::Dependent,
        None,
    )
    .unwrap();
    let train = &tables.train;
    let s = Standardizer::fit_matrix(&train.names, &train.x).unwrap();
    let z = s.apply_matrix(&train.x).unwrap();
    let mut worst_moment: f64 = 0.0;
    let mut degenerate = 0;
    for j in 0..z.cols() {
        let col = z.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if s.std[j] > 0.0 {
            worst_moment = worst_moment.max(mean.abs()).max((std - 1.0).abs());
        } else {
            degenerate += 1;
            c.check(
                col.iter().all(|&v| v == 0.0),
                format!("degenerate column {j} not zeroed"),
            );
        }
    }
    c.check(
        worst_moment < 1e-9,
        format!("standardized moments off by {worst_moment:e}"),
    );

    // 41 exchanges with 13 on comics and 5 on movies.
    let mut turns = Vec::new();
    turns.extend(std::iter::repeat_n(("intro", "hello there"), 6));
    turns.extend(std::iter::repeat_n(
        ("comics", "captain marvel is great"),
        13,
    ));
    turns.extend(std::iter::repeat_n(("movies", "i don't care"), 5));
    turns.extend(std::iter::repeat_n(("animals", "cats"), 17));
    let conv41 = conversation("fig", Some(4), &turns);
    let v = extract_features(
        &conv41,
        &FeatureSchema::default(),
        FeatureSet::Dependent,
        None,
    )
    .unwrap();
    c.check(
        v.get("topic_freq_comics") == Some(13.0 / 41.0),
        "topic_freq_comics = 13/41",
    );
    c.check(
        v.get("topic_freq_movies") == Some(5.0 / 41.0),
        "topic_freq_movies = 5/41",
    );

    c.finish(
        3,
        "feature invariants",
        format!(
            "duplication max change {worst_dup:.1e} over 300 conversations, standardized moments dev {worst_moment:.1e} ({degenerate} constant columns zeroed), 13/41 and 5/41 reproduced"
        ),
    );
}

#[test]
fn criterion_4_pattern_reproduction() {
    let start = Instant::now();
    let mut c = Checks::default();
    let length_forest = Family::Forest.default_spec(&TargetKind::CappedLength, 0);
    let rating_forest = Family::Forest.default_spec(&TargetKind::Rating, 0);
    let cell = |spec: &ModelSpec, set, target, prefix_k| ExperimentCell {
        spec: spec.clone(),
        feature_set: set,
        target,
        prefix_k,
    };
    let mut grid = vec![
        cell(
            &length_forest,
            FeatureSet::Independent,
            TargetKind::CappedLength,
            None,
        ),
        cell(
            &rating_forest,
            FeatureSet::Independent,
            TargetKind::Rating,
            None,
        ),
        cell(
            &rating_forest,
            FeatureSet::Dependent,
            TargetKind::Rating,
            None,
        ),
    ];
    let prefix_targets = [
        TargetKind::MedianSplit { median: None },
        TargetKind::BinnedLength,
    ];
    for k in [10, 15] {
        for target in prefix_targets {
            grid.push(cell(
                &length_forest,
                FeatureSet::Independent,
                target,
                Some(k),
            ));
        }
    }

    let mut summary = Vec::new();
    for seed in SEEDS {
        let corpus = modeled_corpus(&seeded(GeneratorConfig::default(), seed));
        let reports = run_experiment(&corpus, &grid, seed).unwrap();
        let (length, rating_i, rating_d) = (reports[0].r2, reports[1].r2, reports[2].r2);
        c.check(
            length >= 0.80,
            format!("seed {seed}: length R2 {length:.3}"),
        );
        c.check(
            rating_i <= 0.25,
            format!("seed {seed}: rating R2 {rating_i:.3}"),
        );
        c.check(
            rating_d <= 0.25,
            format!("seed {seed}: dependent rating R2 {rating_d:.3}"),
        );
        for (j, target) in prefix_targets.iter().enumerate() {
            let (r10, r15) = (reports[3 + j].r2, reports[5 + j].r2);
            c.check(
                r15 >= r10,
                format!("seed {seed}: {target} R2(15) {r15:.3} < R2(10) {r10:.3}"),
            );
        }

        let tables = SplitTables::build(
            &corpus,
            &FeatureSchema::for_corpus(&corpus),
            FeatureSet::Dependent,
            None,
        )
        .unwrap();
        let tree_spec = Family::Tree.default_spec(&TargetKind::CappedLength, seed);
        let (model, _) = fit_and_evaluate(&tree_spec, TargetKind::CappedLength, &tables).unwrap();
        let root = &export_nodes(tree_of(&model, None).unwrap(), &model.feature_names, 0)[0];
        let root_feature = root.feature.clone().unwrap_or_default();
        c.check(
            root_feature == SDA_COMPLIMENT,
            format!("seed {seed}: tree root splits on {root_feature}"),
        );

        summary.push(format!(
            "seed {seed}: length {length:.3}, rating {rating_i:.3}/{rating_d:.3}, median-split {:.3}->{:.3}, binned {:.3}->{:.3}, root {root_feature}",
            reports[3].r2, reports[5].r2, reports[4].r2, reports[6].r2
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 600.0, format!("runtime {secs:.0}s"));
    for line in &summary {
        announce(&format!("  {line}"));
    }
    c.finish(
        4,
        "pattern reproduction",
        format!("5 seeds at n=30000, {secs:.0}s"),
    );
}

#[test]
fn criterion_5_calibration() {
    let mut c = Checks::default();
    let mut parts = Vec::new();
    for seed in SEEDS {
        let corpus = modeled_corpus(&seeded(GeneratorConfig::default(), seed));
        let ratings: Vec<f64> = corpus
            .conversations
            .iter()
            .map(|c| f64::from(c.rating.unwrap()))
            .collect();
        let lengths: Vec<f64> = corpus
            .conversations
            .iter()
            .map(|c| c.capped_length() as f64)
            .collect();
        let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
        let med = median(&ratings).unwrap();
        let r = pearson(&ratings, &lengths).unwrap().r;
        c.check(
            (mean - 3.7).abs() <= 0.1,
            format!("seed {seed}: mean {mean:.3}"),
        );
        c.check(med == 4.0, format!("seed {seed}: median {med}"));
        c.check((r - 0.134).abs() <= 0.05, format!("seed {seed}: r {r:.4}"));
        parts.push(format!("seed {seed} mean {mean:.3} median {med} r {r:.3}"));
    }
    c.finish(5, "calibration reproduction", parts.join(", "));
}

/// Generate, serialize, parse, split and evaluate a small grid covering
/// every family. Returns the JSONL, the report CSV and one serialized model.
fn pipeline(seed: u64) -> (String, String, String) {
    let cfg = GeneratorConfig {
        n_conversations: 1500,
        seed,
        ..GeneratorConfig::default()
    };
    let jsonl = generate(&cfg).unwrap().to_jsonl_string();
    let parsed = parse_corpus_str(&jsonl).unwrap();
    let corpus = split_corpus(
        &filter_min_length(&parsed, DEFAULT_MIN_LENGTH),
        (0.8, 0.1, 0.1),
        seed,
    )
    .unwrap();
    let mut grid = Vec::new();
    for family in Family::ALL {
        let target = TargetKind::CappedLength;
        let spec = match family.default_spec(&target, seed) {
            ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams { n_trees: 10, ..p }),
            ModelSpec::Mlp(p) => ModelSpec::Mlp(MlpParams {
                max_epochs: 50,
                ..p
            }),
            ModelSpec::Ols => ModelSpec::Ridge { lambda: 1e-6 },
            s => s,
        };
        grid.push(ExperimentCell {
            spec,
            feature_set: FeatureSet::Independent,
            target,
            prefix_k: Some(10),
        });
    }
    let reports = run_experiment(&corpus, &grid, seed).unwrap();
    let tables = SplitTables::build(
        &corpus,
        &FeatureSchema::for_corpus(&corpus),
        FeatureSet::Dependent,
        None,
    )
    .unwrap();
    let (model, _) = fit_and_evaluate(&grid[4].spec, TargetKind::Rating, &tables).unwrap();
    (jsonl, reports_csv(&reports, "fixed"), model.to_json())
}

#[test]
fn criterion_6_pipeline_determinism() {
    let mut c = Checks::default();
    let (jsonl_a, csv_a, model_a) = pipeline(11);
    let (jsonl_b, csv_b, model_b) = pipeline(11);
    c.check(jsonl_a == jsonl_b, "corpus JSONL differs between runs");
    c.check(csv_a == csv_b, "report CSV differs between runs");
    c.check(model_a == model_b, "serialized model differs between runs");
    let (_, csv_other, _) = pipeline(12);
    c.check(csv_other != csv_a, "a different seed gave the same report");

    let corpus = parse_corpus_str(&jsonl_a).unwrap();
    let again = corpus.to_jsonl_string();
    c.check(
        again == jsonl_a,
        "JSONL re-serialization is not byte-identical",
    );
    c.check(
        parse_corpus_str(&again).unwrap() == corpus,
        "JSONL round trip changed the corpus",
    );
    let model = TrainedModel::from_json(&model_a).unwrap();
    c.check(
        model.to_json() == model_a,
        "model JSON round trip is not byte-identical",
    );

    c.finish(
        6,
        "pipeline determinism",
        format!(
            "{} report bytes identical over two runs, JSONL round trip lossless ({} conversations)",
            csv_a.len(),
            corpus.len()
        ),
    );
}

#[test]
fn criterion_7_ablation_sanity() {
    let mut c = Checks::default();
    let mut parts = Vec::new();
    for seed in [0, 1] {
        let corpus = modeled_corpus(&seeded(GeneratorConfig::compliments_only(), seed));
        let cell = ExperimentCell {
            spec: Family::Forest.default_spec(&TargetKind::CappedLength, seed),
            feature_set: FeatureSet::Independent,
            target: TargetKind::CappedLength,
            prefix_k: None,
        };
        let tables = SplitTables::build(
            &corpus,
            &FeatureSchema::for_corpus(&corpus),
            cell.feature_set,
            None,
        )
        .unwrap();
        let signal = ablate_tables(&tables, &cell, &[SDA_COMPLIMENT.to_string()], seed).unwrap();
        let irrelevant =
            ablate_tables(&tables, &cell, &["length_median".to_string()], seed).unwrap();
        c.check(
            signal.report.r2 < 0.1,
            format!(
                "seed {seed}: without compliments R2 {:.3}",
                signal.report.r2
            ),
        );
        c.check(
            irrelevant.delta_r2().abs() < 0.02,
            format!(
                "seed {seed}: length_median delta {:+.4}",
                irrelevant.delta_r2()
            ),
        );
        parts.push(format!(
            "seed {seed} base {:.3}, -sda_compliment {:.3}, -length_median {:+.4}",
            signal.base.r2,
            signal.report.r2,
            irrelevant.delta_r2()
        ));
    }
    c.finish(7, "ablation sanity", parts.join(", "));
}
