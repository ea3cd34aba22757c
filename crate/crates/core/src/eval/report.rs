//! CSV and aligned-text renderings of evaluation results. Output depends only
//! on the values passed in, so identical runs give identical bytes.

use super::experiment::{AblationResult, EvalReport};
use super::metrics::SIGNIFICANCE;
use super::CorrelationReport;

fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p <= SIGNIFICANCE => "**",
        _ => "",
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or(String::new(), |v| format!("{v:.prec$}"))
}

fn prefix(k: Option<usize>) -> String {
    k.map_or("all".to_string(), |k| k.to_string())
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn reports_csv(reports: &[EvalReport], run_hash: &str) -> String {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.target.clone(),
                r.feature_set.to_string(),
                prefix(r.prefix_k),
                r.n.to_string(),
                format!("{:.6}", r.mse),
                format!("{:.6}", r.r2),
                opt(r.pearson_r, 6),
                r.p_value.map_or(String::new(), |p| format!("{p:.3e}")),
                stars(r.p_value).to_string(),
                run_hash.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "model",
            "target",
            "feature_set",
            "prefix_k",
            "n",
            "mse",
            "r2",
            "pearson_r",
            "p_value",
            "sig",
            "run_config",
        ],
        rows,
    )
}

/// Left-aligns the first column and right-aligns the rest.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|j| {
            rows.iter()
                .map(|r| r[j].len())
                .chain([header[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate() {
            if j == 0 {
                s.push_str(&format!("{c:<w$}", w = widths[j]));
            } else {
                s.push_str(&format!("  {c:>w$}", w = widths[j]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Model, features, target, prefix, MSE, R², r (with `**` at p <= .01).
pub fn reports_table(reports: &[EvalReport], run_hash: &str) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.feature_set.to_string(),
                r.target.clone(),
                prefix(r.prefix_k),
                format!("{:.3}", r.mse),
                format!("{:.3}", r.r2),
                r.pearson_r
                    .map_or("n/a".to_string(), |v| format!("{v:.3}{}", stars(r.p_value))),
            ]
        })
        .collect();
    let mut out = aligned(
        &["Model", "Features", "Target", "Prefix", "MSE", "R2", "r"],
        &rows,
    );
    out.push_str(&format!("** p <= .01; run config {run_hash}\n"));
    out
}

pub fn ablations_csv(results: &[AblationResult], run_hash: &str) -> String {
    let rows = results
        .iter()
        .map(|a| {
            vec![
                a.report.model.clone(),
                a.report.target.clone(),
                a.ablated.join(";"),
                format!("{:.6}", a.base.r2),
                format!("{:.6}", a.report.mse),
                format!("{:.6}", a.report.r2),
                opt(a.report.pearson_r, 6),
                stars(a.report.p_value).to_string(),
                format!("{:.6}", a.delta_r2()),
                run_hash.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "model",
            "target",
            "ablated",
            "base_r2",
            "mse",
            "r2",
            "pearson_r",
            "sig",
            "delta_r2",
            "run_config",
        ],
        rows,
    )
}

pub fn correlations_csv(report: &CorrelationReport, run_hash: &str) -> String {
    let rows = report
        .pairs
        .iter()
        .map(|c| {
            vec![
                format!("{}/{}", c.a, c.b),
                format!("{:.6}", c.stats.r),
                format!("{:.3e}", c.stats.p),
                stars(Some(c.stats.p)).to_string(),
                c.stats.n.to_string(),
                run_hash.to_string(),
            ]
        })
        .collect();
    csv_string(&["metrics", "r", "p_value", "sig", "n", "run_config"], rows)
}

pub fn correlations_table(report: &CorrelationReport) -> String {
    let rows: Vec<Vec<String>> = report
        .pairs
        .iter()
        .map(|c| {
            vec![
                format!("{}/{}", title(&c.a), title(&c.b)),
                format!("{:.3}{}", c.stats.r, stars(Some(c.stats.p))),
            ]
        })
        .collect();
    aligned(&["Metrics", "Correlation"], &rows)
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}
