//! Readable dumps of fitted regression trees: an indented text outline and
//! Graphviz DOT.

use std::fmt::Write;

use serde::Serialize;

use super::EvalError;
use crate::regressors::tree::Node;
use crate::regressors::{ModelParams, RegressionTree, TrainedModel};

/// A node as exported. Nodes deeper than the depth limit are omitted; a
/// split at the limit is reported with `truncated = true`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportedNode {
    pub id: usize,
    pub depth: usize,
    pub feature: Option<String>,
    pub threshold: Option<f64>,
    pub impurity: f64,
    pub samples: usize,
    pub value: f64,
    pub truncated: bool,
    pub children: Option<(usize, usize)>,
}

/// The tree of a tree model, or member `member` of a forest.
pub fn tree_of(model: &TrainedModel, member: Option<usize>) -> Result<&RegressionTree, EvalError> {
    match (&model.params, member) {
        (ModelParams::Tree(t), None | Some(0)) => Ok(t),
        (ModelParams::Forest(f), m) => {
            let i = m.unwrap_or(0);
            f.trees.get(i).ok_or_else(|| {
                EvalError::NotATree(format!("forest has {} trees, no member {i}", f.trees.len()))
            })
        }
        (ModelParams::Tree(_), Some(i)) => Err(EvalError::NotATree(format!(
            "member {i} requested from a single tree"
        ))),
        _ => Err(EvalError::NotATree(format!(
            "model family {} has no tree to export",
            model.spec.family()
        ))),
    }
}

/// Pre-order walk (left before right) down to `depth_limit`.
pub fn export_nodes(
    tree: &RegressionTree,
    names: &[String],
    depth_limit: usize,
) -> Vec<ExportedNode> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((i, depth)) = stack.pop() {
        let node = &tree.nodes[i];
        let mut e = ExportedNode {
            id: i,
            depth,
            feature: None,
            threshold: None,
            impurity: node.impurity(),
            samples: node.samples(),
            value: node.value(),
            truncated: false,
            children: None,
        };
        if let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            e.feature = Some(
                names
                    .get(*feature)
                    .cloned()
                    .unwrap_or_else(|| format!("x{feature}")),
            );
            e.threshold = Some(*threshold);
            if depth < depth_limit {
                e.children = Some((*left, *right));
                stack.push((*right, depth + 1));
                stack.push((*left, depth + 1));
            } else {
                e.truncated = true;
            }
        }
        out.push(e);
    }
    out
}

pub fn tree_to_text(tree: &RegressionTree, names: &[String], depth_limit: usize) -> String {
    let mut s = String::new();
    for n in export_nodes(tree, names, depth_limit) {
        let indent = "  ".repeat(n.depth);
        match (&n.feature, n.threshold) {
            (Some(f), Some(t)) => {
                let _ = write!(
                    s,
                    "{indent}[{}] {f} <= {t:.6}  (mse={:.4}, samples={}, value={:.4})",
                    n.id, n.impurity, n.samples, n.value
                );
                if n.truncated {
                    s.push_str(" ...");
                }
            }
            _ => {
                let _ = write!(
                    s,
                    "{indent}[{}] leaf value={:.4}  (mse={:.4}, samples={})",
                    n.id, n.value, n.impurity, n.samples
                );
            }
        }
        s.push('\n');
    }
    s
}

pub fn tree_to_dot(tree: &RegressionTree, names: &[String], depth_limit: usize) -> String {
    let mut s = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for n in export_nodes(tree, names, depth_limit) {
        let label = match (&n.feature, n.threshold) {
            (Some(f), Some(t)) => format!(
                "{} <= {t:.4}\\nmse = {:.3}\\nsamples = {}\\nvalue = {:.3}{}",
                escape(f),
                n.impurity,
                n.samples,
                n.value,
                if n.truncated { "\\n..." } else { "" }
            ),
            _ => format!(
                "mse = {:.3}\\nsamples = {}\\nvalue = {:.3}",
                n.impurity, n.samples, n.value
            ),
        };
        let _ = writeln!(s, "  n{} [label=\"{label}\"];", n.id);
        if let Some((l, r)) = n.children {
            let _ = writeln!(s, "  n{} -> n{l} [label=\"yes\"];", n.id);
            let _ = writeln!(s, "  n{} -> n{r} [label=\"no\"];", n.id);
        }
    }
    s.push_str("}\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
