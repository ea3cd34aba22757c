//! CART regression trees.
//!
//! Splits minimize the summed squared error of the two children (equivalently
//! the size-weighted child variance). Candidate thresholds are midpoints
//! between consecutive distinct values; a sample goes left when
//! `x[feature] <= threshold`. Among equally good splits the lowest feature
//! index wins, then the lowest threshold. A node becomes a leaf when it hits
//! the depth limit, is pure, has fewer than `2 * min_leaf` samples, or no
//! split reduces the error.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::linalg::Matrix;

/// A split must beat the incumbent by this fraction of the parent's squared
/// error to replace it. Keeps tie-breaking stable under rounding.
pub const SPLIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
        impurity: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        samples: usize,
        impurity: f64,
    },
}

impl Node {
    pub fn value(&self) -> f64 {
        match self {
            Node::Leaf { value, .. } | Node::Split { value, .. } => *value,
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            Node::Leaf { samples, .. } | Node::Split { samples, .. } => *samples,
        }
    }

    /// Mean squared deviation from the node mean.
    pub fn impurity(&self) -> f64 {
        match self {
            Node::Leaf { impurity, .. } | Node::Split { impurity, .. } => *impurity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl Regressor for RegressionTree {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value()
    }
}

impl RegressionTree {
    /// Index of the leaf `x` falls into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Depth of the deepest node (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Features used by at least one split, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    /// Total squared-error reduction attributed to each feature.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split {
                feature,
                left,
                right,
                samples,
                impurity,
                ..
            } = n
            {
                let l = &self.nodes[*left];
                let r = &self.nodes[*right];
                imp[*feature] += *samples as f64 * impurity
                    - l.samples() as f64 * l.impurity()
                    - r.samples() as f64 * r.impurity();
            }
        }
        imp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

/// Fit a tree on every row of `x`.
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    max_depth: Option<usize>,
    min_leaf: usize,
) -> RegressionTree {
    let rows: Vec<usize> = (0..x.rows()).collect();
    build_tree(
        x,
        y,
        &rows,
        TreeParams {
            max_depth,
            min_leaf,
            max_features: None,
        },
        // Never consulted: every feature is examined at every node.
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    )
}

struct ScanContext<'a> {
    ys: &'a [f64],
    mean: f64,
    min_leaf: usize,
    tol: f64,
}

impl ScanContext<'_> {
    /// Update `best` with the best split of feature `f` over the node
    /// positions `ord` (sorted by the feature). Earlier candidates win ties.
    fn scan(&self, f: usize, col: &[f64], ord: &[u32], best: &mut Option<Best>) {
        let n = ord.len();
        let mut left_sum = 0.0;
        for i in 1..n {
            let prev = ord[i - 1] as usize;
            left_sum += self.ys[prev] - self.mean;
            if i < self.min_leaf || n - i < self.min_leaf {
                continue;
            }
            let a = col[prev];
            let b = col[ord[i] as usize];
            if a == b {
                continue;
            }
            let nl = i as f64;
            let nr = (n - i) as f64;
            // With centered targets, the SSE reduction of a split is
            // S_l^2 / n_l + S_r^2 / n_r and S_r = -S_l.
            let gain = left_sum * left_sum * (1.0 / nl + 1.0 / nr);
            let better = match best {
                None => gain > self.tol,
                Some(bst) => gain > bst.gain + self.tol,
            };
            if better {
                let mid = 0.5 * (a + b);
                *best = Some(Best {
                    feature: f,
                    split_at: i,
                    threshold: if mid >= b { a } else { mid },
                    gain,
                });
            }
        }
    }
}

struct Best {
    feature: usize,
    /// Position within the node range where the right child starts.
    split_at: usize,
    threshold: f64,
    gain: f64,
}

/// Fit a tree on the given rows (duplicates allowed, as for a bootstrap
/// sample). `rng` is only consulted when `max_features` is below the
/// feature count.
pub fn build_tree<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let d = x.cols();
    let m = rows.len();
    let min_leaf = params.min_leaf.max(1);
    let k = params.max_features.unwrap_or(d).clamp(1, d.max(1));
    if m == 0 {
        return RegressionTree {
            nodes: vec![Node::Leaf {
                value: 0.0,
                samples: 0,
                impurity: 0.0,
            }],
            n_features: d,
        };
    }

    // Column-major copy of the sample, plus one sorted position list per
    // feature. Every node owns the same range [lo, hi) in all lists.
    let values: Vec<Vec<f64>> = (0..d)
        .map(|f| rows.iter().map(|&r| x.get(r, f)).collect())
        .collect();
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mut order: Vec<Vec<u32>> = (0..d)
        .map(|f| {
            let mut o: Vec<u32> = (0..m as u32).collect();
            o.sort_by(|&a, &b| values[f][a as usize].total_cmp(&values[f][b as usize]));
            o
        })
        .collect();
    let mut goes_left = vec![false; m];
    let mut scratch: Vec<u32> = Vec::with_capacity(m);
    let mut candidates: Vec<usize> = Vec::with_capacity(d);
    let mut perm: Vec<usize> = (0..d).collect();

    let mut nodes = vec![Node::Leaf {
        value: 0.0,
        samples: 0,
        impurity: 0.0,
    }];
    // (node id, lo, hi, depth)
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    while let Some((id, lo, hi, depth)) = stack.pop() {
        let n = hi - lo;
        let positions: &[u32] = if d > 0 { &order[0][lo..hi] } else { &[] };
        let (sum, lo_y, hi_y) = if d > 0 {
            positions
                .iter()
                .fold((0.0, f64::INFINITY, f64::NEG_INFINITY), |(s, a, b), &p| {
                    let v = ys[p as usize];
                    (s + v, a.min(v), b.max(v))
                })
        } else {
            (ys.iter().sum(), 0.0, 0.0)
        };
        let mean = sum / n as f64;
        let sse: f64 = if d > 0 {
            positions
                .iter()
                .map(|&p| (ys[p as usize] - mean).powi(2))
                .sum()
        } else {
            ys.iter().map(|v| (v - mean).powi(2)).sum()
        };
        let leaf = Node::Leaf {
            value: mean,
            samples: n,
            impurity: sse / n as f64,
        };

        let depth_reached = params.max_depth.is_some_and(|md| depth >= md);
        if d == 0 || depth_reached || n < 2 * min_leaf || lo_y == hi_y {
            nodes[id] = leaf;
            continue;
        }

        let tol = SPLIT_TOLERANCE * sse;
        let mut best: Option<Best> = None;
        let ctx = ScanContext {
            ys: &ys,
            mean,
            min_leaf,
            tol,
        };
        if k < d {
            // Draw features in random order and examine the first k that
            // vary within the node; keep drawing past k only while no
            // valid split has been found.
            perm.shuffle(rng);
            let varies = |f: usize| {
                let ord = &order[f][lo..hi];
                values[f][ord[0] as usize] != values[f][ord[n - 1] as usize]
            };
            candidates.clear();
            let mut next = 0;
            while next < d && candidates.len() < k {
                if varies(perm[next]) {
                    candidates.push(perm[next]);
                }
                next += 1;
            }
            candidates.sort_unstable();
            for &f in &candidates {
                ctx.scan(f, &values[f], &order[f][lo..hi], &mut best);
            }
            while best.is_none() && next < d {
                let f = perm[next];
                next += 1;
                if varies(f) {
                    ctx.scan(f, &values[f], &order[f][lo..hi], &mut best);
                }
            }
        } else {
            for f in 0..d {
                ctx.scan(f, &values[f], &order[f][lo..hi], &mut best);
            }
        }

        let Some(best) = best else {
            nodes[id] = leaf;
            continue;
        };

        let mid = lo + best.split_at;
        for (i, &p) in order[best.feature][lo..hi].iter().enumerate() {
            goes_left[p as usize] = i < best.split_at;
        }
        for f in 0..d {
            if f == best.feature {
                continue;
            }
            scratch.clear();
            let range = &mut order[f][lo..hi];
            scratch.extend(range.iter().copied().filter(|&p| goes_left[p as usize]));
            scratch.extend(range.iter().copied().filter(|&p| !goes_left[p as usize]));
            range.copy_from_slice(&scratch);
        }

        let left = nodes.len();
        let right = left + 1;
        nodes.push(leaf.clone());
        nodes.push(leaf.clone());
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            value: mean,
            samples: n,
            impurity: sse / n as f64,
        };
        stack.push((right, mid, hi, depth + 1));
        stack.push((left, lo, mid, depth + 1));
    }
    RegressionTree {
        nodes,
        n_features: d,
    }
}
