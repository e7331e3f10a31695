//! Bagged classification trees grown best-first on Gini impurity.

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bad_model_file;
use crate::data::round_half_up;
use crate::error::Result;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_leaves: usize,
    /// Fraction of rows, drawn without replacement, each tree is grown on.
    pub row_subsample: f64,
    /// Minimum number of training rows per leaf.
    pub min_leaf_weight: f64,
    /// Additive smoothing of leaf class frequencies.
    pub laplace_alpha: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_leaves: 31,
            row_subsample: 0.9,
            min_leaf_weight: 2.0,
            laplace_alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    /// Smoothed class distribution of every leaf, indexed by leaf id.
    leaf_probs: Vec<Vec<f64>>,
}

impl Tree {
    fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { leaf } => return *leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn counts_of(labels: &[usize], rows: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    rows.iter().for_each(|&r| counts[labels[r]] += 1);
    counts
}

fn purity(counts: &[usize], n: usize) -> f64 {
    // Σ c² / n; the weighted Gini impurity is n - purity.
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

/// Split of `rows` with the largest decrease in weighted Gini impurity.
fn best_split(x: &Array2<f64>, labels: &[usize], rows: &[usize], n_classes: usize, min_leaf: usize) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let parent = counts_of(labels, rows, n_classes);
    if parent.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let base = purity(&parent, n);
    let mut best: Option<SplitCandidate> = None;
    let mut sorted = rows.to_vec();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for f in 0..x.ncols() {
        sorted.copy_from_slice(rows);
        sorted.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for i in 0..n - 1 {
            let y = labels[sorted[i]];
            left[y] += 1;
            right[y] -= 1;
            let n_left = i + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let (a, b) = (x[[sorted[i], f]], x[[sorted[i + 1], f]]);
            if a >= b {
                continue;
            }
            let gain = purity(&left, n_left) + purity(&right, n - n_left) - base;
            if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                let mid = 0.5 * (a + b);
                best = Some(SplitCandidate {
                    gain,
                    feature: f,
                    threshold: if mid < b { mid } else { a },
                });
            }
        }
    }
    best
}

fn grow_tree(x: &Array2<f64>, labels: &[usize], rows: Vec<usize>, n_classes: usize, p: &ForestParams) -> Tree {
    let min_leaf = (p.min_leaf_weight.ceil() as usize).max(1);
    let mut nodes = vec![Node::Leaf { leaf: usize::MAX }];
    // Open leaves: (node index, rows, best split).
    let mut open: Vec<(usize, Vec<usize>, Option<SplitCandidate>)> = Vec::new();
    let root_split = best_split(x, labels, &rows, n_classes, min_leaf);
    open.push((0, rows, root_split));
    let mut n_leaves = 1;
    while n_leaves < p.max_leaves.max(1) {
        // Largest gain first; ties go to the earliest-created leaf.
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, (node, _, s))| s.as_ref().map(|s| (i, *node, s.gain)))
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.1.cmp(&a.1)));
        let Some((i, node, _)) = pick else { break };
        let (_, node_rows, split) = open.swap_remove(i);
        let split = split.expect("picked a candidate");
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            node_rows.iter().partition(|&&r| x[[r, split.feature]] <= split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        let ls = best_split(x, labels, &l_rows, n_classes, min_leaf);
        let rs = best_split(x, labels, &r_rows, n_classes, min_leaf);
        open.push((l, l_rows, ls));
        open.push((r, r_rows, rs));
        n_leaves += 1;
    }

    open.sort_by_key(|(node, _, _)| *node);
    let mut leaf_probs = Vec::with_capacity(open.len());
    for (leaf, (node, leaf_rows, _)) in open.iter().enumerate() {
        nodes[*node] = Node::Leaf { leaf };
        let counts = counts_of(labels, leaf_rows, n_classes);
        let denom = leaf_rows.len() as f64 + p.laplace_alpha * n_classes as f64;
        leaf_probs.push(counts.iter().map(|&c| (c as f64 + p.laplace_alpha) / denom).collect());
    }
    Tree { nodes, leaf_probs }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
    n_classes: usize,
    pub training_seed: u64,
}

impl ForestModel {
    pub fn fit(p: &ForestParams, x: &Array2<f64>, labels: &[usize], n_classes: usize, seed: u64) -> Self {
        let n = x.nrows();
        let m = round_half_up(p.row_subsample * n as f64).clamp(1, n);
        let trees = (0..p.n_trees.max(1))
            .map(|t| {
                let mut rng = rng::stream(seed, &[t as u64]);
                let mut rows = index::sample(&mut rng, n, m).into_vec();
                rows.sort_unstable();
                grow_tree(x, labels, rows, n_classes, p)
            })
            .collect();
        Self {
            trees,
            n_features: x.ncols(),
            n_classes,
            training_seed: seed,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_probs.len()).sum()
    }

    /// Leaf class distributions in embedding-column order.
    pub fn leaf_distributions(&self) -> Vec<&[f64]> {
        self.trees.iter().flat_map(|t| t.leaf_probs.iter().map(Vec::as_slice)).collect()
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        let scale = 1.0 / self.trees.len() as f64;
        let mut buf = vec![0.0; self.n_features];
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            buf.iter_mut().zip(row).for_each(|(b, &v)| *b = v);
            for tree in &self.trees {
                let probs = &tree.leaf_probs[tree.leaf_of(&buf)];
                o.iter_mut().zip(probs).for_each(|(o, &p)| *o += p);
            }
            o.mapv_inplace(|v| v * scale);
        }
        out
    }

    /// One-hot leaf membership; every row has exactly one 1 per tree.
    pub fn embed(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.total_leaves()));
        let mut buf = vec![0.0; self.n_features];
        for (i, row) in x.rows().into_iter().enumerate() {
            buf.iter_mut().zip(row).for_each(|(b, &v)| *b = v);
            let mut offset = 0;
            for tree in &self.trees {
                out[[i, offset + tree.leaf_of(&buf)]] = 1.0;
                offset += tree.leaf_probs.len();
            }
        }
        out
    }

    pub(crate) fn flatten(&self) -> (serde_json::Value, Vec<f64>) {
        let mut params = Vec::new();
        let mut trees = Vec::with_capacity(self.trees.len());
        for tree in &self.trees {
            let nodes: Vec<Vec<usize>> = tree
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Split { feature, left, right, .. } => vec![*feature, *left, *right],
                    Node::Leaf { leaf } => vec![*leaf],
                })
                .collect();
            for n in &tree.nodes {
                if let Node::Split { threshold, .. } = n {
                    params.push(*threshold);
                }
            }
            for probs in &tree.leaf_probs {
                params.extend(probs);
            }
            trees.push(json!({ "nodes": nodes, "n_leaves": tree.leaf_probs.len() }));
        }
        (
            json!({
                "n_features": self.n_features,
                "n_classes": self.n_classes,
                "training_seed": self.training_seed,
                "trees": trees,
            }),
            params,
        )
    }

    pub(crate) fn unflatten(arch: &serde_json::Value, params: &[f64]) -> Result<Self> {
        let get = |k: &str| arch.get(k).and_then(|v| v.as_u64()).ok_or_else(|| bad_model_file(k));
        let n_features = get("n_features")? as usize;
        let n_classes = get("n_classes")? as usize;
        let training_seed = get("training_seed")?;
        let tree_specs = arch.get("trees").and_then(|v| v.as_array()).ok_or_else(|| bad_model_file("trees"))?;
        let mut at = 0usize;
        let mut take = |k: usize| -> Result<&[f64]> {
            let s = params.get(at..at + k).ok_or_else(|| bad_model_file("parameter count"))?;
            at += k;
            Ok(s)
        };
        let mut trees = Vec::with_capacity(tree_specs.len());
        for spec in tree_specs {
            let raw: Vec<Vec<usize>> = spec
                .get("nodes")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| bad_model_file("nodes"))?;
            let n_leaves = spec.get("n_leaves").and_then(|v| v.as_u64()).ok_or_else(|| bad_model_file("n_leaves"))? as usize;
            let mut nodes = Vec::with_capacity(raw.len());
            for r in &raw {
                nodes.push(match r.as_slice() {
                    [leaf] if *leaf < n_leaves => Node::Leaf { leaf: *leaf },
                    [feature, left, right] if *feature < n_features && *left < raw.len() && *right < raw.len() => Node::Split {
                        feature: *feature,
                        threshold: take(1)?[0],
                        left: *left,
                        right: *right,
                    },
                    _ => return Err(bad_model_file("node")),
                });
            }
            let mut leaf_probs = Vec::with_capacity(n_leaves);
            for _ in 0..n_leaves {
                leaf_probs.push(take(n_classes)?.to_vec());
            }
            trees.push(Tree { nodes, leaf_probs });
        }
        if at != params.len() {
            return Err(bad_model_file("trailing parameters"));
        }
        Ok(Self {
            trees,
            n_features,
            n_classes,
            training_seed,
        })
    }
}
