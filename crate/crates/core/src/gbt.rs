//! Gradient-boosted regression trees for squared error.
//!
//! Each round fits one tree to the gradients `pred - y` (hessian 1) with an
//! exact greedy split search over every midpoint between adjacent distinct
//! feature values. Leaf weights use L1 soft-thresholding and L2 shrinkage:
//! `w = -sign(G) * max(|G| - alpha, 0) / (H + lambda)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// L1 penalty on leaf weights (alpha).
    pub l1: f64,
    /// L2 penalty on leaf weights (lambda).
    pub l2: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            l1: 0.0,
            l2: 1.0,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Feature indices referenced by any split.
    pub fn used_features(&self, out: &mut std::collections::BTreeSet<usize>) {
        if let TreeNode::Internal {
            feature,
            left,
            right,
            ..
        } = self
        {
            out.insert(*feature);
            left.used_features(out);
            right.used_features(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<TreeNode>,
    pub config: GbtConfig,
    pub n_features: usize,
}

/// Per-round record of a fit: `mse[0]` is the base-score loss, `mse[k]` the
/// loss after `k` trees.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub mse: Vec<f64>,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Soft-thresholded, L2-shrunk optimal leaf weight.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, l1: f64, l2: f64) -> f64 {
    let shrunk = (grad_sum.abs() - l1).max(0.0);
    if shrunk == 0.0 {
        0.0
    } else {
        -grad_sum.signum() * shrunk / (hess_sum + l2)
    }
}

pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, l2: f64) -> f64 {
    let g = g_left + g_right;
    let h = h_left + h_right;
    0.5 * (g_left * g_left / (h_left + l2) + g_right * g_right / (h_right + l2) - g * g / (h + l2))
}

/// Midpoint between adjacent distinct sorted values, kept strictly below `hi`.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Running best split within one node. Candidates are ranked by the child
/// terms of the gain alone, since the parent term is constant within a node.
#[derive(Clone, Copy)]
struct NodeBest {
    feature: usize,
    threshold: f64,
    score: f64,
    g_left: f64,
    h_left: f64,
}

impl NodeBest {
    fn into_candidate(self, g_total: f64, h_total: f64, l2: f64) -> SplitCandidate {
        SplitCandidate {
            feature: self.feature,
            threshold: self.threshold,
            gain: split_gain(
                self.g_left,
                self.h_left,
                g_total - self.g_left,
                h_total - self.h_left,
                l2,
            ),
        }
    }
}

/// Scan one feature whose node rows are given in ascending value order.
/// Replaces `best` only on a strictly larger score, so the earliest feature and
/// the lowest threshold win ties when features are scanned in index order.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scan_feature(
    feature: usize,
    sorted_rows: &[u32],
    col: &[f64],
    grad: &[f64],
    hess: &[f64],
    g_total: f64,
    h_total: f64,
    l2: f64,
    best: &mut Option<NodeBest>,
) {
    let Some((&first, rest)) = sorted_rows.split_first() else {
        return;
    };
    let mut best_score = best.map_or(f64::NEG_INFINITY, |b| b.score);
    let (mut gl, mut hl) = (0.0, 0.0);
    let mut cur = first as usize;
    for &next in rest {
        let next = next as usize;
        let (a, b) = (col[cur], col[next]);
        gl += grad[cur];
        hl += hess[cur];
        cur = next;
        if a == b {
            continue;
        }
        let gr = g_total - gl;
        let score = gl * gl / (hl + l2) + gr * gr / (h_total - hl + l2);
        if score > best_score || best.is_none() {
            best_score = score;
            *best = Some(NodeBest {
                feature,
                threshold: midpoint(a, b),
                score,
                g_left: gl,
                h_left: hl,
            });
        }
    }
}

fn sorted_by_column(col: &[f64], rows: &[usize]) -> Vec<u32> {
    let mut v: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    v.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
    v
}

/// Feature-major copy of `x`: column `f` occupies `[f * n_rows, (f + 1) * n_rows)`.
fn columns(x: &Matrix) -> Vec<f64> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut cols = vec![0.0; n * p];
    for r in 0..n {
        for (f, &v) in x.row(r).iter().enumerate() {
            cols[f * n + r] = v;
        }
    }
    cols
}

/// Best split of `rows` over all features, or `None` when no feature has two
/// distinct values. The gain may be non-positive; callers decide whether to split.
pub fn best_split(
    x: &Matrix,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    l2: f64,
) -> Option<SplitCandidate> {
    let g_total: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h_total: f64 = rows.iter().map(|&r| hess[r]).sum();
    let n = x.n_rows();
    let cols = columns(x);
    let mut best = None;
    for f in 0..x.n_cols() {
        let col = &cols[f * n..(f + 1) * n];
        let sorted = sorted_by_column(col, rows);
        scan_feature(f, &sorted, col, grad, hess, g_total, h_total, l2, &mut best);
    }
    best.map(|b| b.into_candidate(g_total, h_total, l2))
}

/// Node rows live in `order`, one segment of `n_rows` entries per feature list,
/// each sorted by that feature. A node owns the same `[lo, hi)` range in every
/// segment, and splitting stably partitions each range in place.
struct TreeBuilder<'a> {
    cols: &'a [f64],
    n_rows: usize,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbtConfig,
    order: Vec<u32>,
    scratch: Vec<u32>,
    go_left: Vec<bool>,
    /// (lo, hi, weight) for each leaf; rows are `order[lo..hi]`.
    leaves: Vec<(usize, usize, f64)>,
}

impl TreeBuilder<'_> {
    fn column(&self, f: usize) -> &[f64] {
        &self.cols[f * self.n_rows..(f + 1) * self.n_rows]
    }

    fn n_lists(&self) -> usize {
        self.order.len() / self.n_rows
    }

    fn list(&self, k: usize, lo: usize, hi: usize) -> &[u32] {
        &self.order[k * self.n_rows + lo..k * self.n_rows + hi]
    }

    /// Stable in-place partition of list `k` over `[lo, hi)`; left rows first.
    fn partition(&mut self, k: usize, lo: usize, hi: usize) {
        let base = k * self.n_rows;
        let seg = &mut self.order[base + lo..base + hi];
        self.scratch.clear();
        let mut w = 0;
        for i in 0..seg.len() {
            let row = seg[i];
            if self.go_left[row as usize] {
                seg[w] = row;
                w += 1;
            } else {
                self.scratch.push(row);
            }
        }
        seg[w..].copy_from_slice(&self.scratch);
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> TreeNode {
        let rows = self.list(0, lo, hi);
        let g_total: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h_total: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();

        let mut best = None;
        if depth < self.config.max_depth && hi - lo >= 2 {
            for f in 0..self.cols.len() / self.n_rows {
                scan_feature(
                    f,
                    self.list(f, lo, hi),
                    self.column(f),
                    self.grad,
                    self.hess,
                    g_total,
                    h_total,
                    self.config.l2,
                    &mut best,
                );
            }
        }
        let split = match best.map(|b| b.into_candidate(g_total, h_total, self.config.l2)) {
            Some(s) if s.gain > 0.0 => s,
            _ => {
                let weight = leaf_weight(g_total, h_total, self.config.l1, self.config.l2);
                self.leaves.push((lo, hi, weight));
                return TreeNode::Leaf { weight };
            }
        };

        for i in lo..hi {
            let r = self.order[i] as usize;
            self.go_left[r] = self.cols[split.feature * self.n_rows + r] <= split.threshold;
        }
        let n_left = self
            .list(0, lo, hi)
            .iter()
            .filter(|&&r| self.go_left[r as usize])
            .count();
        // Children at the depth limit or below two rows are leaves and only
        // read list 0.
        let n_right = hi - lo - n_left;
        let n_lists = if depth + 1 < self.config.max_depth && n_left.max(n_right) >= 2 {
            self.n_lists()
        } else {
            1
        };
        for k in 0..n_lists {
            self.partition(k, lo, hi);
        }
        let mid = lo + n_left;
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(lo, mid, depth + 1)),
            right: Box::new(self.build(mid, hi, depth + 1)),
        }
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64
}

fn check_training_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training target".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    Ok(())
}

impl GbtModel {
    pub fn fit(x: &Matrix, y: &[f64], config: &GbtConfig) -> Result<Self> {
        Self::fit_traced(x, y, config, None).map(|(m, _)| m)
    }

    /// Fit and return the per-round training trace. `base_score` overrides
    /// the default of `mean(y)`.
    pub fn fit_traced(
        x: &Matrix,
        y: &[f64],
        config: &GbtConfig,
        base_score: Option<f64>,
    ) -> Result<(Self, TrainTrace)> {
        check_training_data(x, y)?;
        let n = y.len();
        let base_score = base_score.unwrap_or_else(|| y.iter().sum::<f64>() / n as f64);
        let all: Vec<usize> = (0..n).collect();
        let cols = columns(x);
        // Row order in list 0 is irrelevant to the leaf sums, so nodes always
        // carry at least one list even with zero features.
        let presorted: Vec<u32> = if x.n_cols() == 0 {
            (0..n as u32).collect()
        } else {
            (0..x.n_cols())
                .flat_map(|f| sorted_by_column(&cols[f * n..(f + 1) * n], &all))
                .collect()
        };

        let mut pred = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let hess = vec![1.0; n];
        let mut trace = vec![mse(&pred, y)];
        let mut trees = Vec::with_capacity(config.n_estimators);
        let mut order = presorted.clone();
        let mut scratch = Vec::with_capacity(n);
        let mut go_left = vec![false; n];
        for _ in 0..config.n_estimators {
            for i in 0..n {
                grad[i] = pred[i] - y[i];
            }
            order.copy_from_slice(&presorted);
            let mut builder = TreeBuilder {
                cols: &cols,
                n_rows: n,
                grad: &grad,
                hess: &hess,
                config,
                order,
                scratch,
                go_left,
                leaves: Vec::new(),
            };
            let tree = builder.build(0, n, 0);
            for &(lo, hi, w) in &builder.leaves {
                for &r in &builder.order[lo..hi] {
                    pred[r as usize] += config.learning_rate * w;
                }
            }
            (order, scratch, go_left) = (builder.order, builder.scratch, builder.go_left);
            trees.push(tree);
            trace.push(mse(&pred, y));
        }

        let model = Self {
            base_score,
            trees,
            config: config.clone(),
            n_features: x.n_cols(),
        };
        Ok((
            model,
            TrainTrace {
                mse: trace,
                predictions: pred,
            },
        ))
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score
            + self.config.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .map(|r| self.predict_row(x.row(r)))
            .collect())
    }

    pub fn used_features(&self) -> std::collections::BTreeSet<usize> {
        let mut out = std::collections::BTreeSet::new();
        for t in &self.trees {
            t.used_features(&mut out);
        }
        out
    }
}
