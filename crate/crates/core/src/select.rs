//! Second-order gradient-boosted trees with a softmax objective.
//!
//! The ensemble plays two roles: its accumulated split gains rank the
//! feature catalog (the top-K feed the neural classifier), and on its own it
//! is the tree-only baseline classifier.
//!
//! Training is exact-greedy and deterministic. Candidate thresholds sit at
//! midpoints between consecutive distinct present values; a row goes left
//! when `value < threshold`. MISSING values follow the direction that gave
//! the larger gain during training (right on ties).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::FeatureTable;
use crate::util::{argmax, softmax};
use crate::{Error, Result};

pub const ENSEMBLE_SCHEMA: &str = "qkdsent.gbdt/1";

const HESSIAN_FLOOR: f64 = 1e-16;
const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 50,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return Err(Error::Config("min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: String,
        feature_index: usize,
        threshold: f64,
        default_left: bool,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// One regression tree; node 0 is the root and children always follow
/// their parent in the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub class: usize,
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[Option<f64>]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let go_left = match row[*feature_index].filter(|v| v.is_finite()) {
                        Some(v) => v < *threshold,
                        None => *default_left,
                    };
                    idx = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub schema_version: String,
    pub params: BoostParams,
    pub feature_names: Vec<String>,
    pub class_count: usize,
    /// Per-class starting score: log of the training class prior.
    pub base_scores: Vec<f64>,
    /// Round-major: `trees[round * class_count + class]`.
    pub trees: Vec<Tree>,
    pub feature_gain: BTreeMap<String, f64>,
}

struct Grad {
    g: Vec<f64>,
    h: Vec<f64>,
}

/// Sorted present rows and missing rows of each column.
struct ColumnIndex {
    sorted: Vec<Vec<(f64, u32)>>,
    missing: Vec<Vec<u32>>,
}

impl ColumnIndex {
    fn new(table: &FeatureTable) -> Self {
        let m = table.width();
        let mut sorted = vec![Vec::new(); m];
        let mut missing = vec![Vec::new(); m];
        for (i, row) in table.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                match v.filter(|x| x.is_finite()) {
                    Some(x) => sorted[j].push((x, i as u32)),
                    None => missing[j].push(i as u32),
                }
            }
        }
        for col in &mut sorted {
            col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        ColumnIndex { sorted, missing }
    }
}

/// Best split found for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature_index: usize,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
}

/// Threshold between two consecutive distinct values, strictly above `lo`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo * 0.5 + hi * 0.5;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Relative margin a candidate must clear to replace the incumbent split, so
/// that gains equal up to rounding keep the first candidate in scan order.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Whether `gain` replaces the incumbent best. The first split only needs a
/// positive gain.
pub fn improves(gain: f64, best: Option<f64>) -> bool {
    match best {
        None => gain > 0.0,
        Some(b) => gain > b + TIE_TOLERANCE * b.abs(),
    }
}

/// Regularized second-order split gain.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

struct TreeBuilder<'a> {
    table: &'a FeatureTable,
    columns: &'a ColumnIndex,
    params: &'a BoostParams,
    grad: &'a Grad,
    in_node: Vec<bool>,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn best_split(&mut self, rows: &[u32]) -> Option<SplitChoice> {
        let p = self.params;
        for r in rows {
            self.in_node[*r as usize] = true;
        }
        let g_node: f64 = rows.iter().map(|&r| self.grad.g[r as usize]).sum();
        let h_node: f64 = rows.iter().map(|&r| self.grad.h[r as usize]).sum();
        let mut best: Option<SplitChoice> = None;

        for j in 0..self.table.width() {
            let (mut gm, mut hm) = (0.0, 0.0);
            for &r in &self.columns.missing[j] {
                if self.in_node[r as usize] {
                    gm += self.grad.g[r as usize];
                    hm += self.grad.h[r as usize];
                }
            }
            let gp = g_node - gm;
            let hp = h_node - hm;
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<f64> = None;
            for &(v, r) in &self.columns.sorted[j] {
                if !self.in_node[r as usize] {
                    continue;
                }
                if let Some(pv) = prev {
                    if v > pv {
                        let gr = gp - gl;
                        let hr = hp - hl;
                        // Missing right, then missing left; strict improvement wins.
                        for (default_left, (gl2, hl2, gr2, hr2)) in [
                            (false, (gl, hl, gr + gm, hr + hm)),
                            (true, (gl + gm, hl + hm, gr, hr)),
                        ] {
                            if hl2 < p.min_child_weight || hr2 < p.min_child_weight {
                                continue;
                            }
                            let gain = split_gain(gl2, hl2, gr2, hr2, p.lambda, p.gamma);
                            if improves(gain, best.map(|b| b.gain)) {
                                best = Some(SplitChoice {
                                    feature_index: j,
                                    threshold: midpoint(pv, v),
                                    default_left,
                                    gain,
                                });
                            }
                        }
                    }
                }
                gl += self.grad.g[r as usize];
                hl += self.grad.h[r as usize];
                prev = Some(v);
            }
        }
        for r in rows {
            self.in_node[*r as usize] = false;
        }
        best
    }

    fn leaf(&self, rows: &[u32]) -> TreeNode {
        let g: f64 = rows.iter().map(|&r| self.grad.g[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.grad.h[r as usize]).sum();
        TreeNode::Leaf {
            value: -g / (h + self.params.lambda) * self.params.learning_rate,
        }
    }

    fn build(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let split = if depth < self.params.max_depth {
            self.best_split(&rows)
        } else {
            None
        };
        match split {
            None => self.nodes[idx] = self.leaf(&rows),
            Some(s) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&r| {
                        match self.table.rows[r as usize][s.feature_index].filter(|v| v.is_finite()) {
                            Some(v) => v < s.threshold,
                            None => s.default_left,
                        }
                    });
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                self.nodes[idx] = TreeNode::Split {
                    feature: self.table.names[s.feature_index].clone(),
                    feature_index: s.feature_index,
                    threshold: s.threshold,
                    default_left: s.default_left,
                    gain: s.gain,
                    left,
                    right,
                };
            }
        }
        idx
    }
}

/// Fits a softmax boosted ensemble on `table` with labels in `0..class_count`.
pub fn fit(
    table: &FeatureTable,
    labels: &[usize],
    class_count: usize,
    params: &BoostParams,
) -> Result<BoostedEnsemble> {
    params.validate()?;
    if table.is_empty() {
        return Err(Error::DegenerateTraining("empty training table".into()));
    }
    if labels.len() != table.len() {
        return Err(Error::Dimension {
            expected: table.len(),
            actual: labels.len(),
        });
    }
    if let Some(row) = table.rows.iter().find(|r| r.len() != table.width()) {
        return Err(Error::Dimension {
            expected: table.width(),
            actual: row.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::Domain(format!(
            "label {bad} outside 0..{class_count}"
        )));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateTraining(
            "at least two classes are required".into(),
        ));
    }

    let n = table.len();
    let base_scores: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln())
        .collect();
    let columns = ColumnIndex::new(table);
    let mut scores: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut trees = Vec::with_capacity(params.rounds * class_count);
    let mut feature_gain: BTreeMap<String, f64> =
        table.names.iter().map(|n| (n.clone(), 0.0)).collect();

    for _round in 0..params.rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round_trees = Vec::with_capacity(class_count);
        #[allow(clippy::needless_range_loop)]
        for class in 0..class_count {
            let grad = Grad {
                g: (0..n)
                    .map(|i| probs[i][class] - if labels[i] == class { 1.0 } else { 0.0 })
                    .collect(),
                h: (0..n)
                    .map(|i| (probs[i][class] * (1.0 - probs[i][class])).max(HESSIAN_FLOOR))
                    .collect(),
            };
            let mut builder = TreeBuilder {
                table,
                columns: &columns,
                params,
                grad: &grad,
                in_node: vec![false; n],
                nodes: Vec::new(),
            };
            builder.build((0..n as u32).collect(), 0);
            let tree = Tree {
                class,
                nodes: builder.nodes,
            };
            for node in &tree.nodes {
                if let TreeNode::Split { feature, gain, .. } = node {
                    *feature_gain.get_mut(feature).expect("known feature") += gain;
                }
            }
            round_trees.push(tree);
        }
        for (row, score) in table.rows.iter().zip(scores.iter_mut()) {
            for tree in &round_trees {
                score[tree.class] += tree.leaf_value(row);
            }
        }
        trees.extend(round_trees);
    }

    Ok(BoostedEnsemble {
        schema_version: ENSEMBLE_SCHEMA.to_string(),
        params: *params,
        feature_names: table.names.clone(),
        class_count,
        base_scores,
        trees,
        feature_gain,
    })
}

impl BoostedEnsemble {
    /// Raw per-class scores for a row aligned with `feature_names`.
    pub fn scores(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Dimension {
                expected: self.feature_names.len(),
                actual: row.len(),
            });
        }
        let mut scores = self.base_scores.clone();
        for tree in &self.trees {
            scores[tree.class] += tree.leaf_value(row);
        }
        Ok(scores)
    }

    /// Class probabilities for a row aligned with `feature_names`.
    pub fn predict_proba(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(row)?))
    }

    pub fn predict(&self, row: &[Option<f64>]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    /// Features ranked by accumulated gain, best first.
    ///
    /// Ties (including the zero-gain tail used as padding) keep column order.
    pub fn top_k_features(&self, k: usize) -> Result<Vec<String>> {
        if k == 0 || k > self.feature_names.len() {
            return Err(Error::Domain(format!(
                "k must lie in 1..={}, got {k}",
                self.feature_names.len()
            )));
        }
        let mut ranked: Vec<(usize, f64)> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (i, self.feature_gain.get(n).copied().unwrap_or(0.0)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(i, _)| self.feature_names[i].clone())
            .collect())
    }

    /// Number of features that carry positive gain.
    pub fn informative_feature_count(&self) -> usize {
        self.feature_gain.values().filter(|g| **g > 0.0).count()
    }

    /// Gain totals recomputed from the serialized split nodes.
    pub fn recompute_gain(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> =
            self.feature_names.iter().map(|n| (n.clone(), 0.0)).collect();
        for tree in &self.trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, gain, .. } = node {
                    *out.entry(feature.clone()).or_default() += gain;
                }
            }
        }
        out
    }

    /// Structural checks for an ensemble loaded from untrusted JSON.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.schema_version != ENSEMBLE_SCHEMA {
            return Err(Error::Schema {
                found: self.schema_version.clone(),
                expected: ENSEMBLE_SCHEMA.into(),
            });
        }
        self.params.validate()?;
        if self.class_count < 2 || self.base_scores.len() != self.class_count {
            return bad("class_count and base_scores disagree".into());
        }
        if self.base_scores.iter().any(|s| !s.is_finite()) {
            return bad("non-finite base score".into());
        }
        if self.trees.len() != self.params.rounds * self.class_count {
            return bad(format!(
                "expected {} trees, found {}",
                self.params.rounds * self.class_count,
                self.trees.len()
            ));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.class != t % self.class_count {
                return bad(format!("tree {t} has class {}", tree.class));
            }
            if tree.nodes.is_empty() {
                return bad(format!("tree {t} is empty"));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Leaf { value } if !value.is_finite() => {
                        return bad(format!("tree {t} node {i}: non-finite leaf"));
                    }
                    TreeNode::Leaf { .. } => {}
                    TreeNode::Split {
                        feature,
                        feature_index,
                        threshold,
                        gain,
                        left,
                        right,
                        ..
                    } => {
                        if self.feature_names.get(*feature_index) != Some(feature) {
                            return bad(format!("tree {t} node {i}: unknown feature '{feature}'"));
                        }
                        if !threshold.is_finite() || !gain.is_finite() {
                            return bad(format!("tree {t} node {i}: non-finite split"));
                        }
                        let n = tree.nodes.len();
                        if *left <= i || *right <= i || *left >= n || *right >= n {
                            return bad(format!("tree {t} node {i}: bad child index"));
                        }
                    }
                }
            }
            if tree.depth() > self.params.max_depth {
                return bad(format!("tree {t} deeper than max_depth"));
            }
        }
        for (name, gain) in &self.feature_gain {
            if !self.feature_names.contains(name) || !(gain.is_finite() && *gain >= 0.0) {
                return bad(format!("bad feature_gain entry '{name}'"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: BoostedEnsemble = serde_json::from_str(text)?;
        e.validate()?;
        Ok(e)
    }
}
