//! Quantile regression forests.
//!
//! Trees are grown like regression CART trees (bootstrap rows, random
//! feature subset per split, squared-error reduction) but every leaf keeps
//! the training rows that reached it. A query point is routed to one leaf
//! per tree, each row in that leaf receives `1 / leaf size` (counting
//! bootstrap duplicates), and the per-tree weights are averaged. The
//! weighted empirical distribution of the responses is the conditional
//! CDF estimate; quantiles are read off it by inversion.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Slack when comparing accumulated weights against a probability level.
const CDF_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn (without replacement) at every split; `None` uses all.
    pub max_features: Option<usize>,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    /// Draw a size-`n` bootstrap sample per tree. Disabled only in tests and
    /// diagnostics.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 10,
            max_features: None,
            min_samples_split: 10,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::param("forest needs at least one tree"));
        }
        if self.max_features == Some(0) {
            return Err(Error::param("max_features must be at least 1"));
        }
        if self.min_samples_split == 0 {
            return Err(Error::param("min_samples_split must be at least 1"));
        }
        Ok(())
    }
}

/// Row-major predictor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictors {
    values: Vec<f64>,
    dim: usize,
}

impl Predictors {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::param(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        Ok(Predictors { values, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::param("ragged predictor rows"));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn at(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.dim + f]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    /// Rows with `u[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Range into `Tree::leaf_rows`.
    Leaf { start: usize, end: usize },
}

/// One regression tree whose leaves retain training row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_rows: Vec<usize>,
}

/// Borrowed view of a tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeView<'a> {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(&'a [usize]),
}

impl Tree {
    pub fn root(&self) -> NodeView<'_> {
        self.node(0)
    }

    pub fn node(&self, id: usize) -> NodeView<'_> {
        match self.nodes[id] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeView::Split {
                feature,
                threshold,
                left,
                right,
            },
            Node::Leaf { start, end } => NodeView::Leaf(&self.leaf_rows[start..end]),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Training rows (with bootstrap multiplicity) of the leaf `u` falls in.
    pub fn leaf(&self, u: &[f64]) -> &[usize] {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if u[feature] <= threshold { left } else { right },
                Node::Leaf { start, end } => return &self.leaf_rows[start..end],
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { start, end } => Some(&self.leaf_rows[start..end]),
            Node::Split { .. } => None,
        })
    }
}

/// Grows one tree on `(x, y)`.
pub fn fit_tree(x: &Predictors, y: &[f64], params: &ForestParams, rng: &mut Rng) -> Result<Tree> {
    params.validate()?;
    if x.len() != y.len() || y.is_empty() {
        return Err(Error::param(format!(
            "{} predictor rows for {} responses",
            x.len(),
            y.len()
        )));
    }
    Ok(TreeBuilder::new(x, y, params, rng).build())
}

struct TreeBuilder<'a> {
    x: &'a Predictors,
    y: &'a [f64],
    params: &'a ForestParams,
    rng: &'a mut Rng,
    /// Training row of each sample slot (bootstrap draws may repeat rows).
    rows: Vec<usize>,
    /// Per feature, sample slots ordered by that feature; every node owns
    /// the same contiguous range in each ordering.
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    features: Vec<usize>,
    nodes: Vec<Node>,
    leaf_rows: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(x: &'a Predictors, y: &'a [f64], params: &'a ForestParams, rng: &'a mut Rng) -> Self {
        let n = y.len();
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let sorted = (0..x.dim())
            .map(|f| {
                let mut slots: Vec<u32> = (0..n as u32).collect();
                slots.sort_unstable_by(|&a, &b| {
                    x.at(rows[a as usize], f)
                        .total_cmp(&x.at(rows[b as usize], f))
                        .then(a.cmp(&b))
                });
                slots
            })
            .collect();
        TreeBuilder {
            x,
            y,
            params,
            rng,
            rows,
            sorted,
            goes_left: vec![false; n],
            scratch: Vec::with_capacity(n),
            features: (0..x.dim()).collect(),
            nodes: Vec::new(),
            leaf_rows: Vec::with_capacity(n),
        }
    }

    fn build(mut self) -> Tree {
        let n = self.rows.len();
        self.grow(0, n);
        Tree {
            nodes: self.nodes,
            leaf_rows: self.leaf_rows,
        }
    }

    fn grow(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        match self.find_split(lo, hi) {
            Some(split) => {
                let n_left = self.partition(lo, hi, split.feature, split.threshold);
                let left = self.grow(lo, lo + n_left);
                let right = self.grow(lo + n_left, hi);
                self.nodes[id] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                };
            }
            None => {
                let start = self.leaf_rows.len();
                let rows = &self.rows;
                self.leaf_rows
                    .extend(self.sorted[0][lo..hi].iter().map(|&s| rows[s as usize]));
                self.nodes[id] = Node::Leaf {
                    start,
                    end: self.leaf_rows.len(),
                };
            }
        }
        id
    }

    fn response(&self, slot: u32) -> f64 {
        self.y[self.rows[slot as usize]]
    }

    fn find_split(&mut self, lo: usize, hi: usize) -> Option<BestSplit> {
        let count = hi - lo;
        if count < self.params.min_samples_split || count < 2 {
            return None;
        }
        let slots = &self.sorted[0][lo..hi];
        let first = self.response(slots[0]);
        if slots.iter().all(|&s| self.response(s) == first) {
            return None;
        }
        let total: f64 = slots.iter().map(|&s| self.response(s)).sum();
        let mean = total / count as f64;
        let parent_sse: f64 = slots
            .iter()
            .map(|&s| {
                let d = self.response(s) - mean;
                d * d
            })
            .sum();
        let parent_term = total * total / count as f64;

        let dim = self.x.dim();
        let n_candidates = self.params.max_features.map_or(dim, |m| m.min(dim));
        if n_candidates < dim {
            for i in 0..n_candidates {
                let j = self.rng.random_range(i..dim);
                self.features.swap(i, j);
            }
        }

        let mut best: Option<BestSplit> = None;
        for c in 0..n_candidates {
            let f = if n_candidates < dim { self.features[c] } else { c };
            let order = &self.sorted[f][lo..hi];
            let mut left_sum = 0.0;
            for t in 0..count - 1 {
                left_sum += self.response(order[t]);
                let a = self.x.at(self.rows[order[t] as usize], f);
                let b = self.x.at(self.rows[order[t + 1] as usize], f);
                if a >= b {
                    continue;
                }
                let n_left = (t + 1) as f64;
                let n_right = (count - t - 1) as f64;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right - parent_term;
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > parent_sse * 1e-12)
    }

    /// Stable partition of `[lo, hi)` in every feature ordering; returns
    /// the size of the left child.
    fn partition(&mut self, lo: usize, hi: usize, feature: usize, threshold: f64) -> usize {
        let mut n_left = 0;
        for &s in &self.sorted[feature][lo..hi] {
            let left = self.x.at(self.rows[s as usize], feature) <= threshold;
            self.goes_left[s as usize] = left;
            n_left += left as usize;
        }
        for order in &mut self.sorted {
            self.scratch.clear();
            let mut write = lo;
            for i in lo..hi {
                let s = order[i];
                if self.goes_left[s as usize] {
                    order[write] = s;
                    write += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            order[write..hi].copy_from_slice(&self.scratch);
        }
        n_left
    }
}

/// Probability weights over the training rows, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// An ensemble of leaf-retaining trees together with its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForest {
    trees: Vec<Tree>,
    x: Predictors,
    y: Vec<f64>,
    /// Training rows ordered by response, ties by row index.
    by_response: Vec<usize>,
    params: ForestParams,
}

/// Fits `params.n_trees` trees; tree `t` draws from the stream `(seed, t)`.
pub fn fit_forest(x: Predictors, y: Vec<f64>, params: &ForestParams, seed: u64) -> Result<QuantileForest> {
    params.validate()?;
    let trees = (0..params.n_trees)
        .map(|t| fit_tree(&x, &y, params, &mut rng::stream(seed, &[t as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileForest::from_trees(trees, x, y, *params))
}

impl QuantileForest {
    /// Assembles a forest from already grown trees.
    pub fn from_trees(trees: Vec<Tree>, x: Predictors, y: Vec<f64>, params: ForestParams) -> Self {
        let mut by_response: Vec<usize> = (0..y.len()).collect();
        by_response.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        QuantileForest {
            trees,
            x,
            y,
            by_response,
            params,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predictors(&self) -> &Predictors {
        &self.x
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Averaged per-tree leaf weights for the query point `u`.
    pub fn leaf_weights(&self, u: &[f64]) -> WeightVector {
        let mut w = vec![0.0; self.y.len()];
        let k = self.trees.len() as f64;
        for tree in &self.trees {
            let leaf = tree.leaf(u);
            let share = 1.0 / (k * leaf.len() as f64);
            for &r in leaf {
                w[r] += share;
            }
        }
        WeightVector(w)
    }

    /// Estimated `P(Y <= v | U = u)`.
    pub fn conditional_cdf(&self, u: &[f64], v: f64) -> f64 {
        let w = self.leaf_weights(u);
        let p: f64 = self
            .y
            .iter()
            .zip(&w.0)
            .filter(|(&y, _)| y <= v)
            .map(|(_, &w)| w)
            .sum();
        p.min(1.0)
    }

    /// Conditional quantiles at the ascending levels `alphas`.
    ///
    /// Level `a > 0` maps to the smallest training response whose estimated
    /// CDF reaches `a`; level 0 maps to the smallest response carrying
    /// positive weight.
    pub fn conditional_quantiles(&self, u: &[f64], alphas: &[f64]) -> Vec<f64> {
        let w = self.leaf_weights(u);
        quantiles_from_weights(&self.y, &self.by_response, &w.0, alphas)
    }
}

pub(crate) fn quantiles_from_weights(y: &[f64], by_response: &[usize], w: &[f64], alphas: &[f64]) -> Vec<f64> {
    debug_assert!(alphas.windows(2).all(|p| p[0] <= p[1]), "alphas must be sorted");
    let mut out = Vec::with_capacity(alphas.len());
    let mut cum = 0.0;
    let mut last = f64::NAN;
    let mut next = 0;
    for &r in by_response {
        if w[r] <= 0.0 {
            continue;
        }
        cum += w[r];
        last = y[r];
        while next < alphas.len() && (alphas[next] <= 0.0 || cum >= alphas[next] - CDF_EPS) {
            out.push(y[r]);
            next += 1;
        }
        if next == alphas.len() {
            break;
        }
    }
    // Accumulated rounding may leave the top level unreached.
    out.resize(alphas.len(), last);
    out
}
