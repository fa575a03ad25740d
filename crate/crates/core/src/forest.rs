//! CART regression trees and bootstrap random forests.
//!
//! Splits minimize the summed squared error of the two children (variance
//! reduction). Candidate thresholds are midpoints between consecutive distinct
//! feature values.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Row-major feature matrix with one target per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Samples {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &[f64], target: f64) {
        assert_eq!(features.len(), self.n_features, "feature dimension");
        self.x.extend_from_slice(features);
        self.y.push(target);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn set_targets(&mut self, y: Vec<f64>) {
        assert_eq!(y.len(), self.y.len());
        self.y = y;
    }

    fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.n_features + f]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_leaf: 5,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

struct Builder<'a, R> {
    data: &'a Samples,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    sort_buf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.data.y[i]).sum();
        let mean = sum / n as f64;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));

        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) {
            return slot;
        }
        let sse: f64 = idx.iter().map(|&i| (self.data.y[i] - mean).powi(2)).sum();
        if sse <= 1e-12 * n as f64 {
            return slot;
        }
        let Some(best) = self.best_split(idx, sum) else {
            return slot;
        };
        // Parent SSE minus children SSE.
        let parent_score = sum * sum / n as f64;
        if best.score - parent_score <= 1e-12 {
            return slot;
        }

        let mut lo = 0;
        let mut hi = n;
        while lo < hi {
            if self.data.value(idx[lo], best.feature) <= best.threshold {
                lo += 1;
            } else {
                hi -= 1;
                idx.swap(lo, hi);
            }
        }
        let (l, r) = idx.split_at_mut(lo);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, idx: &[usize], total: f64) -> Option<BestSplit> {
        let nf = self.data.n_features;
        let features: Vec<usize> = match self.params.max_features {
            Some(k) if k < nf => {
                let mut f = sample_indices(self.rng, nf, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..nf).collect(),
        };
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        for f in features {
            self.sort_buf.clear();
            self.sort_buf
                .extend(idx.iter().map(|&i| (self.data.value(i, f), self.data.y[i])));
            self.sort_buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.sort_buf[k - 1].1;
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let (a, b) = (self.sort_buf[k - 1].0, self.sort_buf[k].0);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                if best.is_none_or(|bs| score > bs.score + 1e-12) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: 0.5 * (a + b),
                        score,
                    });
                }
            }
        }
        best
    }
}

impl RegressionTree {
    /// Fits a tree on all rows of `data`. Panics if `data` is empty.
    pub fn fit<R: Rng>(data: &Samples, params: TreeParams, rng: &mut R) -> Self {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        Self::fit_rows(data, &mut idx, params, rng)
    }

    /// Fits on the given row indices (repeats allowed, as in a bootstrap draw).
    pub fn fit_rows<R: Rng>(data: &Samples, rows: &mut [usize], params: TreeParams, rng: &mut R) -> Self {
        assert!(!rows.is_empty(), "cannot fit a tree on an empty sample");
        let mut b = Builder {
            data,
            params,
            rng,
            nodes: Vec::new(),
            sort_buf: Vec::with_capacity(rows.len()),
        };
        b.build(rows, 0);
        Self {
            nodes: b.nodes,
            n_features: data.n_features,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Feature and threshold of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Leaf(_) => None,
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Fit each tree on a bootstrap resample instead of the full sample.
    pub bootstrap: bool,
}

impl ForestParams {
    /// Bootstrap forest with `sqrt(F)` features per split.
    pub fn random_forest(n_trees: usize, max_depth: usize, min_leaf: usize, n_features: usize) -> Self {
        let k = ((n_features as f64).sqrt().round() as usize).max(1);
        Self {
            n_trees,
            tree: TreeParams {
                max_depth,
                min_leaf,
                max_features: Some(k),
            },
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    /// Each tree draws from its own generator seeded from `rng`, so the result
    /// does not depend on how the trees are scheduled across threads.
    pub fn fit<R: Rng>(data: &Samples, params: ForestParams, rng: &mut R) -> Self {
        assert!(!data.is_empty(), "cannot fit a forest on an empty sample");
        let n = data.len();
        let seeds: Vec<u64> = (0..params.n_trees.max(1)).map(|_| rng.gen()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|seed| {
                let mut tree_rng = ChaCha8Rng::seed_from_u64(seed);
                let mut rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| tree_rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit_rows(data, &mut rows, params.tree, &mut tree_rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}
