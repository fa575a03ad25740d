//! Online tree-based SINR regression (single CART tree or random forest).
//!
//! Features are the last [`WINDOW`] reports (most recent first) followed by
//! the normalized HARQ offset accumulator. Each feature vector is paired with
//! the report that arrives `horizon` updates later, i.e. the measurement of
//! the slot it was meant to predict. The model is refit every
//! `retrain_every` updates on a sliding buffer of the latest `buffer_cap`
//! pairs; until the first fit the latest report is returned.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forest::{ForestParams, RandomForest, RegressionTree, Samples, TreeParams};

/// Number of past reports in the feature vector.
pub const WINDOW: usize = 5;
/// Feature dimension: `WINDOW` reports plus the offset accumulator.
pub const NUM_FEATURES: usize = WINDOW + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeKind {
    Single,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeLearnerConfig {
    pub buffer_cap: usize,
    pub retrain_every: usize,
    pub tree: TreeParams,
    pub forest_trees: usize,
}

impl Default for TreeLearnerConfig {
    fn default() -> Self {
        Self {
            buffer_cap: 500,
            retrain_every: 50,
            tree: TreeParams {
                max_depth: 6,
                min_leaf: 5,
                max_features: None,
            },
            forest_trees: 10,
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Tree(RegressionTree),
    Forest(RandomForest),
}

impl Model {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Tree(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineTreePredictor {
    kind: TreeKind,
    cfg: TreeLearnerConfig,
    horizon: usize,
    reports: VecDeque<f64>,
    pending: VecDeque<[f64; NUM_FEATURES]>,
    buffer: VecDeque<([f64; NUM_FEATURES], f64)>,
    current: Option<[f64; NUM_FEATURES]>,
    model: Option<Model>,
    updates_since_fit: usize,
    rng: ChaCha8Rng,
}

impl OnlineTreePredictor {
    pub fn new(kind: TreeKind, cfg: TreeLearnerConfig, horizon: usize, seed: u64) -> Self {
        Self {
            kind,
            cfg,
            horizon: horizon.max(1),
            reports: VecDeque::with_capacity(WINDOW + 1),
            pending: VecDeque::new(),
            buffer: VecDeque::with_capacity(cfg.buffer_cap + 1),
            current: None,
            model: None,
            updates_since_fit: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Feature vector from the report history; short histories repeat the oldest report.
    pub fn features(reports: &VecDeque<f64>, offset_norm: f64) -> [f64; NUM_FEATURES] {
        let mut f = [0.0; NUM_FEATURES];
        let oldest = reports.back().copied().unwrap_or(0.0);
        for (k, slot) in f.iter_mut().take(WINDOW).enumerate() {
            *slot = reports.get(k).copied().unwrap_or(oldest);
        }
        f[WINDOW] = offset_norm;
        f
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_trained(&self) -> bool {
        self.model.is_some()
    }

    /// Ingests the newest report and the current offset accumulator.
    pub fn update(&mut self, report_db: f64, offset_norm: f64) {
        self.reports.push_front(report_db);
        self.reports.truncate(WINDOW);
        if self.pending.len() >= self.horizon {
            if let Some(x) = self.pending.pop_front() {
                self.buffer.push_back((x, report_db));
                while self.buffer.len() > self.cfg.buffer_cap {
                    self.buffer.pop_front();
                }
            }
        }
        let x = Self::features(&self.reports, offset_norm);
        self.pending.push_back(x);
        self.current = Some(x);

        self.updates_since_fit += 1;
        if self.updates_since_fit >= self.cfg.retrain_every && !self.buffer.is_empty() {
            self.refit();
            self.updates_since_fit = 0;
        }
    }

    fn refit(&mut self) {
        let mut data = Samples::new(NUM_FEATURES);
        for (x, y) in &self.buffer {
            data.push(x, *y);
        }
        self.model = Some(match self.kind {
            TreeKind::Single => Model::Tree(RegressionTree::fit(&data, self.cfg.tree, &mut self.rng)),
            TreeKind::Forest => {
                let mut p = ForestParams::random_forest(
                    self.cfg.forest_trees,
                    self.cfg.tree.max_depth,
                    self.cfg.tree.min_leaf,
                    NUM_FEATURES,
                );
                p.tree.max_features = p.tree.max_features.or(self.cfg.tree.max_features);
                Model::Forest(RandomForest::fit(&data, p, &mut self.rng))
            }
        });
    }

    pub fn predict(&self) -> Option<f64> {
        let last = self.reports.front().copied()?;
        let v = match (&self.model, &self.current) {
            (Some(m), Some(x)) => m.predict(x),
            _ => last,
        };
        Some(if v.is_finite() { v } else { last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_start_returns_last_report() {
        for kind in [TreeKind::Single, TreeKind::Forest] {
            let mut p = OnlineTreePredictor::new(kind, TreeLearnerConfig::default(), 1, 0);
            assert_eq!(p.predict(), None);
            for t in 0..49 {
                p.update(t as f64, 0.0);
                assert!(!p.is_trained());
                assert_eq!(p.predict(), Some(t as f64));
            }
            p.update(49.0, 0.0);
            assert!(p.is_trained());
        }
    }

    #[test]
    fn pairs_features_with_report_horizon_later() {
        let mut p = OnlineTreePredictor::new(TreeKind::Single, TreeLearnerConfig::default(), 3, 0);
        for t in 0..10 {
            p.update(t as f64, 0.0);
        }
        // First pair: features at update 0 (all 0.0) with report of update 3.
        let (x, y) = p.buffer[0];
        assert_eq!(x[0], 0.0);
        assert_eq!(y, 3.0);
        assert_eq!(p.buffer.len(), 7);
        let (x, y) = p.buffer[6];
        assert_eq!(x[..WINDOW], [6.0, 5.0, 4.0, 3.0, 2.0]);
        assert_eq!(y, 9.0);
    }

    #[test]
    fn buffer_is_capped() {
        let cfg = TreeLearnerConfig {
            buffer_cap: 20,
            ..TreeLearnerConfig::default()
        };
        let mut p = OnlineTreePredictor::new(TreeKind::Single, cfg, 1, 0);
        for t in 0..100 {
            p.update((t % 7) as f64, 0.1);
        }
        assert_eq!(p.buffer_len(), 20);
    }

    #[test]
    fn learns_periodic_pattern() {
        // Last-report prediction is off by 10 dB on every other slot (mean 5).
        let signal = |t: usize| if t % 4 < 2 { 5.0 } else { 15.0 };
        for (kind, tol) in [(TreeKind::Single, 0.1), (TreeKind::Forest, 2.5)] {
            let mut p = OnlineTreePredictor::new(kind, TreeLearnerConfig::default(), 1, 5);
            let mut err = 0.0;
            for t in 0..600 {
                if t >= 500 {
                    err += (p.predict().unwrap() - signal(t)).abs();
                }
                p.update(signal(t), 0.0);
            }
            assert!(err / 100.0 < tol, "{kind:?}: mean abs error {}", err / 100.0);
        }
    }
}
