//! Expert-mixing SINR estimator driven only by HARQ feedback and the MCS used.
//!
//! Each expert `(eta, beta)` keeps its own estimate, moved up by
//! `eta * tau * (1 + beta)` on ACK and down by `eta * (1 - tau) * (1 - beta)` on
//! NACK. Experts are scored with a hinge loss against the MCS threshold
//! `theta(m)` (the SINR at which MCS `m` hits the target BLER): an ACK
//! penalizes estimates below it, a NACK estimates above it. Weights follow
//! exponential weighting with a Fixed-Share mix; `share_rate = 0` is plain Hedge.

use serde::{Deserialize, Serialize};

use crate::phy::{Harq, LinkCurves};

pub const ETA_GRID: [f64; 4] = [0.5, 1.0, 2.0, 3.0];
pub const BETA_GRID: [f64; 3] = [0.0, 0.15, 0.3];
pub const NUM_EXPERTS: usize = ETA_GRID.len() * BETA_GRID.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcoConfig {
    pub target_bler: f64,
    /// Fixed-Share mixing rate alpha.
    pub share_rate: f64,
    /// Exponential-weights learning rate.
    pub hedge_rate: f64,
    pub init_db: f64,
    pub min_db: f64,
    pub max_db: f64,
}

impl Default for OcoConfig {
    fn default() -> Self {
        Self {
            target_bler: 0.1,
            share_rate: 0.0,
            hedge_rate: 0.5,
            init_db: 15.0,
            min_db: -10.0,
            max_db: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expert {
    pub eta: f64,
    pub beta: f64,
}

impl Expert {
    pub fn step(&self, harq: Harq, tau: f64) -> f64 {
        match harq {
            Harq::Ack => self.eta * tau * (1.0 + self.beta),
            Harq::Nack => -self.eta * (1.0 - tau) * (1.0 - self.beta),
        }
    }
}

/// The 12 experts on the `eta x beta` grid, eta-major.
pub fn expert_grid() -> Vec<Expert> {
    ETA_GRID
        .iter()
        .flat_map(|&eta| BETA_GRID.iter().map(move |&beta| Expert { eta, beta }))
        .collect()
}

/// Hinge loss of an estimate given the outcome at threshold `theta`.
pub fn expert_loss(estimate: f64, theta: f64, harq: Harq) -> f64 {
    match harq {
        Harq::Ack => (theta - estimate).max(0.0),
        Harq::Nack => (estimate - theta).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcoState {
    cfg: OcoConfig,
    experts: Vec<Expert>,
    estimates: Vec<f64>,
    weights: Vec<f64>,
}

impl OcoState {
    pub fn new(cfg: OcoConfig) -> Self {
        let experts = expert_grid();
        let n = experts.len();
        Self {
            cfg,
            estimates: vec![cfg.init_db; n],
            weights: vec![1.0 / n as f64; n],
            experts,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn predict(&self) -> f64 {
        self.weights.iter().zip(&self.estimates).map(|(w, e)| w * e).sum()
    }

    /// SINR at which `mcs` meets the target BLER.
    pub fn threshold(&self, curves: &LinkCurves, mcs: usize) -> f64 {
        curves.gamma50(mcs) + curves.model.margin_for_target(self.cfg.target_bler)
    }

    /// Scores the experts on the outcome of a transmission at `mcs`, then moves their estimates.
    pub fn update(&mut self, curves: &LinkCurves, mcs: usize, harq: Harq) {
        let theta = self.threshold(curves, mcs);
        let losses: Vec<f64> = self.estimates.iter().map(|&e| expert_loss(e, theta, harq)).collect();
        self.update_weights(&losses);
        let tau = self.cfg.target_bler;
        for (est, ex) in self.estimates.iter_mut().zip(&self.experts) {
            *est = (*est + ex.step(harq, tau)).clamp(self.cfg.min_db, self.cfg.max_db);
        }
    }

    fn update_weights(&mut self, losses: &[f64]) {
        let lr = self.cfg.hedge_rate;
        let min_loss = losses.iter().copied().fold(f64::INFINITY, f64::min);
        for (w, l) in self.weights.iter_mut().zip(losses) {
            *w *= (-lr * (l - min_loss)).exp();
        }
        let total: f64 = self.weights.iter().sum();
        let n = self.weights.len() as f64;
        if !(total > 0.0 && total.is_finite()) {
            self.weights.iter_mut().for_each(|w| *w = 1.0 / n);
            return;
        }
        let alpha = self.cfg.share_rate;
        for w in &mut self.weights {
            *w = (1.0 - alpha) * (*w / total) + alpha / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcs::McsTable;
    use crate::phy::BlerModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn curves() -> LinkCurves {
        LinkCurves::new(McsTable::table1(), BlerModel::default()).unwrap()
    }

    fn feedback(n: usize, seed: u64) -> Vec<(usize, Harq)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let m = rng.gen_range(0..29);
                let h = if rng.gen_bool(0.7) { Harq::Ack } else { Harq::Nack };
                (m, h)
            })
            .collect()
    }

    #[test]
    fn grid_has_twelve_experts() {
        let g = expert_grid();
        assert_eq!(g.len(), NUM_EXPERTS);
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], Expert { eta: 0.5, beta: 0.0 });
        assert_eq!(g[11], Expert { eta: 3.0, beta: 0.3 });
    }

    #[test]
    fn symmetric_start_predicts_initial_estimate() {
        let s = OcoState::new(OcoConfig {
            init_db: 11.0,
            ..OcoConfig::default()
        });
        assert!((s.predict() - 11.0).abs() < 1e-12);
    }

    #[test]
    fn zero_share_matches_hedge() {
        // Independent Hedge: track each expert's estimate trajectory and its
        // cumulative loss, weights = softmax(-lr * cumulative loss).
        let c = curves();
        let cfg = OcoConfig::default();
        let mut oco = OcoState::new(cfg);
        let experts = expert_grid();
        let mut est = vec![cfg.init_db; experts.len()];
        let mut cum = vec![0.0; experts.len()];
        let margin = (1.0 / cfg.target_bler - 1.0).ln() / 2.0;
        for (step, (m, h)) in feedback(100, 4).into_iter().enumerate() {
            oco.update(&c, m, h);
            let theta = c.gamma50(m) + margin;
            for e in 0..experts.len() {
                cum[e] += match h {
                    Harq::Ack => (theta - est[e]).max(0.0),
                    Harq::Nack => (est[e] - theta).max(0.0),
                };
                let d = match h {
                    Harq::Ack => experts[e].eta * cfg.target_bler * (1.0 + experts[e].beta),
                    Harq::Nack => -experts[e].eta * (1.0 - cfg.target_bler) * (1.0 - experts[e].beta),
                };
                est[e] = (est[e] + d).clamp(cfg.min_db, cfg.max_db);
            }
            let best = cum.iter().copied().fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = cum.iter().map(|l| (-cfg.hedge_rate * (l - best)).exp()).collect();
            let z: f64 = raw.iter().sum();
            for e in 0..experts.len() {
                let w = raw[e] / z;
                assert!((oco.weights()[e] - w).abs() < 1e-12, "step {step} expert {e}: {} vs {w}", oco.weights()[e]);
                assert_eq!(oco.estimates()[e], est[e]);
            }
        }
    }

    #[test]
    fn weights_stay_on_simplex_with_sharing() {
        let c = curves();
        let mut oco = OcoState::new(OcoConfig {
            share_rate: 0.05,
            hedge_rate: 3.0,
            ..OcoConfig::default()
        });
        for (m, h) in feedback(5000, 8) {
            oco.update(&c, m, h);
            let s: f64 = oco.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(oco.weights().iter().all(|&w| w >= 0.0));
            assert!(oco.predict().is_finite());
        }
    }
}
