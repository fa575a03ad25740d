//! Rule-based link-adaptation controllers.
//!
//! [`OllaState`] is outer-loop link adaptation: a per-UE SINR offset moved up
//! on ACK and down on NACK with step ratio `(1 - tau) / tau`, applied to the
//! latest report before picking the highest MCS that meets the BLER target.
//!
//! [`SaladState`] is a reconstruction of a self-adapting scheme built from its
//! published components only: a recursive SINR estimate driven by ACK/NACK
//! (anchored to report changes), a windowed bias score that enlarges steps
//! when outcomes drift from the target, occasional aggressive probing, and an
//! integral controller on the operating BLER target.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{Harq, LinkCurves};

/// Offset clamp of OLLA, dB.
pub const OLLA_OFFSET_BOUND_DB: f64 = 15.0;
/// Estimate clamp of SALAD, dB.
pub const SALAD_EST_RANGE_DB: (f64, f64) = (-10.0, 50.0);
/// Clamp of SALAD's adaptive BLER target.
pub const SALAD_TARGET_RANGE: (f64, f64) = (0.01, 0.3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OllaState {
    pub offset_db: Vec<f64>,
    pub delta_ack_db: f64,
    pub delta_nack_db: f64,
    pub target_bler: f64,
}

impl OllaState {
    pub fn new(num_ues: usize, delta_ack_db: f64, target_bler: f64) -> Result<Self> {
        if !(target_bler > 0.0 && target_bler < 1.0) {
            return Err(Error::Config(format!("OLLA target BLER {target_bler} must be in (0,1)")));
        }
        if !(delta_ack_db > 0.0 && delta_ack_db.is_finite()) {
            return Err(Error::Config(format!("OLLA step {delta_ack_db} must be > 0")));
        }
        Ok(Self {
            offset_db: vec![0.0; num_ues],
            delta_ack_db,
            delta_nack_db: delta_ack_db * (1.0 - target_bler) / target_bler,
            target_bler,
        })
    }

    pub fn with_defaults(num_ues: usize) -> Self {
        Self::new(num_ues, 0.1, 0.1).expect("default OLLA parameters are valid")
    }

    pub fn select(&self, curves: &LinkCurves, ue: usize, reported_sinr_db: f64) -> usize {
        curves.highest_mcs_for_target(reported_sinr_db + self.offset_db[ue], self.target_bler)
    }

    pub fn update(&mut self, ue: usize, harq: Harq) {
        let o = &mut self.offset_db[ue];
        *o = match harq {
            Harq::Ack => *o + self.delta_ack_db,
            Harq::Nack => *o - self.delta_nack_db,
        }
        .clamp(-OLLA_OFFSET_BOUND_DB, OLLA_OFFSET_BOUND_DB);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaladConfig {
    /// Learning rate of the recursive estimate, dB per unit.
    pub learning_rate: f64,
    pub bias_threshold: f64,
    pub score_window: usize,
    pub probe_prob: f64,
    pub probe_target: f64,
    pub integral_gain: f64,
    /// Base BLER target the integral loop steers towards.
    pub base_target: f64,
}

impl Default for SaladConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.2,
            bias_threshold: 0.25,
            score_window: 15,
            probe_prob: 0.15,
            probe_target: 0.95,
            integral_gain: 0.05,
            base_target: 0.1,
        }
    }
}

impl SaladConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.bias_threshold >= 0.0
            && self.score_window > 0
            && (0.0..=1.0).contains(&self.probe_prob)
            && self.probe_target > 0.0
            && self.probe_target < 1.0
            && self.integral_gain >= 0.0
            && self.base_target > 0.0
            && self.base_target < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid SALAD parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaladUe {
    pub sinr_est_db: f64,
    pub bler_target: f64,
    /// Last outcomes as (nack, was_probe), most recent last.
    pub window: VecDeque<(bool, bool)>,
    pub last_report_db: Option<f64>,
    pub probing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaladState {
    pub cfg: SaladConfig,
    pub ues: Vec<SaladUe>,
    pub probes: u64,
    pub selections: u64,
}

impl SaladState {
    pub fn new(num_ues: usize, cfg: SaladConfig) -> Result<Self> {
        cfg.validate()?;
        let ue = SaladUe {
            sinr_est_db: 0.0,
            bler_target: cfg.base_target,
            window: VecDeque::with_capacity(cfg.score_window + 1),
            last_report_db: None,
            probing: false,
        };
        Ok(Self {
            cfg,
            ues: vec![ue; num_ues],
            probes: 0,
            selections: 0,
        })
    }

    /// Signed average of `1{NACK} - tau_t` over the score window.
    pub fn bias_score(&self, ue: usize) -> f64 {
        let s = &self.ues[ue];
        if s.window.is_empty() {
            return 0.0;
        }
        let tau = s.bler_target;
        s.window.iter().map(|&(n, _)| f64::from(u8::from(n)) - tau).sum::<f64>() / s.window.len() as f64
    }

    /// BLER of the non-probe outcomes in the window.
    pub fn window_bler(&self, ue: usize) -> Option<f64> {
        let s = &self.ues[ue];
        let (n, k) = s
            .window
            .iter()
            .filter(|&&(_, p)| !p)
            .fold((0usize, 0usize), |(n, k), &(nack, _)| (n + 1, k + usize::from(nack)));
        (n > 0).then(|| k as f64 / n as f64)
    }

    /// Applies a new report (shifting the estimate by the report change) and,
    /// if the UE was scheduled, its HARQ outcome.
    pub fn observe(&mut self, ue: usize, report_db: f64, harq: Option<Harq>) {
        let cfg = self.cfg;
        let (lo, hi) = SALAD_EST_RANGE_DB;
        {
            let s = &mut self.ues[ue];
            s.sinr_est_db = match s.last_report_db {
                None => report_db,
                Some(prev) => s.sinr_est_db + (report_db - prev),
            };
            s.last_report_db = Some(report_db);
        }
        if let Some(h) = harq {
            let probe = self.ues[ue].probing;
            let s = &mut self.ues[ue];
            s.window.push_back((h.is_nack(), probe));
            while s.window.len() > cfg.score_window {
                s.window.pop_front();
            }
            let score = self.bias_score(ue);
            let scale = if score.abs() > cfg.bias_threshold { 1.0 + score.abs() } else { 1.0 };
            let window_bler = self.window_bler(ue);
            let s = &mut self.ues[ue];
            let tau = if probe { cfg.probe_target } else { s.bler_target };
            s.sinr_est_db += match h {
                Harq::Ack => cfg.learning_rate * tau * scale,
                Harq::Nack => -cfg.learning_rate * (1.0 - tau) * scale,
            };
            if let Some(b) = window_bler {
                let (tlo, thi) = SALAD_TARGET_RANGE;
                s.bler_target = (s.bler_target - cfg.integral_gain * (b - cfg.base_target)).clamp(tlo, thi);
            }
        }
        let s = &mut self.ues[ue];
        s.sinr_est_db = if s.sinr_est_db.is_finite() { s.sinr_est_db.clamp(lo, hi) } else { lo };
    }

    /// Picks the MCS for the next transmission, probing with probability `p_probe`.
    pub fn select<R: Rng + ?Sized>(&mut self, curves: &LinkCurves, ue: usize, rng: &mut R) -> usize {
        let probe = self.cfg.probe_prob > 0.0 && rng.gen::<f64>() < self.cfg.probe_prob;
        self.selections += 1;
        self.probes += u64::from(probe);
        let s = &mut self.ues[ue];
        s.probing = probe;
        let target = if probe { self.cfg.probe_target } else { s.bler_target };
        curves.highest_mcs_for_target(s.sinr_est_db, target)
    }

    /// One full controller step: ingest feedback then choose the next MCS.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        curves: &LinkCurves,
        ue: usize,
        report_db: f64,
        harq: Option<Harq>,
        rng: &mut R,
    ) -> usize {
        self.observe(ue, report_db, harq);
        self.select(curves, ue, rng)
    }
}

/// Multi-UE controller driven by the environment's feedback.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Olla(OllaState),
    Salad(SaladState),
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Olla(_) => "olla",
            Baseline::Salad(_) => "salad",
        }
    }

    /// Primes the controller with the reports visible before the first slot.
    pub fn start(&mut self, reports_db: &[f64]) {
        if let Baseline::Salad(s) = self {
            for (u, &r) in reports_db.iter().enumerate() {
                s.observe(u, r, None);
            }
        }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, curves: &LinkCurves, reports_db: &[f64], rng: &mut R) -> Vec<usize> {
        match self {
            Baseline::Olla(o) => (0..reports_db.len()).map(|u| o.select(curves, u, reports_db[u])).collect(),
            Baseline::Salad(s) => (0..reports_db.len()).map(|u| s.select(curves, u, rng)).collect(),
        }
    }

    /// Ingests this slot's HARQ outcomes and the reports for the next slot.
    pub fn observe(&mut self, harq: &[Option<Harq>], next_reports_db: &[f64]) {
        match self {
            Baseline::Olla(o) => {
                for (u, h) in harq.iter().enumerate() {
                    if let Some(h) = h {
                        o.update(u, *h);
                    }
                }
            }
            Baseline::Salad(s) => {
                for (u, h) in harq.iter().enumerate() {
                    s.observe(u, next_reports_db[u], *h);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcs::McsTable;
    use crate::phy::BlerModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curves() -> LinkCurves {
        LinkCurves::new(McsTable::table1(), BlerModel::default()).unwrap()
    }

    #[test]
    fn olla_step_ratio_and_equilibrium() {
        let mut o = OllaState::with_defaults(1);
        assert!((o.delta_nack_db - 0.9).abs() < 1e-12);
        for _ in 0..9 {
            o.update(0, Harq::Ack);
        }
        o.update(0, Harq::Nack);
        assert!(o.offset_db[0].abs() < 1e-12);
    }

    #[test]
    fn olla_clamps() {
        let mut o = OllaState::with_defaults(1);
        for _ in 0..200 {
            o.update(0, Harq::Nack);
        }
        assert_eq!(o.offset_db[0], -15.0);
        for _ in 0..400 {
            o.update(0, Harq::Ack);
        }
        assert_eq!(o.offset_db[0], 15.0);
    }

    #[test]
    fn olla_select_extremes_and_scan() {
        let c = curves();
        let o = OllaState::with_defaults(1);
        assert_eq!(o.select(&c, 0, c.gamma50(28) + 10.0), 28);
        assert_eq!(o.select(&c, 0, c.gamma50(0) - 10.0), 0);
        // Brute-force: largest m with gamma50(m) <= 10 - ln(9)/2.
        let thr = 10.0 - 9f64.ln() / 2.0;
        let mut want = 0;
        for m in 0..29 {
            let se = McsTable::table1().se_nom(m).unwrap();
            let g50 = 10.0 * (2f64.powf(se) - 1.0).log10() + 2.0;
            if g50 <= thr {
                want = m;
            }
        }
        assert_eq!(o.select(&c, 0, 10.0), want);
    }

    #[test]
    fn olla_select_monotone() {
        let c = curves();
        let o = OllaState::with_defaults(1);
        let mut prev = 0;
        for i in 0..2000 {
            let m = o.select(&c, 0, -20.0 + i as f64 * 0.04);
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn olla_tracks_target_on_stationary_channel() {
        let c = curves();
        let mut o = OllaState::with_defaults(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut nacks, n) = (0usize, 20_000usize);
        for _ in 0..n {
            let m = o.select(&c, 0, 15.0);
            let h = c.sample_harq(m, 15.0, &mut rng);
            nacks += usize::from(h.is_nack());
            o.update(0, h);
        }
        let bler = nacks as f64 / n as f64;
        assert!((bler - 0.1).abs() <= 0.03, "BLER {bler}");
    }

    #[test]
    fn salad_steps_match_hand_values() {
        let c = curves();
        let mut s = SaladState::new(1, SaladConfig { probe_prob: 0.0, ..SaladConfig::default() }).unwrap();
        s.observe(0, 10.0, None);
        let _ = s.select(&c, 0, &mut ChaCha8Rng::seed_from_u64(0));
        s.observe(0, 10.0, Some(Harq::Ack));
        assert!((s.ues[0].sinr_est_db - 10.12).abs() < 1e-12);
        let mut s2 = SaladState::new(1, SaladConfig { probe_prob: 0.0, ..SaladConfig::default() }).unwrap();
        s2.observe(0, 10.0, None);
        s2.observe(0, 10.0, Some(Harq::Nack));
        // One NACK in the window: score 0.9 > rho, so the step is scaled by 1.9.
        assert!((s2.ues[0].sinr_est_db - (10.0 - 1.08 * 1.9)).abs() < 1e-12);
    }

    #[test]
    fn salad_saturates_high() {
        let c = curves();
        let mut s = SaladState::new(1, SaladConfig { probe_prob: 0.0, ..SaladConfig::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.observe(0, 50.0, None);
        for _ in 0..100 {
            assert_eq!(s.step(&c, 0, 50.0, Some(Harq::Ack), &mut rng), 28);
        }
    }

    #[test]
    fn salad_probe_rate() {
        let c = curves();
        let mut s = SaladState::new(1, SaladConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        s.observe(0, 10.0, None);
        for _ in 0..10_000 {
            s.select(&c, 0, &mut rng);
        }
        let rate = s.probes as f64 / s.selections as f64;
        assert!((rate - 0.15).abs() < 0.01, "{rate}");
    }

    #[test]
    fn salad_bounded_under_adversarial_feedback() {
        let c = curves();
        let mut s = SaladState::new(1, SaladConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in 0..20_000 {
            let report = if t % 1000 < 500 { 1e6 } else { -1e6 };
            let h = if rng.gen::<f64>() < 0.5 { Harq::Ack } else { Harq::Nack };
            let m = s.step(&c, 0, report, Some(h), &mut rng);
            let u = &s.ues[0];
            assert!(m <= 28);
            assert!(u.sinr_est_db.is_finite());
            assert!((-10.0..=50.0).contains(&u.sinr_est_db));
            assert!((0.01..=0.3).contains(&u.bler_target));
        }
    }
}
