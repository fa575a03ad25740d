//! Slot-stepped link-adaptation environment.
//!
//! Each step consumes one MCS index per UE, schedules a UE subset, samples HARQ
//! outcomes at the true SINR of the slot, computes the penalized spectral
//! efficiency reward and advances all feedback windows. The reward of UE `u` is
//! `SE_nom(m) * 1{ACK} - lambda_u * 1{NACK}`, where `lambda_u` is the penalty
//! weight accumulated from the UE's earlier scheduled slots.

pub mod scheduler;
pub mod state;

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SinrTrace;
use crate::error::{Error, Result};
use crate::mcs::McsTable;
use crate::phy::{report_effective_sinr, BlerModel, FeedbackConfig, Harq, LinkCurves};
use crate::predictors::{Observation, PredictionContext, PredictorConfig, PredictorHandle, PredictorMode};

pub use scheduler::{schedule, SchedulerConfig};
pub use state::{Layout, StateVector, UeState};

/// Header of the per-slot log.
pub const SLOT_LOG_HEADER: &str = "slot,ue,scheduled,mcs,sinr_true_db,sinr_est_db,ack,se_achieved,reward,lambda";

/// Observation window sizes of the two reference setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    /// 3 reports, 10 HARQ outcomes.
    A,
    /// 1 report, 1 HARQ outcome.
    B,
}

impl Setup {
    pub fn windows(self) -> (usize, usize) {
        match self {
            Setup::A => (3, 10),
            Setup::B => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_cqi: usize,
    pub n_harq: usize,
    pub n_bler: usize,
    /// Integral gain of the BLER penalty; 0 disables it.
    pub k_e: f64,
    /// BLER target of the penalty controller.
    pub tau: f64,
    pub scheduler: SchedulerConfig,
    /// SINR span mapped linearly onto [0, 1].
    pub sinr_norm_range_db: (f64, f64),
    pub bler: BlerModel<f64>,
    pub feedback: FeedbackConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::setup(Setup::A)
    }
}

impl EnvConfig {
    pub fn setup(setup: Setup) -> Self {
        let (n_cqi, n_harq) = setup.windows();
        Self {
            n_cqi,
            n_harq,
            n_bler: 20,
            k_e: 0.0,
            tau: 0.1,
            scheduler: SchedulerConfig::All,
            sinr_norm_range_db: (-10.0, 40.0),
            bler: BlerModel::default(),
            feedback: FeedbackConfig::default(),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n_cqi: self.n_cqi,
            n_harq: self.n_harq,
        }
    }

    pub fn per_ue_len(&self) -> usize {
        self.layout().per_ue()
    }

    pub fn state_len(&self, num_ues: usize) -> usize {
        self.per_ue_len() * num_ues
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cqi == 0 || self.n_harq == 0 || self.n_bler == 0 {
            return Err(Error::Config("n_cqi, n_harq and n_bler must be >= 1".into()));
        }
        if !(self.k_e >= 0.0 && self.k_e.is_finite()) {
            return Err(Error::Config(format!("k_E {} must be >= 0", self.k_e)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau {} must be in (0,1)", self.tau)));
        }
        let (lo, hi) = self.sinr_norm_range_db;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("normalization range ({lo}, {hi}) must satisfy lo < hi")));
        }
        self.bler.validate()?;
        self.feedback.validate()
    }

    pub fn normalize_sinr(&self, db: f64) -> f64 {
        let (lo, hi) = self.sinr_norm_range_db;
        ((db - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn denormalize_sinr(&self, x: f64) -> f64 {
        let (lo, hi) = self.sinr_norm_range_db;
        lo + x * (hi - lo)
    }

    pub fn norm_midpoint_db(&self) -> f64 {
        let (lo, hi) = self.sinr_norm_range_db;
        0.5 * (lo + hi)
    }

    pub fn curves(&self) -> Result<LinkCurves> {
        LinkCurves::new(McsTable::table1(), self.bler)
    }

    /// A predictor whose horizon matches this configuration's report delay.
    pub fn predictor(&self, mode: PredictorMode, num_ues: usize, cfg: &PredictorConfig) -> Result<PredictorHandle> {
        Ok(PredictorHandle::new(
            mode,
            num_ues,
            self.feedback.report_delay_slots,
            self.curves()?,
            cfg,
        ))
    }
}

/// Ground truth and feedback of one UE in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeSlotRecord {
    pub scheduled: bool,
    pub mcs: usize,
    pub true_sinr_db: f64,
    /// The SINR estimate that was in the state for this slot.
    pub est_sinr_db: f64,
    pub reported_sinr_db: f64,
    pub harq: Option<Harq>,
    pub se_achieved: f64,
    /// This UE's term of the slot reward.
    pub reward: f64,
    /// Penalty weight that applied in this slot.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotResult {
    pub slot: usize,
    pub ues: Vec<UeSlotRecord>,
    pub reward: f64,
}

impl SlotResult {
    /// Appends one log row per UE.
    pub fn write_csv_rows(&self, out: &mut String) {
        for (u, r) in self.ues.iter().enumerate() {
            let ack = match r.harq {
                None => -1,
                Some(Harq::Nack) => 0,
                Some(Harq::Ack) => 1,
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{},{:.6},{:.6},{:.6}",
                self.slot,
                u,
                u8::from(r.scheduled),
                r.mcs,
                r.true_sinr_db,
                r.est_sinr_db,
                ack,
                r.se_achieved,
                r.reward,
                r.lambda
            );
        }
    }

    pub fn delivered_se(&self) -> f64 {
        self.ues.iter().map(|r| r.se_achieved).sum()
    }
}

/// Output of [`LinkAdaptEnv::step`].
#[derive(Debug, Clone)]
pub struct Step {
    pub state: StateVector,
    pub reward: f64,
    pub result: SlotResult,
    pub done: bool,
}

/// Expected slot reward without the penalty term:
/// `sum over scheduled u of SE_nom(m_u) * (1 - BLER(m_u, sinr_u))`.
pub fn expected_reward(curves: &LinkCurves, sinr_db: &[f64], action: &[usize], scheduled: &[bool]) -> Result<f64> {
    if sinr_db.len() != action.len() || scheduled.len() != action.len() {
        return Err(Error::Dimension {
            expected: sinr_db.len(),
            got: action.len(),
        });
    }
    let mut total = 0.0;
    for ((&s, &m), &on) in sinr_db.iter().zip(action).zip(scheduled) {
        if m > curves.max_mcs() {
            return Err(Error::McsOutOfRange(m, curves.num_mcs()));
        }
        if on {
            total += curves.expected_se(m, s);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct LinkAdaptEnv {
    cfg: EnvConfig,
    curves: LinkCurves,
    trace: SinrTrace,
    predictor: PredictorHandle,
    ues: Vec<UeState>,
    /// Current-slot SINR estimate per UE (dB), as placed in the state.
    post_db: Vec<f64>,
    /// Latest report per UE (dB).
    report_db: Vec<f64>,
    pf_avg: Vec<f64>,
    slot: usize,
}

impl LinkAdaptEnv {
    /// Builds the environment at slot 0 and returns it with the initial state.
    pub fn reset(cfg: EnvConfig, trace: SinrTrace, predictor: PredictorHandle) -> Result<(Self, StateVector)> {
        cfg.validate()?;
        let n = trace.num_ues();
        if predictor.num_ues() != n {
            return Err(Error::Dimension {
                expected: n,
                got: predictor.num_ues(),
            });
        }
        cfg.scheduler.validate(n)?;
        let curves = cfg.curves()?;
        let mut env = Self {
            ues: Vec::with_capacity(n),
            post_db: vec![0.0; n],
            report_db: vec![0.0; n],
            pf_avg: vec![0.0; n],
            slot: 0,
            curves,
            trace,
            predictor,
            cfg,
        };
        for u in 0..n {
            let r = report_effective_sinr(&env.trace, &env.cfg.feedback, 0, u);
            env.report_db[u] = r;
            env.ues.push(UeState::new(
                env.cfg.n_cqi,
                env.cfg.n_harq,
                env.cfg.n_bler,
                env.cfg.normalize_sinr(r),
            ));
            env.predictor.update(
                u,
                &Observation {
                    report_db: Some(r),
                    harq: None,
                    mcs: None,
                    offset_norm: 0.0,
                },
            );
        }
        env.refresh_estimates();
        let s = env.state();
        Ok((env, s))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn curves(&self) -> &LinkCurves {
        &self.curves
    }

    pub fn trace(&self) -> &SinrTrace {
        &self.trace
    }

    pub fn num_ues(&self) -> usize {
        self.trace.num_ues()
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn num_slots(&self) -> usize {
        self.trace.num_slots()
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.trace.num_slots()
    }

    pub fn ue_state(&self, u: usize) -> &UeState {
        &self.ues[u]
    }

    pub fn predictor_mode(&self) -> PredictorMode {
        self.predictor.mode()
    }

    /// Latest effective-SINR report per UE, dB.
    pub fn latest_reports_db(&self) -> &[f64] {
        &self.report_db
    }

    /// True SINR of the current slot (clamped to the last slot once done).
    pub fn true_sinr_db(&self, u: usize) -> f64 {
        self.trace.get(u, self.slot.min(self.trace.num_slots() - 1))
    }

    pub fn post_estimate_db(&self, u: usize) -> f64 {
        self.post_db[u]
    }

    fn refresh_estimates(&mut self) {
        let t = self.slot.min(self.trace.num_slots() - 1);
        let fallback = self.cfg.norm_midpoint_db();
        for u in 0..self.num_ues() {
            let ctx = PredictionContext {
                true_sinr_db: self.trace.get(u, t),
                latest_report_db: Some(self.report_db[u]),
                fallback_db: fallback,
            };
            self.post_db[u] = if self.predictor.omits_estimate() {
                self.report_db[u]
            } else {
                self.predictor.predict(u, &ctx)
            };
        }
    }

    /// Assembles the observation for the current slot.
    pub fn state(&self) -> StateVector {
        let layout = self.cfg.layout();
        let per_ue = layout.per_ue();
        let max_mcs = self.curves.max_mcs() as f64;
        let mut data = Vec::with_capacity(per_ue * self.num_ues());
        for (u, ue) in self.ues.iter().enumerate() {
            data.push(self.cfg.normalize_sinr(self.post_db[u]));
            data.extend(ue.cqi_window.iter().copied());
            data.extend(ue.harq_window.iter().copied());
            data.push(ue.last_mcs as f64 / max_mcs);
            data.push(ue.bler_estimate());
            data.push(ue.offset_norm());
            data.push(ue.ack_rate());
        }
        StateVector::new(data, per_ue)
    }

    /// UEs that will be scheduled in the current slot.
    pub fn scheduled_now(&self) -> Result<Vec<bool>> {
        schedule(&self.cfg.scheduler, &self.report_db, &self.pf_avg, &self.curves)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: &[usize], rng: &mut R) -> Result<Step> {
        if self.is_done() {
            return Err(Error::EpisodeFinished(self.trace.num_slots()));
        }
        let n = self.num_ues();
        if action.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: action.len(),
            });
        }
        if let Some(&m) = action.iter().find(|&&m| m > self.curves.max_mcs()) {
            return Err(Error::McsOutOfRange(m, self.curves.num_mcs()));
        }
        let scheduled = self.scheduled_now()?;
        let t = self.slot;

        let mut records = Vec::with_capacity(n);
        let mut reward = 0.0;
        for u in 0..n {
            let true_sinr = self.trace.get(u, t);
            let lambda = self.ues[u].lambda;
            let (harq, se, r) = if scheduled[u] {
                let h = self.curves.sample_harq(action[u], true_sinr, rng);
                let se_nom = self.curves.se_nom(action[u]);
                match h {
                    Harq::Ack => (Some(h), se_nom, se_nom),
                    Harq::Nack => (Some(h), 0.0, -lambda),
                }
            } else {
                (None, 0.0, 0.0)
            };
            reward += r;
            records.push(UeSlotRecord {
                scheduled: scheduled[u],
                mcs: if scheduled[u] { action[u] } else { self.ues[u].last_mcs },
                true_sinr_db: true_sinr,
                est_sinr_db: self.post_db[u],
                reported_sinr_db: self.report_db[u],
                harq,
                se_achieved: se,
                reward: r,
                lambda,
            });
        }

        let (tau, k_e) = (self.cfg.tau, self.cfg.k_e);
        let alpha = self.cfg.scheduler.smoothing();
        for (u, rec) in records.iter().enumerate() {
            let outcome = rec.harq.map(|h| (action[u], h));
            self.ues[u].record(outcome, tau, k_e);
            if let Some(a) = alpha {
                self.pf_avg[u] = (1.0 - a) * self.pf_avg[u] + a * rec.se_achieved;
            }
        }

        self.slot += 1;
        let next = self.slot.min(self.trace.num_slots() - 1);
        for u in 0..n {
            let r = report_effective_sinr(&self.trace, &self.cfg.feedback, next, u);
            self.report_db[u] = r;
            let rn = self.cfg.normalize_sinr(r);
            self.ues[u].push_report(rn);
            let obs = Observation {
                report_db: Some(r),
                harq: records[u].harq,
                mcs: records[u].harq.map(|_| action[u]),
                offset_norm: self.ues[u].offset_norm(),
            };
            self.predictor.update(u, &obs);
        }
        self.refresh_estimates();

        Ok(Step {
            state: self.state(),
            reward,
            result: SlotResult {
                slot: t,
                ues: records,
                reward,
            },
            done: self.is_done(),
        })
    }
}
