//! Current-slot SINR estimators feeding the `gamma_post` state feature.

pub mod kalman;
pub mod oco;
pub mod trees;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::phy::{Harq, LinkCurves};

pub use kalman::{KfConfig, KfState};
pub use oco::{OcoConfig, OcoState};
pub use trees::{OnlineTreePredictor, TreeKind, TreeLearnerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictorMode {
    /// True SINR of the current slot.
    Oracle,
    /// No estimate: the state carries the latest report in its place.
    Dcqi,
    Kf,
    Dt,
    Rf,
    Oco,
}

impl PredictorMode {
    pub const ALL: [PredictorMode; 6] = [
        PredictorMode::Oracle,
        PredictorMode::Dcqi,
        PredictorMode::Kf,
        PredictorMode::Dt,
        PredictorMode::Rf,
        PredictorMode::Oco,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorMode::Oracle => "oracle",
            PredictorMode::Dcqi => "dcqi",
            PredictorMode::Kf => "kf",
            PredictorMode::Dt => "dt",
            PredictorMode::Rf => "rf",
            PredictorMode::Oco => "oco",
        }
    }
}

impl fmt::Display for PredictorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredictorMode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown predictor mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct PredictorConfig {
    pub kf: KfConfig,
    pub trees: TreeLearnerConfig,
    pub oco: OcoConfig,
    pub seed: u64,
}


/// Feedback for one UE after a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Report that became available for the next slot.
    pub report_db: Option<f64>,
    /// HARQ outcome of the slot, `None` if the UE was not scheduled.
    pub harq: Option<Harq>,
    /// MCS used in the slot, if scheduled.
    pub mcs: Option<usize>,
    /// Normalized offset accumulator after the slot.
    pub offset_norm: f64,
}

/// What the predictor may look at when estimating the current slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionContext {
    /// Ground truth of the slot being predicted; only the oracle reads it.
    pub true_sinr_db: f64,
    pub latest_report_db: Option<f64>,
    /// Returned when nothing has been observed yet.
    pub fallback_db: f64,
}

#[derive(Debug, Clone)]
enum UePredictor {
    Oracle,
    Dcqi,
    Kf(Box<KfState<f64>>),
    Tree(Box<OnlineTreePredictor>),
    Oco(Box<OcoState>),
}

/// Per-UE predictor state for one environment instance.
#[derive(Debug, Clone)]
pub struct PredictorHandle {
    mode: PredictorMode,
    horizon: usize,
    curves: LinkCurves,
    ues: Vec<UePredictor>,
    seen_report: Vec<bool>,
}

impl PredictorHandle {
    /// `horizon` is the report delay: reports describe the slot `horizon` slots back.
    pub fn new(mode: PredictorMode, num_ues: usize, horizon: usize, curves: LinkCurves, cfg: &PredictorConfig) -> Self {
        let ues = (0..num_ues)
            .map(|u| match mode {
                PredictorMode::Oracle => UePredictor::Oracle,
                PredictorMode::Dcqi => UePredictor::Dcqi,
                PredictorMode::Kf => UePredictor::Kf(Box::new(KfState::new(&cfg.kf))),
                PredictorMode::Dt | PredictorMode::Rf => {
                    let kind = if mode == PredictorMode::Dt {
                        TreeKind::Single
                    } else {
                        TreeKind::Forest
                    };
                    let seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(u as u64);
                    UePredictor::Tree(Box::new(OnlineTreePredictor::new(kind, cfg.trees, horizon, seed)))
                }
                PredictorMode::Oco => UePredictor::Oco(Box::new(OcoState::new(cfg.oco))),
            })
            .collect();
        Self {
            mode,
            horizon: horizon.max(1),
            curves,
            ues,
            seen_report: vec![false; num_ues],
        }
    }

    pub fn mode(&self) -> PredictorMode {
        self.mode
    }

    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    /// True when the state should carry the latest report instead of an estimate.
    pub fn omits_estimate(&self) -> bool {
        self.mode == PredictorMode::Dcqi
    }

    pub fn update(&mut self, ue: usize, obs: &Observation) {
        if obs.report_db.is_some() {
            self.seen_report[ue] = true;
        }
        match &mut self.ues[ue] {
            UePredictor::Oracle | UePredictor::Dcqi => {}
            UePredictor::Kf(kf) => {
                kf.step(obs.report_db, obs.harq);
            }
            UePredictor::Tree(t) => {
                if let Some(r) = obs.report_db {
                    t.update(r, obs.offset_norm);
                }
            }
            UePredictor::Oco(o) => {
                if let (Some(h), Some(m)) = (obs.harq, obs.mcs) {
                    o.update(&self.curves, m, h);
                }
            }
        }
    }

    /// Estimate of the current slot's SINR in dB; always finite.
    pub fn predict(&self, ue: usize, ctx: &PredictionContext) -> f64 {
        let fallback = ctx.latest_report_db.unwrap_or(ctx.fallback_db);
        let v = match &self.ues[ue] {
            UePredictor::Oracle => ctx.true_sinr_db,
            UePredictor::Dcqi => fallback,
            UePredictor::Kf(kf) => {
                if kf.is_initialized() {
                    kf.predict(self.horizon)
                } else {
                    fallback
                }
            }
            UePredictor::Tree(t) => t.predict().unwrap_or(fallback),
            UePredictor::Oco(o) => o.predict(),
        };
        if v.is_finite() {
            v
        } else {
            fallback
        }
    }
}
