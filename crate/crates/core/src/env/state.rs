//! Per-UE feedback state and the flat observation vector.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::phy::{harq_code, Harq, UNSCHEDULED};

/// Accumulator increment on ACK.
pub const OFFSET_ACK_STEP: f64 = 0.1;
/// Accumulator decrement on NACK.
pub const OFFSET_NACK_STEP: f64 = 0.9;
/// The offset accumulator saturates at +-this value; the state carries it divided by the bound.
pub const OFFSET_BOUND: f64 = 5.0;

/// Per-UE scalar features besides the two windows: estimate, MCS, BLER, offset, ACK rate.
pub const EXTRA_FEATURES: usize = 5;

/// Feedback windows and accumulators of one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    /// Normalized reports, most recent first.
    pub cqi_window: VecDeque<f64>,
    /// HARQ codes in {-1, 0, 1}, most recent first.
    pub harq_window: VecDeque<f64>,
    /// Last scheduled MCS index; frozen while unscheduled.
    pub last_mcs: usize,
    /// Outcomes (true = NACK) of the last `n_bler` scheduled slots.
    pub bler_window: VecDeque<bool>,
    pub offset_accum: f64,
    pub acks: u64,
    pub scheduled: u64,
    /// Penalty weight applied to a NACK in the next scheduled slot.
    pub lambda: f64,
    /// Running sum of `1{NACK} - tau` over scheduled slots.
    pub penalty_integral: f64,
    n_bler: usize,
}

impl UeState {
    pub fn new(n_cqi: usize, n_harq: usize, n_bler: usize, initial_report_norm: f64) -> Self {
        Self {
            cqi_window: std::iter::repeat_n(initial_report_norm, n_cqi).collect(),
            harq_window: std::iter::repeat_n(UNSCHEDULED, n_harq).collect(),
            last_mcs: 0,
            bler_window: VecDeque::with_capacity(n_bler),
            offset_accum: 0.0,
            acks: 0,
            scheduled: 0,
            lambda: 0.0,
            penalty_integral: 0.0,
            n_bler,
        }
    }

    /// Running ACK rate over the episode's scheduled slots (0 before any).
    pub fn ack_rate(&self) -> f64 {
        if self.scheduled == 0 {
            0.0
        } else {
            self.acks as f64 / self.scheduled as f64
        }
    }

    /// `sum NACK / sum scheduled` over the BLER window, 0 when empty.
    pub fn bler_estimate(&self) -> f64 {
        if self.bler_window.is_empty() {
            0.0
        } else {
            self.bler_window.iter().filter(|&&n| n).count() as f64 / self.bler_window.len() as f64
        }
    }

    pub fn offset_norm(&self) -> f64 {
        self.offset_accum / OFFSET_BOUND
    }

    pub fn push_report(&mut self, report_norm: f64) {
        self.cqi_window.pop_back();
        self.cqi_window.push_front(report_norm);
    }

    /// Records one slot's outcome; `None` means the UE was not scheduled.
    pub fn record(&mut self, outcome: Option<(usize, Harq)>, tau: f64, k_e: f64) {
        self.harq_window.pop_back();
        self.harq_window.push_front(harq_code(outcome.map(|o| o.1)));
        let Some((mcs, harq)) = outcome else {
            return;
        };
        self.last_mcs = mcs;
        self.scheduled += 1;
        if harq.is_ack() {
            self.acks += 1;
        }
        if self.n_bler > 0 {
            if self.bler_window.len() == self.n_bler {
                self.bler_window.pop_front();
            }
            self.bler_window.push_back(harq.is_nack());
        }
        let step = if harq.is_ack() {
            OFFSET_ACK_STEP
        } else {
            -OFFSET_NACK_STEP
        };
        self.offset_accum = (self.offset_accum + step).clamp(-OFFSET_BOUND, OFFSET_BOUND);
        self.penalty_integral += if harq.is_nack() { 1.0 } else { 0.0 } - tau;
        self.lambda = (k_e * self.penalty_integral).max(0.0);
    }
}

/// Concatenated per-UE observation blocks of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    data: Vec<f64>,
    per_ue: usize,
}

impl StateVector {
    pub fn new(data: Vec<f64>, per_ue: usize) -> Self {
        assert!(per_ue > 0 && data.len().is_multiple_of(per_ue), "state length must be a multiple of the block size");
        Self { data, per_ue }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn per_ue(&self) -> usize {
        self.per_ue
    }

    pub fn num_ues(&self) -> usize {
        self.data.len() / self.per_ue
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn ue(&self, u: usize) -> &[f64] {
        &self.data[u * self.per_ue..(u + 1) * self.per_ue]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }
}

/// Block layout: `[post, cqi x n_cqi, harq x n_harq, mcs, bler, offset, ack_rate]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_cqi: usize,
    pub n_harq: usize,
}

impl Layout {
    pub fn per_ue(&self) -> usize {
        self.n_cqi + self.n_harq + EXTRA_FEATURES
    }

    pub fn post(&self) -> usize {
        0
    }

    pub fn cqi(&self, k: usize) -> usize {
        1 + k
    }

    pub fn harq(&self, k: usize) -> usize {
        1 + self.n_cqi + k
    }

    pub fn mcs(&self) -> usize {
        1 + self.n_cqi + self.n_harq
    }

    pub fn bler(&self) -> usize {
        self.mcs() + 1
    }

    pub fn offset(&self) -> usize {
        self.mcs() + 2
    }

    pub fn ack_rate(&self) -> usize {
        self.mcs() + 3
    }

    /// Checks the declared ranges of one UE block.
    pub fn block_in_range(&self, block: &[f64]) -> bool {
        if block.len() != self.per_ue() || block.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(block[self.post()])
            && (0..self.n_cqi).all(|k| unit(block[self.cqi(k)]))
            && (0..self.n_harq).all(|k| matches!(block[self.harq(k)], x if x == -1.0 || x == 0.0 || x == 1.0))
            && unit(block[self.mcs()])
            && unit(block[self.bler()])
            && (-1.0..=1.0).contains(&block[self.offset()])
            && unit(block[self.ack_rate()])
    }
}
