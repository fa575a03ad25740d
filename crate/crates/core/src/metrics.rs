//! Aggregation of slot results into summary statistics, CDF tables and histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::SlotResult;
use crate::mcs::NUM_MCS;
use crate::phy::Harq;

/// Number of points in every CDF table.
pub const CDF_POINTS: usize = 200;
pub const CDF_HEADER: &str = "value,cumulative_prob";
pub const HISTOGRAM_HEADER: &str = "ue,mcs,count,fraction";

/// Per-(episode, UE) totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellTotals {
    pub slots: u64,
    pub scheduled: u64,
    pub nacks: u64,
    pub se_sum: f64,
    pub reward_sum: f64,
}

impl CellTotals {
    pub fn mean_se(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.se_sum / self.slots as f64
        }
    }

    pub fn bler(&self) -> Option<f64> {
        (self.scheduled > 0).then(|| self.nacks as f64 / self.scheduled as f64)
    }
}

/// Slot results of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub realization: u64,
    pub trace_hash: String,
    pub slots: Vec<SlotResult>,
}

impl EpisodeLog {
    pub fn num_ues(&self) -> usize {
        self.slots.first().map_or(0, |s| s.ues.len())
    }

    pub fn cells(&self) -> Vec<CellTotals> {
        let mut cells = vec![CellTotals::default(); self.num_ues()];
        for s in &self.slots {
            for (c, r) in cells.iter_mut().zip(&s.ues) {
                c.slots += 1;
                c.se_sum += r.se_achieved;
                c.reward_sum += r.reward;
                if r.scheduled {
                    c.scheduled += 1;
                    c.nacks += u64::from(r.harq == Some(Harq::Nack));
                }
            }
        }
        cells
    }

    pub fn mean_slot_reward(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.slots.iter().map(|s| s.reward).sum::<f64>() / self.slots.len() as f64
    }
}

/// Aggregate metrics of one method over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub num_ues: usize,
    /// Mean over all (slot, UE) pairs of the delivered SE.
    pub mean_se: f64,
    /// Median over (episode, UE) cells of the per-cell mean SE.
    pub median_se: f64,
    /// Total NACKs over total scheduled transmissions.
    pub mean_bler: f64,
    /// Median over (episode, UE) cells of the per-cell BLER.
    pub median_bler: f64,
    /// Median MCS over scheduled transmissions.
    pub median_mcs: f64,
    pub mean_reward: f64,
    /// Counts per UE and MCS index of scheduled transmissions.
    pub mcs_histogram: Vec<[u64; NUM_MCS]>,
    pub se_cdf: Vec<(f64, f64)>,
    pub bler_cdf: Vec<(f64, f64)>,
    pub mcs_cdf: Vec<(f64, f64)>,
}

impl MetricsSummary {
    pub fn from_episodes(episodes: &[EpisodeLog]) -> Self {
        let num_ues = episodes.iter().map(EpisodeLog::num_ues).max().unwrap_or(0);
        let mut hist = vec![[0u64; NUM_MCS]; num_ues];
        let mut cell_se = Vec::new();
        let mut cell_bler = Vec::new();
        let mut slot_se = Vec::new();
        let mut mcs = Vec::new();
        let (mut se_sum, mut pairs, mut nacks, mut sched) = (0.0, 0u64, 0u64, 0u64);
        let (mut reward_sum, mut slots) = (0.0, 0u64);
        for ep in episodes {
            for c in ep.cells() {
                cell_se.push(c.mean_se());
                if let Some(b) = c.bler() {
                    cell_bler.push(b);
                }
                se_sum += c.se_sum;
                pairs += c.slots;
                nacks += c.nacks;
                sched += c.scheduled;
            }
            for s in &ep.slots {
                reward_sum += s.reward;
                slots += 1;
                for (u, r) in s.ues.iter().enumerate() {
                    if r.scheduled {
                        hist[u][r.mcs] += 1;
                        mcs.push(r.mcs as f64);
                        slot_se.push(r.se_achieved);
                    }
                }
            }
        }
        let ratio = |a: f64, b: u64| if b == 0 { 0.0 } else { a / b as f64 };
        Self {
            episodes: episodes.len(),
            num_ues,
            mean_se: ratio(se_sum, pairs),
            median_se: median(&cell_se),
            mean_bler: ratio(nacks as f64, sched),
            median_bler: median(&cell_bler),
            median_mcs: median(&mcs),
            mean_reward: ratio(reward_sum, slots),
            mcs_histogram: hist,
            se_cdf: cdf_table(&slot_se, CDF_POINTS),
            bler_cdf: cdf_table(&cell_bler, CDF_POINTS),
            mcs_cdf: cdf_table(&mcs, CDF_POINTS),
        }
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = format!("{HISTOGRAM_HEADER}\n");
        for (u, h) in self.mcs_histogram.iter().enumerate() {
            let total: u64 = h.iter().sum();
            for (m, &c) in h.iter().enumerate() {
                let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
                let _ = writeln!(out, "{u},{m},{c},{frac:.6}");
            }
        }
        out
    }
}

/// Percentage change of `value` relative to `reference`.
pub fn delta_pct(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        100.0 * (value - reference) / reference
    }
}

/// Median with the midpoint convention for even lengths; 0 for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical CDF sampled at `points` probabilities `p_i = (i + 1) / points`;
/// each value is the smallest sample whose empirical CDF reaches `p_i`.
pub fn cdf_table(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    if values.is_empty() || points == 0 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (0..points)
        .map(|i| {
            let p = (i + 1) as f64 / points as f64;
            let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
            (v[rank - 1], p)
        })
        .collect()
}

pub fn cdf_csv(table: &[(f64, f64)]) -> String {
    let mut out = format!("{CDF_HEADER}\n");
    for (v, p) in table {
        let _ = writeln!(out, "{v:.6},{p:.6}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::UeSlotRecord;

    fn rec(scheduled: bool, mcs: usize, harq: Option<Harq>, se: f64) -> UeSlotRecord {
        UeSlotRecord {
            scheduled,
            mcs,
            true_sinr_db: 0.0,
            est_sinr_db: 0.0,
            reported_sinr_db: 0.0,
            harq,
            se_achieved: se,
            reward: se,
            lambda: 0.0,
        }
    }

    #[test]
    fn hand_counted_episode() {
        // Ten slots, one UE: NACK on slots 3 and 7, unscheduled on slot 9.
        let slots = (0..10)
            .map(|t| {
                let r = match t {
                    3 | 7 => rec(true, 10, Some(Harq::Nack), 0.0),
                    9 => rec(false, 10, None, 0.0),
                    _ => rec(true, 10, Some(Harq::Ack), 2.0),
                };
                SlotResult { slot: t, reward: r.reward, ues: vec![r] }
            })
            .collect();
        let ep = EpisodeLog { slots, ..EpisodeLog::default() };
        let m = MetricsSummary::from_episodes(&[ep]);
        assert!((m.mean_bler - 2.0 / 9.0).abs() < 1e-12);
        assert!((m.mean_se - 14.0 / 10.0).abs() < 1e-12);
        assert_eq!(m.median_mcs, 10.0);
        assert_eq!(m.mcs_histogram[0][10], 9);
        assert_eq!(m.se_cdf.len(), CDF_POINTS);
    }

    #[test]
    fn median_and_cdf() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v: Vec<f64> = (1..=400).map(f64::from).collect();
        let t = cdf_table(&v, 200);
        assert_eq!(t[0], (2.0, 0.005));
        assert_eq!(t[199], (400.0, 1.0));
        assert!(t.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn delta_self_is_zero() {
        assert_eq!(delta_pct(3.2, 3.2), 0.0);
        assert!((delta_pct(3.245, 3.688) + 12.012).abs() < 1e-2);
    }
}
