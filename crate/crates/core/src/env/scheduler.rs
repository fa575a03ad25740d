//! Slot-level UE subset selection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::LinkCurves;

/// Floor on the delivered-rate average so a starved UE gets a large but finite metric.
const MIN_AVG_RATE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SchedulerConfig {
    /// Every UE in every slot.
    #[default]
    All,
    /// The `k` UEs with the largest achievable-over-average rate ratio.
    ProportionalFair { k: usize, alpha: f64 },
}

impl SchedulerConfig {
    pub fn validate(&self, num_ues: usize) -> Result<()> {
        match *self {
            SchedulerConfig::All => Ok(()),
            SchedulerConfig::ProportionalFair { k, alpha } => {
                if k == 0 || k > num_ues {
                    return Err(Error::Config(format!("pf scheduler k={k} must be in 1..={num_ues}")));
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Config(format!("pf smoothing {alpha} must be in (0,1]")));
                }
                Ok(())
            }
        }
    }

    pub fn smoothing(&self) -> Option<f64> {
        match *self {
            SchedulerConfig::All => None,
            SchedulerConfig::ProportionalFair { alpha, .. } => Some(alpha),
        }
    }
}

impl fmt::Display for SchedulerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerConfig::All => f.write_str("all"),
            SchedulerConfig::ProportionalFair { k, alpha } => write!(f, "pf({k},{alpha})"),
        }
    }
}

impl FromStr for SchedulerConfig {
    type Err = Error;

    /// Accepts `all` or `pf(k,alpha)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(SchedulerConfig::All);
        }
        let inner = s
            .strip_prefix("pf(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Config(format!("unknown scheduler {s:?}")))?;
        let (k, alpha) = inner
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("scheduler {s:?}: expected pf(k,alpha)")))?;
        Ok(SchedulerConfig::ProportionalFair {
            k: k.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad pf k {k:?}")))?,
            alpha: alpha
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad pf alpha {alpha:?}")))?,
        })
    }
}

/// Returns the scheduled flag per UE.
///
/// `reported_db` is each UE's latest SINR report; `avg_delivered` the
/// exponential average of delivered spectral efficiency.
pub fn schedule(cfg: &SchedulerConfig, reported_db: &[f64], avg_delivered: &[f64], curves: &LinkCurves) -> Result<Vec<bool>> {
    let n = reported_db.len();
    cfg.validate(n)?;
    match *cfg {
        SchedulerConfig::All => Ok(vec![true; n]),
        SchedulerConfig::ProportionalFair { k, .. } => {
            let metric: Vec<f64> = reported_db
                .iter()
                .zip(avg_delivered)
                .map(|(&r, &avg)| {
                    let achievable = curves.expected_se(curves.best_mcs(r), r);
                    achievable / avg.max(MIN_AVG_RATE)
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            // Stable sort keeps the lowest index first among equal metrics.
            order.sort_by(|&a, &b| metric[b].total_cmp(&metric[a]));
            let mut out = vec![false; n];
            for &u in order.iter().take(k) {
                out[u] = true;
            }
            Ok(out)
        }
    }
}
