//! Offline fitted Q-iteration on logged link-adaptation measurements.
//!
//! The Q-function is a random forest over `(cqi, rsrp, bler_inst, direction,
//! mcs)`. Iteration 0 regresses immediate rewards; iteration `i` regresses
//! `r + gamma * max_a Q_{i-1}(s', a)`. Every iteration refits the forest with
//! the same random draws so that successive fits differ only through their
//! targets, which keeps the dataset-average Q curve free of refit noise.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::Controller;
use crate::env::LinkAdaptEnv;
use crate::error::{Error, Result};
use crate::forest::{ForestParams, RandomForest, Samples, TreeParams};
use crate::mcs::{MAX_MCS, NUM_MCS};

pub const DATASET_COLUMNS: [&str; 9] = [
    "cqi",
    "rsrp",
    "bler_inst",
    "mcs",
    "reward",
    "next_cqi",
    "next_rsrp",
    "next_bler",
    "direction",
];
pub const CURVE_HEADER: &str = "iteration,avg_q";
pub const POLICY_HEADER: &str = "mcs,learned_pct,behavior_pct";
/// Features per (state, action) row.
pub const NUM_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Dl,
    Ul,
}

impl Direction {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DL" => Some(Direction::Dl),
            "UL" => Some(Direction::Ul),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Direction::Dl => "DL",
            Direction::Ul => "UL",
        }
    }

    fn code(self) -> f64 {
        match self {
            Direction::Dl => 0.0,
            Direction::Ul => 1.0,
        }
    }
}

/// State features of one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub cqi: i64,
    pub rsrp_dbm: f64,
    pub bler_inst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedSample {
    pub state: LinkState,
    pub mcs: usize,
    pub reward: f64,
    pub next: LinkState,
    pub direction: Direction,
}

impl LoggedSample {
    pub fn features(&self, state: &LinkState, mcs: usize) -> [f64; NUM_FEATURES] {
        [
            state.cqi as f64,
            state.rsrp_dbm,
            state.bler_inst,
            self.direction.code(),
            mcs as f64,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<LoggedSample>,
    /// Rows dropped because their successor fields were empty.
    pub dropped_missing_successor: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_reward(&self) -> f64 {
        self.samples.iter().map(|s| s.reward).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = DATASET_COLUMNS.join(",");
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{:.3},{:.6},{},{:.6},{},{:.3},{:.6},{}",
                s.state.cqi,
                s.state.rsrp_dbm,
                s.state.bler_inst,
                s.mcs,
                s.reward,
                s.next.cqi,
                s.next.rsrp_dbm,
                s.next.bler_inst,
                s.direction.name()
            );
        }
        out
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

/// Parses the logged-sample CSV; columns may appear in any order.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(origin, 1, e.to_string()))?.clone();
    let missing: Vec<String> = DATASET_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| (*c).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema {
            path: origin.into(),
            missing,
        });
    }
    let col = |name: &str| headers.iter().position(|h| h == name).expect("checked above");
    let idx: Vec<usize> = DATASET_COLUMNS.iter().map(|c| col(c)).collect();

    let mut ds = Dataset::default();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("{}: not a number: {:?}", DATASET_COLUMNS[i], field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(origin, line, format!("{} is not finite", DATASET_COLUMNS[i])))
            }
        };
        let int = |i: usize| -> Result<i64> {
            field(i)
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("{}: not an integer: {:?}", DATASET_COLUMNS[i], field(i))))
        };
        let bler = |i: usize| -> Result<f64> {
            let b = num(i)?;
            if (0.0..=1.0).contains(&b) {
                Ok(b)
            } else {
                Err(Error::parse(origin, line, format!("{} {b} outside [0,1]", DATASET_COLUMNS[i])))
            }
        };
        let state = LinkState {
            cqi: int(0)?,
            rsrp_dbm: num(1)?,
            bler_inst: bler(2)?,
        };
        let mcs = int(3)?;
        if !(0..=MAX_MCS as i64).contains(&mcs) {
            return Err(Error::parse(origin, line, format!("mcs {mcs} outside [0,{MAX_MCS}]")));
        }
        let reward = num(4)?;
        if reward < 0.0 {
            return Err(Error::parse(origin, line, format!("reward {reward} is negative")));
        }
        let direction = Direction::parse(field(8))
            .ok_or_else(|| Error::parse(origin, line, format!("direction {:?} is not DL or UL", field(8))))?;
        if (5..8).any(|i| field(i).is_empty()) {
            ds.dropped_missing_successor += 1;
            continue;
        }
        let next = LinkState {
            cqi: int(5)?,
            rsrp_dbm: num(6)?,
            bler_inst: bler(7)?,
        };
        ds.samples.push(LoggedSample {
            state,
            mcs: mcs as usize,
            reward,
            next,
            direction,
        });
    }
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FqiConfig {
    pub iterations: usize,
    pub gamma: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for FqiConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            gamma: 0.5,
            n_trees: 50,
            max_depth: 10,
            min_leaf: 5,
            seed: 0,
        }
    }
}

impl FqiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("FQI discount {} must be in [0,1)", self.gamma)));
        }
        if self.iterations == 0 || self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::Config("iterations, n_trees and max_depth must be >= 1".into()));
        }
        Ok(())
    }

    fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            tree: TreeParams {
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                max_features: None,
            },
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QEnsemble {
    pub forest: RandomForest,
    pub gamma: f64,
    pub iterations: usize,
}

impl QEnsemble {
    pub fn q(&self, sample: &LoggedSample, state: &LinkState, mcs: usize) -> f64 {
        self.forest.predict(&sample.features(state, mcs))
    }

    /// Greedy action at `state`; the lowest index wins ties.
    pub fn greedy(&self, sample: &LoggedSample, state: &LinkState) -> (usize, f64) {
        let mut best = (0, self.q(sample, state, 0));
        for m in 1..NUM_MCS {
            let v = self.q(sample, state, m);
            if v > best.1 {
                best = (m, v);
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct FqiOutcome {
    pub q: QEnsemble,
    /// Dataset-average `Q_i(s, a)` over logged pairs, one entry per iteration.
    pub curve: Vec<f64>,
}

pub fn fqi_train(ds: &Dataset, cfg: &FqiConfig) -> Result<FqiOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Config("FQI needs a non-empty dataset".into()));
    }
    let mut data = Samples::new(NUM_FEATURES);
    for s in &ds.samples {
        data.push(&s.features(&s.state, s.mcs), s.reward);
    }
    let rewards: Vec<f64> = ds.samples.iter().map(|s| s.reward).collect();
    let params = cfg.forest();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut forest: Option<RandomForest> = None;
    for _ in 0..cfg.iterations {
        if let Some(prev) = &forest {
            let q = QEnsemble {
                forest: prev.clone(),
                gamma: cfg.gamma,
                iterations: 0,
            };
            let targets = ds
                .samples
                .iter()
                .zip(&rewards)
                .map(|(s, &r)| {
                    if cfg.gamma == 0.0 {
                        r
                    } else {
                        r + cfg.gamma * q.greedy(s, &s.next).1
                    }
                })
                .collect();
            data.set_targets(targets);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let f = RandomForest::fit(&data, params, &mut rng);
        let avg = (0..data.len()).map(|i| f.predict(data.row(i))).sum::<f64>() / data.len() as f64;
        curve.push(avg);
        forest = Some(f);
    }
    Ok(FqiOutcome {
        q: QEnsemble {
            forest: forest.expect("at least one iteration"),
            gamma: cfg.gamma,
            iterations: cfg.iterations,
        },
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub learned: [f64; NUM_MCS],
    pub behavior: [f64; NUM_MCS],
    pub tv_distance: f64,
}

impl PolicyComparison {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{POLICY_HEADER}\n");
        for m in 0..NUM_MCS {
            let _ = writeln!(out, "{m},{:.4},{:.4}", 100.0 * self.learned[m], 100.0 * self.behavior[m]);
        }
        out
    }
}

/// `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normalized(counts: &[usize; NUM_MCS]) -> [f64; NUM_MCS] {
    let total: usize = counts.iter().sum();
    let mut out = [0.0; NUM_MCS];
    if total > 0 {
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
    }
    out
}

/// Greedy-policy MCS histogram over the logged states versus the logged actions.
pub fn extract_policy(q: &QEnsemble, ds: &Dataset) -> PolicyComparison {
    let mut learned = [0usize; NUM_MCS];
    let mut behavior = [0usize; NUM_MCS];
    for s in &ds.samples {
        learned[q.greedy(s, &s.state).0] += 1;
        behavior[s.mcs] += 1;
    }
    let (learned, behavior) = (normalized(&learned), normalized(&behavior));
    PolicyComparison {
        tv_distance: total_variation(&learned, &behavior),
        learned,
        behavior,
    }
}

pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (i, v) in curve.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:.6}");
    }
    out
}

/// Maps an SINR report to a 4-bit channel quality index (2 dB steps from -6 dB).
pub fn cqi_from_sinr(sinr_db: f64) -> i64 {
    (((sinr_db + 6.0) / 2.0).round() as i64).clamp(0, 15)
}

/// Received reference power proxy in dBm for a given SINR.
pub fn rsrp_from_sinr(sinr_db: f64) -> f64 {
    -110.0 + sinr_db
}

/// Logs a behavior controller on simulated episodes into FQI samples.
///
/// State features come from the report of each slot (CQI and RSRP proxy) and
/// the UE's windowed BLER; the reward is the delivered spectral efficiency.
/// With probability `explore` the behavior action is replaced by a uniformly
/// random MCS. Even-indexed episodes are labeled DL, odd ones UL.
pub fn synthetic_dataset<C: Controller>(
    episodes: impl IntoIterator<Item = (LinkAdaptEnv, crate::env::StateVector, C)>,
    explore: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::default();
    for (e, (mut env, mut state, mut ctrl)) in episodes.into_iter().enumerate() {
        let direction = if e % 2 == 0 { Direction::Dl } else { Direction::Ul };
        let link_state = |env: &LinkAdaptEnv, u: usize| {
            let r = env.latest_reports_db()[u];
            LinkState {
                cqi: cqi_from_sinr(r),
                rsrp_dbm: rsrp_from_sinr(r),
                bler_inst: env.ue_state(u).bler_estimate(),
            }
        };
        ctrl.begin(&env);
        while !env.is_done() {
            let before: Vec<LinkState> = (0..env.num_ues()).map(|u| link_state(&env, u)).collect();
            let mut action = ctrl.act(&env, &state, &mut rng)?;
            for a in &mut action {
                if rng.gen::<f64>() < explore {
                    *a = rng.gen_range(0..NUM_MCS);
                }
            }
            let step = env.step(&action, &mut rng)?;
            let harq: Vec<_> = step.result.ues.iter().map(|r| r.harq).collect();
            ctrl.observe(&env, &harq);
            if !step.done {
                for (u, rec) in step.result.ues.iter().enumerate() {
                    if rec.scheduled {
                        ds.samples.push(LoggedSample {
                            state: before[u],
                            mcs: action[u],
                            reward: rec.se_achieved,
                            next: link_state(&env, u),
                            direction,
                        });
                    }
                }
            }
            state = step.state;
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "cqi,rsrp,bler_inst,mcs,reward,next_cqi,next_rsrp,next_bler,direction";

    fn one(reward: f64) -> Dataset {
        let s = LinkState {
            cqi: 7,
            rsrp_dbm: -95.0,
            bler_inst: 0.1,
        };
        Dataset {
            samples: vec![LoggedSample {
                state: s,
                mcs: 10,
                reward,
                next: s,
                direction: Direction::Dl,
            }],
            dropped_missing_successor: 0,
        }
    }

    #[test]
    fn parses_rows_and_drops_missing_successor() {
        let text = format!(
            "{HEADER}\n7,-95.5,0.1,10,2.3,8,-94,0.05,DL\n3,-101,0,4,0.8,3,-101,0,UL\n9,-90,0.2,20,3.1,9,-90,0.2,dl\n1,-108,1,0,0,,,,UL\n"
        );
        let ds = parse_dataset(&text, "t.csv").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dropped_missing_successor, 1);
        assert_eq!(ds.samples[1].direction, Direction::Ul);
        assert_eq!(ds.samples[0].next.cqi, 8);
    }

    #[test]
    fn schema_and_row_errors() {
        let text = "cqi,bler_inst,mcs,reward,next_cqi,next_rsrp,next_bler,direction\n";
        match parse_dataset(text, "t.csv") {
            Err(Error::Schema { missing, .. }) => assert_eq!(missing, vec!["rsrp".to_string()]),
            other => panic!("{other:?}"),
        }
        let text = format!("{HEADER}\n7,-95,0.1,10,2,8,-94,0,DL\n7,-95,0.1,29,2,8,-94,0,DL\n");
        match parse_dataset(&text, "t.csv") {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("mcs 29"));
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{HEADER}\n7,-95,0.1,10,-1,8,-94,0,DL\n");
        assert!(parse_dataset(&text, "t.csv").is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let ds = one(1.25);
        let back = parse_dataset(&ds.to_csv(), "x").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn single_transition_fixed_point() {
        let out = fqi_train(&one(1.0), &FqiConfig::default()).unwrap();
        let last = *out.curve.last().unwrap();
        assert!((last - 2.0).abs() / 2.0 < 0.01, "{last}");
        assert!((out.curve[15] - 2.0).abs() / 2.0 < 0.01);
    }

    #[test]
    fn zero_discount_curve_is_flat() {
        let cfg = FqiConfig {
            gamma: 0.0,
            iterations: 5,
            n_trees: 5,
            ..FqiConfig::default()
        };
        let mut ds = one(1.0);
        ds.samples.push(LoggedSample {
            mcs: 3,
            reward: 0.4,
            ..ds.samples[0]
        });
        let out = fqi_train(&ds, &cfg).unwrap();
        assert!(out.curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn tie_rule_and_tv() {
        // A single-sample forest is constant in the action: every greedy pick is 0.
        let ds = one(1.0);
        let out = fqi_train(&ds, &FqiConfig { iterations: 1, ..FqiConfig::default() }).unwrap();
        let p = extract_policy(&out.q, &ds);
        assert_eq!(p.learned[0], 1.0);
        assert_eq!(p.behavior[10], 1.0);
        assert_eq!(p.tv_distance, 1.0);
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
    }

    #[test]
    fn greedy_follows_monotone_q() {
        // Q(s, a) = se_nom(a): fit iteration 0 on rewards equal to the table SE.
        let table = crate::mcs::McsTable::table1();
        let base = one(0.0).samples[0];
        let samples = (0..NUM_MCS)
            .flat_map(|m| {
                std::iter::repeat_n(LoggedSample {
                    mcs: m,
                    reward: table.se_nom(m).unwrap(),
                    ..base
                }, 6)
            })
            .collect();
        let ds = Dataset {
            samples,
            dropped_missing_successor: 0,
        };
        let cfg = FqiConfig {
            iterations: 1,
            n_trees: 5,
            ..FqiConfig::default()
        };
        let out = fqi_train(&ds, &cfg).unwrap();
        assert_eq!(extract_policy(&out.q, &ds).learned[28], 1.0);
    }

    #[test]
    fn cqi_mapping() {
        assert_eq!(cqi_from_sinr(-20.0), 0);
        assert_eq!(cqi_from_sinr(0.0), 3);
        assert_eq!(cqi_from_sinr(40.0), 15);
    }
}
