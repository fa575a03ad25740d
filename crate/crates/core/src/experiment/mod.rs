//! Configuration-driven experiments: paired evaluation of OLLA, SALAD and the
//! learned policy over seeds and channel realizations, with CSV artifacts.
//!
//! Evaluation cell `(seed, r)` always plays channel realization `r` of the
//! scenario seeded with `seed` and draws HARQ outcomes from the stream
//! `(seed, r)`, so every method sees the identical trace. Agents train on
//! realizations starting at [`TRAIN_REALIZATION_OFFSET`], disjoint from the
//! evaluation ones.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{self, Checkpoint, TrainOutcome};
use crate::baselines::{Baseline, OllaState, SaladConfig, SaladState};
use crate::channel::{generate, load_trace, SinrTrace};
use crate::controller::run_episode;
use crate::env::{EnvConfig, LinkAdaptEnv, StateVector, SLOT_LOG_HEADER};
use crate::error::{Error, Result};
use crate::fqi::{self, Dataset, FqiOutcome, PolicyComparison};
use crate::metrics::{cdf_csv, delta_pct, EpisodeLog, MetricsSummary};
use crate::predictors::PredictorMode;
use crate::Policy;

pub use config::{ChannelSource, ExperimentConfig, Method, KEYS};

/// First channel realization index used for training episodes.
pub const TRAIN_REALIZATION_OFFSET: u64 = 1 << 32;
/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LINKADAPT_OUT";

pub const SUMMARY_HEADER: &str =
    "label,method,predictor,k_e,n_cqi,n_harq,episodes,mean_se,median_se,mean_bler,median_bler,median_mcs,mean_reward";
pub const COMPARISON_HEADER: &str = "label,mean_se,median_se,mean_bler,median_bler,median_mcs,delta_se_pct";
pub const KE_SWEEP_HEADER: &str = "k_e,median_se,median_bler,median_mcs,mean_se,mean_bler";
pub const SLOT_LOG_PREFIX: &str = "seed,realization";

/// Channel traces for any (seed, realization) pair.
#[derive(Debug, Clone)]
pub struct Channel {
    cfg: ExperimentConfig,
    loaded: Option<SinrTrace>,
}

impl Channel {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let loaded = match &cfg.channel {
            ChannelSource::Trace(p) => Some(load_trace(p)?),
            ChannelSource::Preset(_) => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            loaded,
        })
    }

    pub fn trace(&self, seed: u64, realization: u64) -> Result<SinrTrace> {
        match &self.loaded {
            Some(t) => Ok(t.clone()),
            None => {
                let sc = self.cfg.scenario(seed)?.expect("preset source");
                generate(&sc, realization)
            }
        }
    }

    pub fn num_ues(&self) -> Result<usize> {
        Ok(self.trace(0, 0)?.num_ues())
    }

    /// Fresh environment on realization `realization` of `seed`.
    pub fn env(
        &self,
        env_cfg: &EnvConfig,
        mode: PredictorMode,
        seed: u64,
        realization: u64,
    ) -> Result<(LinkAdaptEnv, StateVector)> {
        let trace = self.trace(seed, realization)?;
        let pred = env_cfg.predictor(mode, trace.num_ues(), &self.cfg.predictor_config(seed))?;
        LinkAdaptEnv::reset(env_cfg.clone(), trace, pred)
    }
}

fn cell_rng(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

/// Everything produced by one configuration.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub config: ExperimentConfig,
    pub state_len: usize,
    pub summary: MetricsSummary,
    /// Evaluation episodes ordered by (seed, realization).
    pub episodes: Vec<EpisodeLog>,
    /// Trained agents per seed (learned method only).
    pub agents: Vec<(u64, TrainOutcome<f64>)>,
}

impl RunResult {
    pub fn trace_hashes(&self) -> Vec<(u64, u64, &str)> {
        self.episodes
            .iter()
            .map(|e| (e.seed, e.realization, e.trace_hash.as_str()))
            .collect()
    }
}

/// Trains one agent on the training realizations of `seed`.
pub fn train_agent(cfg: &ExperimentConfig, channel: &Channel, seed: u64) -> Result<TrainOutcome<f64>> {
    let env_cfg = cfg.env_config();
    let factory = |e: u64| channel.env(&env_cfg, cfg.predictor, seed, TRAIN_REALIZATION_OFFSET + e);
    let train = agent::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    agent::train::<f64, _>(&factory, &train)
}

/// Evaluates a fixed policy on the evaluation cells of `seed`.
pub fn evaluate_policy(
    cfg: &ExperimentConfig,
    env_cfg: &EnvConfig,
    mode: PredictorMode,
    channel: &Channel,
    policy: &Policy,
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    let realizations: Vec<u64> = (0..cfg.realizations as u64).collect();
    let factory = |r: u64| channel.env(env_cfg, mode, seed, r);
    agent::evaluate(policy, &factory, &realizations, seed)
}

fn baseline_for(method: Method, num_ues: usize, tau: f64) -> Result<Baseline> {
    Ok(match method {
        Method::Olla => Baseline::Olla(OllaState::new(num_ues, 0.1, tau)?),
        Method::Salad => Baseline::Salad(SaladState::new(
            num_ues,
            SaladConfig {
                base_target: tau,
                ..SaladConfig::default()
            },
        )?),
        Method::Rl => unreachable!("learned method has no baseline controller"),
    })
}

fn cells(cfg: &ExperimentConfig) -> Vec<(u64, u64)> {
    cfg.seeds
        .iter()
        .flat_map(|&s| (0..cfg.realizations as u64).map(move |r| (s, r)))
        .collect()
}

/// Runs one configuration end to end (training included for the learned method).
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let channel = Channel::new(cfg)?;
    let env_cfg = cfg.env_config();
    let num_ues = channel.num_ues()?;
    let (episodes, agents) = match cfg.method {
        Method::Olla | Method::Salad => {
            let eps = cells(cfg)
                .into_par_iter()
                .map(|(seed, r)| {
                    let (mut env, state) = channel.env(&env_cfg, PredictorMode::Dcqi, seed, r)?;
                    let mut ctrl = baseline_for(cfg.method, num_ues, cfg.tau)?;
                    run_episode(&mut env, state, &mut ctrl, seed, &mut cell_rng(seed, r))
                })
                .collect::<Result<Vec<_>>>()?;
            (eps, Vec::new())
        }
        Method::Rl => {
            let agents = cfg
                .seeds
                .par_iter()
                .map(|&seed| Ok((seed, train_agent(cfg, &channel, seed)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut eps = Vec::new();
            for (seed, out) in &agents {
                eps.extend(evaluate_policy(cfg, &env_cfg, cfg.predictor, &channel, &out.policy, *seed)?);
            }
            (eps, agents)
        }
    };
    Ok(RunResult {
        label: cfg.label(),
        config: cfg.clone(),
        state_len: env_cfg.state_len(num_ues),
        summary: MetricsSummary::from_episodes(&episodes),
        episodes,
        agents,
    })
}

/// Evaluates a saved policy with the configuration's seeds and realizations.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<RunResult> {
    cfg.validate()?;
    let channel = Channel::new(cfg)?;
    let num_ues = channel.num_ues()?;
    let policy = checkpoint.policy();
    let mut episodes = Vec::new();
    for &seed in &cfg.seeds {
        episodes.extend(evaluate_policy(cfg, &checkpoint.env, checkpoint.predictor, &channel, &policy, seed)?);
    }
    let mut used = cfg.clone();
    used.method = Method::Rl;
    used.predictor = checkpoint.predictor;
    used.n_cqi = checkpoint.env.n_cqi;
    used.n_harq = checkpoint.env.n_harq;
    used.k_e = checkpoint.env.k_e;
    Ok(RunResult {
        label: used.label(),
        state_len: checkpoint.env.state_len(num_ues),
        config: used,
        summary: MetricsSummary::from_episodes(&episodes),
        episodes,
        agents: Vec::new(),
    })
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn summary_row(r: &RunResult) -> String {
    let c = &r.config;
    let m = &r.summary;
    let predictor = if c.method == Method::Rl { c.predictor.name() } else { "-" };
    [
        r.label.clone(),
        c.method.name().into(),
        predictor.into(),
        fmt6(c.k_e),
        c.n_cqi.to_string(),
        c.n_harq.to_string(),
        m.episodes.to_string(),
        fmt6(m.mean_se),
        fmt6(m.median_se),
        fmt6(m.mean_bler),
        fmt6(m.median_bler),
        format!("{:.1}", m.median_mcs),
        fmt6(m.mean_reward),
    ]
    .join(",")
}

pub fn summary_csv(runs: &[&RunResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in runs {
        out.push_str(&summary_row(r));
        out.push('\n');
    }
    out
}

pub fn slot_log_csv(episodes: &[EpisodeLog]) -> String {
    let mut out = format!("{SLOT_LOG_PREFIX},{SLOT_LOG_HEADER}\n");
    let mut rows = String::new();
    for ep in episodes {
        for s in &ep.slots {
            rows.clear();
            s.write_csv_rows(&mut rows);
            for line in rows.lines() {
                let _ = writeln!(out, "{},{},{line}", ep.seed, ep.realization);
            }
        }
    }
    out
}

/// Mean of the `se_achieved` column of a slot log.
pub fn mean_se_from_slot_log(text: &str) -> Result<f64> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let col = header
        .split(',')
        .position(|h| h == "se_achieved")
        .ok_or_else(|| Error::Schema {
            path: "slot log".into(),
            missing: vec!["se_achieved".into()],
        })?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, line) in lines.enumerate() {
        let v: f64 = line
            .split(',')
            .nth(col)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse("slot log", i + 2, "bad se_achieved"))?;
        sum += v;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Serialize)]
struct RunMeta<'a> {
    label: &'a str,
    method: &'a str,
    predictor: &'a str,
    channel: String,
    state_len: usize,
    num_ues: usize,
    seeds: &'a [u64],
    realizations: usize,
    episode_len: usize,
    k_e: f64,
    tau: f64,
    n_cqi: usize,
    n_harq: usize,
    trace_hashes: Vec<(u64, u64, &'a str)>,
    training_updates: Vec<(u64, usize)>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes all artifacts of a run into `dir`, after checking that the summary
/// mean SE agrees with the per-slot log.
pub fn write_run(r: &RunResult, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let log = slot_log_csv(&r.episodes);
    let recomputed = mean_se_from_slot_log(&log)?;
    if (recomputed - r.summary.mean_se).abs() > 1e-5 {
        return Err(Error::Config(format!(
            "summary mean SE {} disagrees with slot log {recomputed}",
            r.summary.mean_se
        )));
    }
    if r.config.write_slot_log {
        write(dir, "slot_log.csv", &log)?;
    }
    write(dir, "summary.csv", &summary_csv(&[r]))?;
    write(dir, "cdf_se.csv", &cdf_csv(&r.summary.se_cdf))?;
    write(dir, "cdf_bler.csv", &cdf_csv(&r.summary.bler_cdf))?;
    write(dir, "cdf_mcs.csv", &cdf_csv(&r.summary.mcs_cdf))?;
    write(dir, "mcs_histogram.csv", &r.summary.histogram_csv())?;
    for (seed, out) in &r.agents {
        write(dir, &format!("training_curve_seed{seed}.csv"), &agent::curve_csv(&out.curve))?;
        let ckpt = Checkpoint::new(
            &out.policy,
            &r.config.channel.label(),
            r.config.predictor,
            &r.config.env_config(),
            &r.config.train,
        );
        ckpt.save(dir.join(format!("policy_seed{seed}.json")))?;
    }
    let c = &r.config;
    let meta = RunMeta {
        label: &r.label,
        method: c.method.name(),
        predictor: c.predictor.name(),
        channel: c.channel.label(),
        state_len: r.state_len,
        num_ues: r.summary.num_ues,
        seeds: &c.seeds,
        realizations: c.realizations,
        episode_len: c.episode_len,
        k_e: c.k_e,
        tau: c.tau,
        n_cqi: c.n_cqi,
        n_harq: c.n_harq,
        trace_hashes: r.trace_hashes(),
        training_updates: r.agents.iter().map(|(s, o)| (*s, o.updates)).collect(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write(dir, "run_meta.json", &json)
}

/// One row of a paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub summary: MetricsSummary,
    pub delta_se_pct: f64,
}

/// Runs every configuration on identical seeds and realizations and reports
/// the SE change of each relative to the run labeled `reference`.
pub fn compare(configs: &[ExperimentConfig], reference: &str) -> Result<(Vec<RunResult>, Vec<ComparisonRow>)> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configurations".into()));
    }
    let first = &configs[0];
    for c in &configs[1..] {
        if c.channel != first.channel
            || c.seeds != first.seeds
            || c.realizations != first.realizations
            || c.episode_len != first.episode_len
            || c.doppler_corr != first.doppler_corr
        {
            return Err(Error::Config(format!(
                "{} and {} do not share scenario, seeds and realizations",
                first.label(),
                c.label()
            )));
        }
    }
    let runs = configs.iter().map(run).collect::<Result<Vec<_>>>()?;
    let hashes = runs[0].trace_hashes();
    for r in &runs[1..] {
        if r.trace_hashes() != hashes {
            return Err(Error::Config(format!("paired traces differ for {}", r.label)));
        }
    }
    let ref_run = runs
        .iter()
        .find(|r| r.label == reference)
        .ok_or_else(|| Error::Config(format!("reference {reference:?} is not among the compared runs")))?;
    let ref_se = ref_run.summary.mean_se;
    let rows = runs
        .iter()
        .map(|r| ComparisonRow {
            label: r.label.clone(),
            summary: r.summary.clone(),
            delta_se_pct: delta_pct(r.summary.mean_se, ref_se),
        })
        .collect();
    Ok((runs, rows))
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let m = &r.summary;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.1},{:.4}",
            r.label, m.mean_se, m.median_se, m.mean_bler, m.median_bler, m.median_mcs, r.delta_se_pct
        );
    }
    out
}

/// Trains and evaluates one agent per penalty gain, sharing seeds.
pub fn sweep_ke(base: &ExperimentConfig, values: &[f64]) -> Result<Vec<RunResult>> {
    if base.method != Method::Rl {
        return Err(Error::Config("sweep-ke requires method=rl".into()));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep-ke needs at least one k_E value".into()));
    }
    values
        .iter()
        .map(|&k| {
            let cfg = ExperimentConfig {
                k_e: k,
                ..base.clone()
            };
            run(&cfg)
        })
        .collect()
}

pub fn ke_sweep_csv(runs: &[RunResult]) -> String {
    let mut out = format!("{KE_SWEEP_HEADER}\n");
    for r in runs {
        let m = &r.summary;
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.1},{:.6},{:.6}",
            r.config.k_e, m.median_se, m.median_bler, m.median_mcs, m.mean_se, m.mean_bler
        );
    }
    out
}

/// OLLA-driven logging with random exploration on the first seed's channel.
pub fn synthetic_fqi_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let channel = Channel::new(cfg)?;
    let env_cfg = cfg.env_config();
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let num_ues = channel.num_ues()?;
    let episodes = (0..cfg.synthetic_episodes as u64)
        .map(|r| {
            let (env, state) = channel.env(&env_cfg, PredictorMode::Dcqi, seed, r)?;
            Ok((env, state, Baseline::Olla(OllaState::new(num_ues, 0.1, cfg.tau)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    fqi::synthetic_dataset(episodes, cfg.explore, seed)
}

#[derive(Debug, Clone)]
pub struct FqiRun {
    pub dataset: Dataset,
    pub synthetic: bool,
    pub outcome: FqiOutcome,
    pub policy: PolicyComparison,
}

pub fn run_fqi(cfg: &ExperimentConfig) -> Result<FqiRun> {
    cfg.fqi.validate()?;
    let (dataset, synthetic) = match &cfg.dataset {
        Some(p) => (fqi::load_dataset(p)?, false),
        None => {
            cfg.validate()?;
            (synthetic_fqi_dataset(cfg)?, true)
        }
    };
    let fcfg = fqi::FqiConfig {
        seed: cfg.seeds.first().copied().unwrap_or(0),
        ..cfg.fqi
    };
    let outcome = fqi::fqi_train(&dataset, &fcfg)?;
    let policy = fqi::extract_policy(&outcome.q, &dataset);
    Ok(FqiRun {
        dataset,
        synthetic,
        outcome,
        policy,
    })
}

pub fn write_fqi(r: &FqiRun, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write(dir, "fqi_curve.csv", &fqi::curve_csv(&r.outcome.curve))?;
    write(dir, "fqi_policy.csv", &r.policy.to_csv())?;
    if r.synthetic {
        write(dir, "fqi_dataset.csv", &r.dataset.to_csv())?;
    }
    let meta = serde_json::json!({
        "samples": r.dataset.len(),
        "dropped_missing_successor": r.dataset.dropped_missing_successor,
        "synthetic": r.synthetic,
        "iterations": r.outcome.curve.len(),
        "final_avg_q": r.outcome.curve.last(),
        "tv_distance": r.policy.tv_distance,
    });
    write(dir, "fqi_meta.json", &serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?)
}

/// Output directory: explicit setting, else `$LINKADAPT_OUT/<command>`, else
/// `linkadapt-out/<command>`.
pub fn output_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("linkadapt-out"));
    root.join(command)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(method: Method) -> ExperimentConfig {
        ExperimentConfig {
            method,
            seeds: vec![0, 1],
            realizations: 2,
            episode_len: 300,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn olla_run_is_deterministic_and_consistent() {
        let a = run(&quick(Method::Olla)).unwrap();
        let b = run(&quick(Method::Olla)).unwrap();
        assert_eq!(summary_csv(&[&a]), summary_csv(&[&b]));
        assert_eq!(a.episodes.len(), 4);
        assert_eq!(a.state_len, 54);
        let log = slot_log_csv(&a.episodes);
        assert!((mean_se_from_slot_log(&log).unwrap() - a.summary.mean_se).abs() < 1e-5);
    }

    #[test]
    fn methods_share_traces() {
        let (runs, rows) = compare(&[quick(Method::Olla), quick(Method::Salad)], "olla").unwrap();
        assert_eq!(runs[0].trace_hashes(), runs[1].trace_hashes());
        assert_eq!(rows[0].delta_se_pct, 0.0);
    }

    #[test]
    fn compare_rejects_mismatch() {
        let mut b = quick(Method::Salad);
        b.seeds = vec![5];
        assert!(matches!(compare(&[quick(Method::Olla), b], "olla"), Err(Error::Config(_))));
        assert!(compare(&[quick(Method::Olla), quick(Method::Salad)], "rl-kf").is_err());
    }

    #[test]
    fn sweep_requires_learned_method() {
        assert!(sweep_ke(&quick(Method::Olla), &[0.0]).is_err());
    }
}
