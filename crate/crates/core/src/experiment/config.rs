//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{RewardCredit, TrainConfig};
use crate::channel::ChannelScenario;
use crate::env::{EnvConfig, SchedulerConfig, Setup};
use crate::error::{Error, Result};
use crate::fqi::FqiConfig;
use crate::predictors::{PredictorConfig, PredictorMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Olla,
    Salad,
    Rl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Olla => "olla",
            Method::Salad => "salad",
            Method::Rl => "rl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "olla" => Ok(Method::Olla),
            "salad" => Ok(Method::Salad),
            "rl" => Ok(Method::Rl),
            other => Err(Error::Config(format!("unknown method {other:?} (olla, salad, rl)"))),
        }
    }
}

/// Where the channel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelSource {
    Preset(String),
    Trace(PathBuf),
}

impl ChannelSource {
    pub fn label(&self) -> String {
        match self {
            ChannelSource::Preset(n) => n.clone(),
            ChannelSource::Trace(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub channel: ChannelSource,
    pub method: Method,
    pub predictor: PredictorMode,
    pub n_cqi: usize,
    pub n_harq: usize,
    pub k_e: f64,
    pub tau: f64,
    pub seeds: Vec<u64>,
    pub realizations: usize,
    pub episode_len: usize,
    pub scheduler: SchedulerConfig,
    pub report_delay: usize,
    pub quant_step_db: f64,
    pub doppler_corr: Option<f64>,
    pub train: TrainConfig,
    pub fqi: FqiConfig,
    pub dataset: Option<PathBuf>,
    pub synthetic_episodes: usize,
    pub explore: f64,
    pub checkpoint: Option<PathBuf>,
    pub write_slot_log: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            channel: ChannelSource::Preset("paper-3ue".into()),
            method: Method::Rl,
            predictor: PredictorMode::Oracle,
            n_cqi: env.n_cqi,
            n_harq: env.n_harq,
            k_e: env.k_e,
            tau: env.tau,
            seeds: (0..5).collect(),
            realizations: 10,
            episode_len: 1000,
            scheduler: env.scheduler,
            report_delay: env.feedback.report_delay_slots,
            quant_step_db: env.feedback.quant_step_db,
            doppler_corr: None,
            train: TrainConfig {
                episodes: 200,
                ..TrainConfig::default()
            },
            fqi: FqiConfig::default(),
            dataset: None,
            synthetic_episodes: 4,
            explore: 0.3,
            checkpoint: None,
            write_slot_log: true,
            output_dir: None,
        }
    }
}

/// Every accepted key with its default and meaning, for help output.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("scenario", "paper-3ue", "channel preset: paper-3ue, static-3ue, slow-1ue"),
    ("trace", "", "SINR trace CSV (slot,ue,sinr_db); replaces the preset"),
    ("method", "rl", "olla, salad or rl"),
    ("predictor", "oracle", "SINR input of the agent: oracle, dcqi, kf, dt, rf, oco"),
    ("setup", "A", "observation windows: A = (3 reports, 10 HARQ), B = (1, 1)"),
    ("n_cqi", "3", "report window (overrides setup)"),
    ("n_harq", "10", "HARQ window (overrides setup)"),
    ("k_e", "0", "integral gain of the BLER penalty"),
    ("tau", "0.1", "BLER target"),
    ("seeds", "5", "seed count N (seeds 0..N) or a comma list"),
    ("realizations", "10", "channel realizations per seed"),
    ("episode_len", "1000", "slots per episode"),
    ("scheduler", "all", "all or pf(k,alpha)"),
    ("report_delay", "1", "report delay in slots"),
    ("quant_step_db", "1", "report quantization step, dB (0 disables)"),
    ("doppler_corr", "0.993", "per-slot fading correlation of the preset"),
    ("train_episodes", "200", "training episodes per agent"),
    ("learning_rate", "3e-4", "optimizer step size"),
    ("clip", "0.2", "surrogate clip range"),
    ("entropy_coef", "0.05", "entropy bonus weight"),
    ("rollout_len", "2048", "UE transitions per policy update"),
    ("minibatch", "256", "minibatch size"),
    ("epochs", "10", "passes over each rollout"),
    ("hidden", "64", "hidden units per layer"),
    ("reward_credit", "per-ue", "per-ue or summed"),
    ("dataset", "", "logged-sample CSV for fqi (synthetic data if empty)"),
    ("fqi_iterations", "30", "Bellman iterations"),
    ("gamma", "0.5", "FQI discount"),
    ("n_trees", "50", "trees in the Q forest"),
    ("max_depth", "10", "tree depth limit"),
    ("min_leaf", "5", "minimum samples per leaf"),
    ("synthetic_episodes", "4", "OLLA episodes logged for a synthetic FQI dataset"),
    ("explore", "0.3", "random-MCS probability of the synthetic logging policy"),
    ("checkpoint", "", "policy checkpoint for evaluate"),
    ("slot_log", "true", "write per-slot logs"),
    ("output_dir", "", "output directory (default: $LINKADAPT_OUT/<command>)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {value:?}"))),
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let v = value.trim();
    if v.contains(',') {
        v.split(',')
            .map(|s| parse::<u64>("seeds", s))
            .collect()
    } else {
        let n: u64 = parse("seeds", v)?;
        if n == 0 {
            return Err(Error::Config("seeds: need at least one seed".into()));
        }
        Ok((0..n).collect())
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().replace('-', "_");
        match k.as_str() {
            "scenario" => self.channel = ChannelSource::Preset(value.trim().to_string()),
            "trace" => self.channel = ChannelSource::Trace(PathBuf::from(value.trim())),
            "method" => self.method = value.parse()?,
            "predictor" => self.predictor = value.parse()?,
            "setup" => {
                let setup = match value.trim().to_ascii_uppercase().as_str() {
                    "A" => Setup::A,
                    "B" => Setup::B,
                    other => return Err(Error::Config(format!("setup: expected A or B, got {other:?}"))),
                };
                (self.n_cqi, self.n_harq) = setup.windows();
            }
            "n_cqi" => self.n_cqi = parse(&k, value)?,
            "n_harq" => self.n_harq = parse(&k, value)?,
            "k_e" => self.k_e = parse(&k, value)?,
            "tau" => self.tau = parse(&k, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "realizations" => self.realizations = parse(&k, value)?,
            "episode_len" => self.episode_len = parse(&k, value)?,
            "scheduler" => self.scheduler = value.parse()?,
            "report_delay" => self.report_delay = parse(&k, value)?,
            "quant_step_db" => self.quant_step_db = parse(&k, value)?,
            "doppler_corr" => self.doppler_corr = Some(parse(&k, value)?),
            "train_episodes" => self.train.episodes = parse(&k, value)?,
            "learning_rate" => self.train.learning_rate = parse(&k, value)?,
            "clip" => self.train.clip = parse(&k, value)?,
            "entropy_coef" => self.train.entropy_coef = parse(&k, value)?,
            "rollout_len" => self.train.rollout_len = parse(&k, value)?,
            "minibatch" => self.train.minibatch = parse(&k, value)?,
            "epochs" => self.train.epochs = parse(&k, value)?,
            "hidden" => self.train.hidden = parse(&k, value)?,
            "reward_credit" => {
                self.train.reward_credit = match value.trim() {
                    "per-ue" | "per_ue" => RewardCredit::PerUe,
                    "summed" => RewardCredit::Summed,
                    other => return Err(Error::Config(format!("reward_credit: expected per-ue or summed, got {other:?}"))),
                }
            }
            "dataset" => self.dataset = Some(PathBuf::from(value.trim())),
            "fqi_iterations" => self.fqi.iterations = parse(&k, value)?,
            "gamma" => self.fqi.gamma = parse(&k, value)?,
            "n_trees" => self.fqi.n_trees = parse(&k, value)?,
            "max_depth" => self.fqi.max_depth = parse(&k, value)?,
            "min_leaf" => self.fqi.min_leaf = parse(&k, value)?,
            "synthetic_episodes" => self.synthetic_episodes = parse(&k, value)?,
            "explore" => self.explore = parse(&k, value)?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value.trim())),
            "slot_log" => self.write_slot_log = parse_bool(&k, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value.trim())),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn env_config(&self) -> EnvConfig {
        let mut env = EnvConfig {
            n_cqi: self.n_cqi,
            n_harq: self.n_harq,
            k_e: self.k_e,
            tau: self.tau,
            scheduler: self.scheduler,
            ..EnvConfig::default()
        };
        env.feedback.report_delay_slots = self.report_delay;
        env.feedback.quant_step_db = self.quant_step_db;
        env
    }

    pub fn predictor_config(&self, seed: u64) -> PredictorConfig {
        PredictorConfig {
            seed,
            ..PredictorConfig::default()
        }
    }

    /// The preset scenario, with the episode length and seed applied.
    pub fn scenario(&self, seed: u64) -> Result<Option<ChannelScenario>> {
        match &self.channel {
            ChannelSource::Trace(_) => Ok(None),
            ChannelSource::Preset(name) => {
                let mut sc = ChannelScenario::named(name).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown scenario {name:?} (presets: {})",
                        ChannelScenario::preset_names().join(", ")
                    ))
                })?;
                sc.num_slots = self.episode_len;
                sc.seed = seed;
                if let Some(dc) = self.doppler_corr {
                    sc.doppler_corr = dc;
                }
                sc.validate()?;
                Ok(Some(sc))
            }
        }
    }

    /// Short label such as `olla` or `rl-kf`.
    pub fn label(&self) -> String {
        match self.method {
            Method::Rl => format!("rl-{}", self.predictor),
            m => m.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: need at least one seed".into()));
        }
        if self.realizations == 0 || self.episode_len == 0 {
            return Err(Error::Config("realizations and episode_len must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.explore) {
            return Err(Error::Config(format!("explore {} must be in [0,1]", self.explore)));
        }
        self.env_config().validate()?;
        self.scenario(0)?;
        if self.method == Method::Rl {
            self.train.validate()?;
        }
        self.fqi.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_text() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# comment\nmethod = olla\nseeds=3\nsetup=B\nk_e=0.1 # inline\nscheduler=pf(1,0.05)\n",
            "x",
        )
        .unwrap();
        assert_eq!(c.method, Method::Olla);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!((c.n_cqi, c.n_harq), (1, 1));
        assert_eq!(c.k_e, 0.1);
        assert_eq!(c.env_config().state_len(3), 21);
        c.set("seeds", "4,9").unwrap();
        assert_eq!(c.seeds, vec![4, 9]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn setup_a_dimensions() {
        let c = ExperimentConfig::default();
        assert_eq!(c.env_config().state_len(3), 54);
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = ExperimentConfig::default();
        assert!(matches!(c.set("bogus", "1"), Err(Error::Config(m)) if m.contains("bogus")));
        assert!(c.apply_text("method olla", "f").is_err());
        c.set("scenario", "nowhere").unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.set("tau", "1.5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_key_is_accepted() {
        for (k, default, _) in KEYS {
            let mut c = ExperimentConfig::default();
            let v = match *k {
                "trace" | "dataset" | "checkpoint" | "output_dir" => "x.csv",
                _ => default,
            };
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
