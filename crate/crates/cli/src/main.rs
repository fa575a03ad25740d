//! `linkadapt` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration or usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linkadapt::agent::Checkpoint;
use linkadapt::experiment::{self, ExperimentConfig, Method, KEYS};
use linkadapt::predictors::PredictorMode;
use linkadapt::Error;

fn keys_help() -> String {
    let mut s = String::from("Configuration keys (config file lines `key = value`, or --set key=value):\n");
    for (k, d, help) in KEYS {
        let d = if d.is_empty() { "-" } else { d };
        s.push_str(&format!("  {k:<20} [default: {d}] {help}\n"));
    }
    s.push_str(&format!(
        "\nOutputs go to --output-dir, else ${}/<command>, else ./linkadapt-out/<command>.\n",
        experiment::OUTPUT_ROOT_ENV
    ));
    s
}

#[derive(Parser, Debug)]
#[command(name = "linkadapt", version, about = "Slot-level link-adaptation experiments", after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Channel preset.
    #[arg(long)]
    scenario: Option<String>,
    /// SINR trace CSV replacing the preset.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// olla, salad or rl.
    #[arg(long)]
    method: Option<String>,
    /// oracle, dcqi, kf, dt, rf or oco.
    #[arg(long)]
    predictor: Option<String>,
    /// A or B.
    #[arg(long)]
    setup: Option<String>,
    /// Seed count N (seeds 0..N) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    realizations: Option<String>,
    #[arg(long = "k-e")]
    k_e: Option<String>,
    #[arg(long = "episode-len")]
    episode_len: Option<String>,
    #[arg(long = "train-episodes")]
    train_episodes: Option<String>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one method (training it first if learned).
    Run(Common),
    /// Train a policy and save its checkpoint and training curve.
    Train(Common),
    /// Evaluate a saved policy checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Paired comparison of several methods.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma list of olla, salad, rl:<predictor>.
        #[arg(long, default_value = "olla,salad,rl:oracle")]
        methods: String,
        /// Reference entry for the SE change column.
        #[arg(long, default_value = "rl:oracle")]
        reference: String,
    },
    /// Train and evaluate one agent per penalty gain.
    SweepKe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0,0.025,0.1,0.5")]
        values: String,
    },
    /// Offline fitted Q-iteration on a logged dataset (synthetic if none given).
    Fqi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn build_config(c: &Common) -> linkadapt::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| match e {
            Error::Io { path, source } => Error::Config(format!("cannot read {}: {source}", path.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    let flags: [(&str, Option<String>); 10] = [
        ("scenario", c.scenario.clone()),
        ("trace", c.trace.as_ref().map(|p| p.display().to_string())),
        ("method", c.method.clone()),
        ("predictor", c.predictor.clone()),
        ("setup", c.setup.clone()),
        ("seeds", c.seeds.clone()),
        ("realizations", c.realizations.clone()),
        ("k_e", c.k_e.clone()),
        ("episode_len", c.episode_len.clone()),
        ("train_episodes", c.train_episodes.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(d) = &c.output_dir {
        cfg.output_dir = Some(d.clone());
    }
    Ok(cfg)
}

/// `olla`, `salad` or `rl:<predictor>`.
fn method_spec(base: &ExperimentConfig, spec: &str) -> linkadapt::Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let spec = spec.trim();
    match spec.split_once(':') {
        Some((m, p)) => {
            cfg.method = m.parse()?;
            if cfg.method != Method::Rl {
                return Err(Error::Config(format!("{spec:?}: only rl takes a predictor")));
            }
            cfg.predictor = p.parse::<PredictorMode>()?;
        }
        None => cfg.method = spec.parse()?,
    }
    Ok(cfg)
}

fn report(dir: &Path) {
    eprintln!("wrote {}", dir.display());
}

fn execute(cmd: Command) -> linkadapt::Result<()> {
    match cmd {
        Command::Run(c) => {
            let cfg = build_config(&c)?;
            let r = experiment::run(&cfg)?;
            let dir = experiment::output_dir(&cfg, "run");
            experiment::write_run(&r, &dir)?;
            print!("{}", experiment::summary_csv(&[&r]));
            eprintln!("state length {}", r.state_len);
            report(&dir);
        }
        Command::Train(c) => {
            let mut cfg = build_config(&c)?;
            cfg.method = Method::Rl;
            cfg.validate()?;
            let seed = cfg.seeds[0];
            let channel = experiment::Channel::new(&cfg)?;
            let out = experiment::train_agent(&cfg, &channel, seed)?;
            let dir = experiment::output_dir(&cfg, "train");
            experiment::ensure_dir(&dir)?;
            let ckpt = Checkpoint::new(&out.policy, &cfg.channel.label(), cfg.predictor, &cfg.env_config(), &cfg.train);
            ckpt.save(dir.join("policy.json"))?;
            let curve = dir.join("training_curve.csv");
            std::fs::write(&curve, linkadapt::agent::curve_csv(&out.curve)).map_err(|e| Error::Io {
                path: curve.clone(),
                source: e,
            })?;
            println!("episodes {} updates {}", out.curve.len(), out.updates);
            report(&dir);
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = build_config(&common)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let r = experiment::evaluate_checkpoint(&cfg, &ckpt)?;
            let dir = experiment::output_dir(&cfg, "evaluate");
            experiment::write_run(&r, &dir)?;
            print!("{}", experiment::summary_csv(&[&r]));
            report(&dir);
        }
        Command::Compare {
            common,
            methods,
            reference,
        } => {
            let base = build_config(&common)?;
            let configs = methods
                .split(',')
                .map(|m| method_spec(&base, m))
                .collect::<linkadapt::Result<Vec<_>>>()?;
            let reference = method_spec(&base, &reference)?.label();
            let (runs, rows) = experiment::compare(&configs, &reference)?;
            let dir = experiment::output_dir(&base, "compare");
            for r in &runs {
                experiment::write_run(r, &dir.join(&r.label))?;
            }
            let table = experiment::comparison_csv(&rows);
            std::fs::write(dir.join("comparison.csv"), &table).map_err(|e| Error::Io {
                path: dir.join("comparison.csv"),
                source: e,
            })?;
            print!("{table}");
            report(&dir);
        }
        Command::SweepKe { common, values } => {
            let mut base = build_config(&common)?;
            base.method = Method::Rl;
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("--values: cannot parse {v:?}")))
                })
                .collect::<linkadapt::Result<Vec<_>>>()?;
            let runs = experiment::sweep_ke(&base, &values)?;
            let dir = experiment::output_dir(&base, "sweep-ke");
            for r in &runs {
                experiment::write_run(r, &dir.join(format!("k_e_{}", r.config.k_e)))?;
            }
            let table = experiment::ke_sweep_csv(&runs);
            std::fs::write(dir.join("ke_sweep.csv"), &table).map_err(|e| Error::Io {
                path: dir.join("ke_sweep.csv"),
                source: e,
            })?;
            print!("{table}");
            report(&dir);
        }
        Command::Fqi { common, dataset } => {
            let mut cfg = build_config(&common)?;
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            let r = experiment::run_fqi(&cfg)?;
            let dir = experiment::output_dir(&cfg, "fqi");
            experiment::write_fqi(&r, &dir)?;
            println!(
                "samples {} dropped {} final_avg_q {:.6} tv_distance {:.4}",
                r.dataset.len(),
                r.dataset.dropped_missing_successor,
                r.outcome.curve.last().copied().unwrap_or(0.0),
                r.policy.tv_distance
            );
            report(&dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
