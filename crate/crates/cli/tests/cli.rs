use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linkadapt"))
}

fn run(args: &[&str], out_root: &Path) -> Output {
    bin().args(args).env("LINKADAPT_OUT", out_root).output().expect("binary runs")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn first_line(p: impl AsRef<Path>) -> String {
    read(p).lines().next().unwrap_or("").to_string()
}

fn column(csv: &str, name: &str, row: usize) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(i).unwrap().parse().unwrap()
}

const OLLA: &[&str] = &["run", "--method", "olla", "--scenario", "paper-3ue", "--seeds", "3", "--realizations", "5"];

#[test]
fn olla_run_tracks_target_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(OLLA, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("run");
    let summary = read(dir.join("summary.csv"));
    let bler = column(&summary, "mean_bler", 0);
    assert!((bler - 0.1).abs() <= 0.05, "mean BLER {bler}");
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);

    let again = tempfile::tempdir().unwrap();
    assert!(run(OLLA, again.path()).status.success());
    assert_eq!(read(again.path().join("run/summary.csv")), summary);
    assert_eq!(read(again.path().join("run/slot_log.csv")), read(dir.join("slot_log.csv")));
}

#[test]
fn output_schemas_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["run", "--method", "salad", "--seeds", "1", "--realizations", "1", "--episode-len", "200"], tmp.path());
    assert!(out.status.success());
    let dir = tmp.path().join("run");
    assert_eq!(
        first_line(dir.join("summary.csv")),
        "label,method,predictor,k_e,n_cqi,n_harq,episodes,mean_se,median_se,mean_bler,median_bler,median_mcs,mean_reward"
    );
    assert_eq!(
        first_line(dir.join("slot_log.csv")),
        "seed,realization,slot,ue,scheduled,mcs,sinr_true_db,sinr_est_db,ack,se_achieved,reward,lambda"
    );
    for cdf in ["cdf_se.csv", "cdf_bler.csv", "cdf_mcs.csv"] {
        let text = read(dir.join(cdf));
        assert_eq!(text.lines().next().unwrap(), "value,cumulative_prob");
        assert_eq!(text.lines().count(), 201, "{cdf}");
    }
    assert_eq!(first_line(dir.join("mcs_histogram.csv")), "ue,mcs,count,fraction");
    let meta: serde_like::Meta = serde_like::parse(&read(dir.join("run_meta.json")));
    assert_eq!(meta.state_len, 54);
}

/// Minimal extraction of integer fields from the pretty-printed metadata.
mod serde_like {
    pub struct Meta {
        pub state_len: usize,
    }

    pub fn parse(text: &str) -> Meta {
        let line = text.lines().find(|l| l.contains("\"state_len\"")).unwrap();
        let v = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
        Meta {
            state_len: v.parse().unwrap(),
        }
    }
}

#[test]
fn setup_b_state_length() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["run", "--method", "olla", "--setup", "B", "--seeds", "1", "--realizations", "1", "--episode-len", "50"];
    assert!(run(&args, tmp.path()).status.success());
    let meta = serde_like::parse(&read(tmp.path().join("run/run_meta.json")));
    assert_eq!(meta.state_len, 21);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["run", "--method", "bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["run", "--set", "tau=2"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["run", "--set", "nonsense"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["run", "--config", "/definitely/missing.cfg"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], tmp.path()).status.code(), Some(2));
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let bad_dir = blocker.join("sub");
    let out = run(
        &["run", "--method", "olla", "--seeds", "1", "--realizations", "1", "--episode-len", "20", "--output-dir", bad_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(&cfg, "# olla on a short episode\nmethod = olla\nseeds = 1\nrealizations = 2\nepisode_len = 100\n").unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--set", "method=salad"], tmp.path());
    assert!(out.status.success());
    let summary = read(tmp.path().join("run/summary.csv"));
    assert!(summary.lines().nth(1).unwrap().starts_with("salad,salad,"));
    assert_eq!(column(&summary, "episodes", 0), 2.0);
}

#[test]
fn train_then_evaluate_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--seeds", "1", "--realizations", "2", "--episode-len", "100", "--train-episodes", "3"];
    let mut args = vec!["train", "--predictor", "kf"];
    args.extend(common);
    let out = run(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train_dir = tmp.path().join("train");
    assert_eq!(first_line(train_dir.join("training_curve.csv")), "episode,mean_reward");
    assert_eq!(read(train_dir.join("training_curve.csv")).lines().count(), 4);
    let ckpt = train_dir.join("policy.json");
    let mut args = vec!["evaluate", "--checkpoint", ckpt.to_str().unwrap()];
    args.extend(common);
    let out = run(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(tmp.path().join("evaluate/summary.csv"));
    assert!(summary.lines().nth(1).unwrap().starts_with("rl-kf,rl,kf,"));

    std::fs::write(&ckpt, read(&ckpt).replace("\"version\":1", "\"version\":9")).unwrap();
    assert_eq!(run(&args, tmp.path()).status.code(), Some(1));
}

#[test]
fn compare_self_reference_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "compare", "--methods", "olla,salad", "--reference", "olla", "--seeds", "2", "--realizations", "2", "--episode-len", "200",
    ];
    let out = run(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(tmp.path().join("compare/comparison.csv"));
    assert_eq!(table.lines().next().unwrap(), "label,mean_se,median_se,mean_bler,median_bler,median_mcs,delta_se_pct");
    assert_eq!(column(&table, "delta_se_pct", 0), 0.0);
    assert!(tmp.path().join("compare/salad/summary.csv").exists());
    let bad = ["compare", "--methods", "olla,salad", "--reference", "rl:kf", "--seeds", "1", "--realizations", "1"];
    assert_eq!(run(&bad, tmp.path()).status.code(), Some(2));
}

#[test]
fn degenerate_sweep_matches_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--seeds", "1", "--realizations", "2", "--episode-len", "100", "--train-episodes", "2"];
    let mut sweep = vec!["sweep-ke", "--values", "0"];
    sweep.extend(common);
    assert!(run(&sweep, tmp.path()).status.success());
    let mut plain = vec!["run", "--method", "rl", "--k-e", "0"];
    plain.extend(common);
    assert!(run(&plain, tmp.path()).status.success());
    assert_eq!(
        first_line(tmp.path().join("sweep-ke/ke_sweep.csv")),
        "k_e,median_se,median_bler,median_mcs,mean_se,mean_bler"
    );
    assert_eq!(read(tmp.path().join("sweep-ke/k_e_0/summary.csv")), read(tmp.path().join("run/summary.csv")));
}

#[test]
fn fqi_on_dataset_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("logs.csv");
    let mut text = String::from("cqi,rsrp,bler_inst,mcs,reward,next_cqi,next_rsrp,next_bler,direction\n");
    for i in 0..60 {
        let cqi = i % 12;
        let mcs = (i * 7) % 29;
        let reward = if mcs <= 2 * cqi { 0.2 * mcs as f64 } else { 0.0 };
        text.push_str(&format!("{cqi},{},0.1,{mcs},{reward},{},-100,0.1,{}\n", -110 + cqi, (cqi + 1) % 12, if i % 2 == 0 { "DL" } else { "UL" }));
    }
    std::fs::write(&data, text).unwrap();
    let args = ["fqi", "--dataset", data.to_str().unwrap(), "--set", "fqi_iterations=8", "--set", "n_trees=5"];
    let out = run(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("fqi");
    assert_eq!(first_line(dir.join("fqi_curve.csv")), "iteration,avg_q");
    assert_eq!(read(dir.join("fqi_curve.csv")).lines().count(), 9);
    assert_eq!(first_line(dir.join("fqi_policy.csv")), "mcs,learned_pct,behavior_pct");
    assert_eq!(read(dir.join("fqi_policy.csv")).lines().count(), 30);

    std::fs::write(&data, "cqi,bler_inst,mcs,reward,next_cqi,next_rsrp,next_bler,direction\n").unwrap();
    let out = run(&args, tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rsrp"));
}

#[test]
fn help_lists_defaults() {
    let out = bin().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["train_episodes", "k_e", "LINKADAPT_OUT", "[default: 0.1]"] {
        assert!(text.contains(key), "missing {key}");
    }
}
