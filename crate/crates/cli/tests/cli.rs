use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use corrcurr::dataset;
use corrcurr::output::{parse_jsonl, read_trajectory};
use corrcurr_core::report::EpochRecord;
use corrcurr_core::synth::generate_dataset;
use corrcurr_core::{RunReport, SynthConfig};

const SMALL: &str = r#"
[synth]
samples = 120
noise_fraction = 0.1
seed = 3

[model]
embedding_dim = 4
encoder_hidden = [8]
fusion_hidden = [8]
predictor_hidden = []

[train]
epochs = 3
pretrain_epochs = 2
batch_size = 16
beta_main = 4.0
seed = 3

[curriculum]
warm_up_epochs = 1
patience = 2
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_corrcurr"));
    c.env_remove("CORRCURR_OUT_DIR");
    c
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

fn train(cfg: &Path, out: &Path, extra: &[&str]) -> String {
    ok(bin().arg("train").arg("--config").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap())
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn gen_data_matches_the_library_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d.txt");
    ok(bin().args(["gen-data", "--seed", "5", "--set", "synth.samples=40", "--out"]).arg(&out).output().unwrap());
    let read = dataset::load(&out).unwrap();
    let expected = generate_dataset(&SynthConfig { samples: 40, seed: 5, ..SynthConfig::default() }).unwrap();
    assert_eq!(read, expected);
}

#[test]
fn train_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let stdout = train(&cfg, &out, &[]);
    assert!(stdout.contains("final mse"));
    let rep = report(&out);
    let traj = read_trajectory(&out.join("trajectory.jsonl")).unwrap();
    assert_eq!(traj.len(), 6 * rep.rounds.len());
    for r in &traj {
        let c = if r.polarity == corrcurr_core::pairing::PairPolarity::Positive { 2 } else { 10 };
        assert!((1..=c).contains(&r.c_i));
    }
    let epochs: Vec<EpochRecord> =
        parse_jsonl(&fs::read_to_string(out.join("epochs.jsonl")).unwrap(), Path::new("e")).unwrap();
    assert_eq!(epochs, rep.epochs);
    assert!(rep.noise_recall.is_some());

    let replayed = bin()
        .arg("replay-feed")
        .arg("--config")
        .arg(&cfg)
        .arg("--trajectory")
        .arg(out.join("trajectory.jsonl"))
        .output()
        .unwrap();
    assert!(ok(replayed).contains("replay exactly"));

    let eval = ok(bin()
        .arg("eval")
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(out.join("dataset.txt"))
        .arg("--model")
        .arg(out.join("model.json"))
        .output()
        .unwrap());
    let v: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(v["mse"].as_f64().unwrap(), rep.final_test_mse);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&cfg, &a, &["--seed", "7"]);
    train(&cfg, &b, &["--seed", "7"]);
    for f in ["report.json", "trajectory.jsonl", "dataset.txt", "model.json", "discards.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablation_keeps_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("full"), tmp.path().join("nocur"));
    train(&cfg, &a, &[]);
    train(&cfg, &b, &["--ablation", "no-curriculum"]);
    let keys = |d: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(keys(&a), keys(&b));
    let rep = report(&b);
    assert!(rep.trajectory.is_empty() && rep.discards.is_empty() && rep.pretrain.is_empty());
    assert!(rep.trajectory_summary.is_none());
    assert_eq!(fs::read_to_string(b.join("trajectory.jsonl")).unwrap(), "");
    assert_eq!(rep.config.ablations, vec!["no-curriculum".to_string()]);
}

#[test]
fn out_dir_defaults_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("from-env");
    ok(bin().arg("pretrain").arg("--config").arg(&cfg).env("CORRCURR_OUT_DIR", &out).output().unwrap());
    assert!(out.join("pretrained.json").exists());
    assert_eq!(fs::read_to_string(out.join("pretrain.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn pretrained_file_can_be_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&cfg, &a, &[]);
    train(&cfg, &b, &["--pretrained", a.join("pretrained.json").to_str().unwrap()]);
    assert_eq!(report(&a).trajectory, report(&b).trajectory);
    assert_eq!(report(&a).final_test_mse, report(&b).final_test_mse);
}

#[test]
fn invalid_config_is_a_usage_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    fs::write(&p, "[train]\nbatchsize = 8\n").unwrap();
    let out = bin().arg("train").arg("--config").arg(&p).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));

    let out = bin().args(["train", "--set", "train.gamma=0.9", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let out = bin().args(["gen-data", "--config", "/nonexistent/cfg.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.toml"));
}

#[test]
fn replay_feed_prints_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("losses.txt");
    fs::write(&p, "1.0\n1.0\n1.2\n0.5\n").unwrap();
    let out = ok(bin()
        .args(["replay-feed", "--partitions", "3", "--set", "curriculum.patience=1", "--losses"])
        .arg(&p)
        .output()
        .unwrap());
    let actions: Vec<String> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["action"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(actions, ["stay", "stay", "stay", "stay"]);
}

#[test]
fn init_config_round_trips() {
    let text = ok(bin().arg("init-config").output().unwrap());
    assert_eq!(corrcurr::RunConfig::parse(&text).unwrap(), corrcurr::RunConfig::default());
}
