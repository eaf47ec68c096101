use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
lambda_gan = 1
alpha_rl = 2
gamma = 1
rollouts_k = 2
baseline_mode = running_mean
grad_clip = 10
gumbel_temperature_schedule = 2,0.5,100
seed = 0
sigma_sample = 0
sigma_train = 1
";

fn optigan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optigan"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.txt"), CONFIG).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_config_exits_one_and_names_path() {
    let dir = setup();
    let out = optigan(dir.path(), &["verify-theory", "--config", "absent.cfg", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.cfg"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let dir = setup();
    let out = optigan(dir.path(), &["score", "--config", "cfg.txt", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = optigan(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_one() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.txt"), CONFIG.replace("gamma = 1", "gamma = 3")).unwrap();
    let out = optigan(dir.path(), &["verify-theory", "--config", "bad.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn verify_theory_reports_small_residual() {
    let dir = setup();
    let out = optigan(dir.path(), &["verify-theory", "--config", "cfg.txt", "--seed", "5"]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn text_pipeline_is_seed_deterministic() {
    let dir = setup();
    let d = dir.path();
    ok(&optigan(d, &["synth-data", "--config", "cfg.txt", "--seed", "2", "--kind", "text", "--count", "120", "--out", "c.txt"]));
    ok(&optigan(
        d,
        &["pretrain", "--config", "cfg.txt", "--seed", "2", "--kind", "text", "--data", "c.txt", "--out", "p.json",
          "--epochs", "1", "--seq-len", "12", "--hidden", "8", "--embed", "8"],
    ));
    for run in ["a", "b"] {
        ok(&optigan(
            d,
            &["train", "--config", "cfg.txt", "--seed", "2", "--checkpoint", "p.json", "--data", "c.txt",
              "--out", &format!("{run}.json"), "--steps", "3", "--batch-size", "8", "--metrics", &format!("{run}.jsonl")],
        ));
        ok(&optigan(
            d,
            &["generate", "--config", "cfg.txt", "--seed", "9", "--checkpoint", &format!("{run}.json"),
              "--count", "20", "--out", &format!("{run}.txt")],
        ));
    }
    let read = |f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_eq!(read("a.jsonl").lines().count(), 3);

    let out = optigan(d, &["evaluate", "--config", "cfg.txt", "--checkpoint", "a.json", "--data", "c.txt", "--count", "50"]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["nll_gen"].as_f64().unwrap() > 0.0);

    let out = optigan(d, &["score", "--config", "cfg.txt", "--kind", "text", "--input", "c.txt", "--references", "c.txt"]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bleu_2"].as_f64().unwrap(), 100.0);
}

#[test]
fn trajectory_pipeline_runs() {
    let dir = setup();
    let d = dir.path();
    ok(&optigan(
        d,
        &["synth-data", "--config", "cfg.txt", "--kind", "trajectory", "--count", "12", "--steps", "8", "--out", "t.csv"],
    ));
    ok(&optigan(
        d,
        &["pretrain", "--config", "cfg.txt", "--kind", "trajectory", "--data", "t.csv", "--steps", "8",
          "--out", "p.json", "--epochs", "1", "--hidden", "6"],
    ));
    ok(&optigan(
        d,
        &["train", "--config", "cfg.txt", "--checkpoint", "p.json", "--data", "t.csv", "--out", "a.json",
          "--steps", "2", "--batch-size", "4"],
    ));
    ok(&optigan(d, &["generate", "--config", "cfg.txt", "--checkpoint", "a.json", "--count", "3", "--out", "g.csv"]));
    // Header plus three trajectories of eight rows.
    assert_eq!(std::fs::read_to_string(d.join("g.csv")).unwrap().lines().count(), 25);
    let out = optigan(d, &["score", "--config", "cfg.txt", "--kind", "trajectory", "--input", "g.csv", "--steps", "8"]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["mcgrew"].as_f64().unwrap();
    assert!((0.0..=10.0).contains(&s));
}

#[test]
fn malformed_data_exits_one() {
    let dir = setup();
    std::fs::write(dir.path().join("t.csv"), "a,b\n1,2\n").unwrap();
    let out = optigan(dir.path(), &["score", "--config", "cfg.txt", "--kind", "trajectory", "--input", "t.csv"]);
    assert_eq!(out.status.code(), Some(1));
}
