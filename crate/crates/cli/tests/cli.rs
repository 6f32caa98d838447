use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn causeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causeq"))
        .args(args)
        .env_remove("CAUSEQ_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn back_door_query() {
    let o = causeq(&[
        "query",
        "--process",
        "prize-or-frog",
        "--target",
        "O",
        "--evidence",
        "do(A=1)",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0.500000 0.500000");
}

#[test]
fn deluded_query() {
    let o = causeq(&[
        "query",
        "--process",
        "prize-or-frog",
        "--target",
        "Theta",
        "--evidence",
        "A=1",
    ]);
    assert_eq!(stdout(&o).trim(), "1.000000 0.000000");
}

#[test]
fn exit_codes() {
    let malformed = causeq(&[
        "query",
        "--process",
        "prize-or-frog",
        "--target",
        "O",
        "--evidence",
        "do(A=1",
    ]);
    assert_eq!(malformed.status.code(), Some(2));
    let bad_label = causeq(&[
        "query",
        "--process",
        "prize-or-frog",
        "--target",
        "O",
        "--evidence",
        "A=3",
    ]);
    assert_eq!(bad_label.status.code(), Some(2));
    let zero = causeq(&[
        "query",
        "--process",
        "prize-or-frog",
        "--target",
        "Theta",
        "--evidence",
        "A=1,O=-1",
    ]);
    assert_eq!(zero.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("probability zero"));
    let unknown = causeq(&["query", "--process", "bandits", "--target", "A1"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("prize-or-frog, prize-or-frog-reversed, bandit"));
    let no_episodes = causeq(&["metatrain", "--process", "bandit", "--horizon", "2", "--episodes", "0"]);
    assert_eq!(no_episodes.status.code(), Some(2));
    let missing_flag = causeq(&["experiment", "--process", "bandit"]);
    assert_eq!(missing_flag.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    fs::write(&file, "").unwrap();
    let target = file.join("sub");
    let o = causeq(&[
        "experiment",
        "--process",
        "bandit",
        "--horizon",
        "2",
        "--episodes",
        "5",
        "--out-dir",
        target.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn experiment_writes_summaries_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = causeq(&[
        "experiment",
        "--process",
        "bandit",
        "--policy",
        "both",
        "--horizon",
        "20",
        "--episodes",
        "2000",
        "--seed",
        "7",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "summary.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("policy,horizon,episodes,aborted,mean_reward"));
    let best = |line: &str| line.split(',').nth(6).unwrap().parse::<f64>().unwrap();
    assert!(lines[1].starts_with("conditional,"));
    assert!(lines[2].starts_with("interventional,"));
    assert!(best(lines[2]) > best(lines[1]));
    let log = read(dir.path(), "episodes-interventional.jsonl");
    assert_eq!(log.lines().count(), 2000);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["steps"].as_array().unwrap().len(), 20);
    let config: serde_json::Value = serde_json::from_str(&read(dir.path(), "config.json")).unwrap();
    assert_eq!(config["command"], "experiment");
    assert_eq!(config["seed"], 7);
    assert_eq!(config["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn rerun_reproduces_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = causeq(&[
        "metatrain",
        "--process",
        "bandit",
        "--horizon",
        "2",
        "--episodes",
        "5000",
        "--seed",
        "3",
        "--workers",
        "2",
        "--out-dir",
        a.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let config = a.path().join("config.json");
    let r = causeq(&[
        "rerun",
        config.to_str().unwrap(),
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for name in ["learner.txt", "tv.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert!(read(a.path(), "tv.csv").contains("action,do(1=0),2=1,"));
}

#[test]
fn learned_policy_from_a_trained_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    causeq(&[
        "metatrain",
        "--process",
        "bandit",
        "--horizon",
        "3",
        "--episodes",
        "2000",
        "--out-dir",
        out,
    ]);
    let table = dir.path().join("learner.txt");
    let sim = dir.path().join("sim");
    let o = causeq(&[
        "simulate",
        "--process",
        "bandit",
        "--policy",
        "learned",
        "--learner",
        table.to_str().unwrap(),
        "--horizon",
        "3",
        "--episodes",
        "10",
        "--out-dir",
        sim.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("learned"));
    let missing = causeq(&[
        "simulate",
        "--process",
        "bandit",
        "--policy",
        "learned",
        "--horizon",
        "3",
        "--episodes",
        "1",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn spec_files_and_serialization() {
    let dir = tempfile::tempdir().unwrap();
    let o = causeq(&["serialize", "--process", "prize-or-frog"]);
    let text = stdout(&o);
    assert!(text.starts_with("process prize-or-frog"));
    let path = dir.path().join("pof.spec");
    fs::write(&path, &text).unwrap();
    let q = causeq(&[
        "query",
        "--process",
        path.to_str().unwrap(),
        "--target",
        "O",
        "--evidence",
        "do(A=2)",
    ]);
    assert_eq!(stdout(&q).trim(), "0.500000 0.500000");
    fs::write(&path, text.replace("variable A action", "variable A actor")).unwrap();
    let bad = causeq(&["query", "--process", path.to_str().unwrap(), "--target", "O"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn offline_and_mint() {
    let dir = tempfile::tempdir().unwrap();
    let o = causeq(&[
        "offline",
        "--process",
        "bandit",
        "--horizon",
        "2",
        "--episodes",
        "3000",
        "--seed",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(read(dir.path(), "offline.csv").starts_with("key,samples,tv_deluded"));
    let m = causeq(&["mint"]);
    assert!(stdout(&m).contains("bandit.int_repeat_after_win 3.14285714285714"));
}
