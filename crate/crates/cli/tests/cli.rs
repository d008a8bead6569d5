use std::path::Path;
use std::process::{Command, Output};

use sail_core::envs::read_demonstrations;
use sail_core::trainer::{RunLog, TrainConfig};

fn sail(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sail"))
        .args(args)
        .current_dir(dir)
        .env_remove("SAIL_OUTPUT_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_run(dir: &Path, out: &str) -> Output {
    sail(
        dir,
        &[
            "run",
            "--algo",
            "sail",
            "--seed",
            "7",
            "--total-steps",
            "1500",
            "--set",
            "run.warmup_steps=200",
            "--set",
            "cadence.critic_every=500",
            "--set",
            "cadence.critic_steps=20",
            "--set",
            "eval.interval=500",
            "--set",
            "eval.episodes=2",
            "-o",
            out,
        ],
    )
}

#[test]
fn gen_demos_writes_requested_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let o = sail(dir.path(), &["gen-demos", "-q", "0.5", "-n", "3", "--seed", "4", "-o", "demos.jsonl"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("teacher beats random policy: yes"));
    let demos = read_demonstrations(&dir.path().join("demos.jsonl"), None).unwrap();
    assert_eq!(demos.len(), 3);
    assert!(demos.iter().all(|t| t.reached_terminal()));
}

#[test]
fn identical_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = short_run(dir.path(), out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let name = "sail-point-mass-seed7.csv";
    let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
    let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
    assert_eq!(a, b);
    let log = RunLog::read_csv(&dir.path().join("a").join(name)).unwrap();
    assert!(log.records.len() >= 3);
    assert!(dir.path().join("a/sail-point-mass-seed7.ckpt").exists());

    let e = sail(dir.path(), &["eval", "a/sail-point-mass-seed7.ckpt", "--episodes", "2"]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert!(stdout(&e).contains("mean"));

    let r = sail(dir.path(), &["report", "a", "-o", "report.md"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(text.contains('|') && text.contains("sail"));
}

#[test]
fn behaviour_cloning_takes_no_environment_steps() {
    let dir = tempfile::tempdir().unwrap();
    let o = sail(
        dir.path(),
        &["run", "--algo", "bc", "--set", "run.bc_steps=50", "--set", "eval.episodes=2", "-o", "out"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = RunLog::read_csv(&dir.path().join("out/bc-point-mass-seed1.csv")).unwrap();
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.records[0].env_steps, 0);
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = sail(dir.path(), &["print-config", "--seed", "11", "--set", "agent.gamma=0.9"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("[agent]"));
    std::fs::write(dir.path().join("cfg.toml"), &text).unwrap();
    let cfg = TrainConfig::load(&dir.path().join("cfg.toml")).unwrap();
    assert_eq!(cfg.run.seed, 11);
    assert_eq!(cfg.agent.gamma, 0.9);
}

#[test]
fn output_root_variable_redirects_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    std::fs::create_dir(&root).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sail"))
        .args(["gen-demos", "-o", "d.json"])
        .current_dir(dir.path())
        .env("SAIL_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("d.json").exists());
    assert!(!dir.path().join("d.json").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| sail(dir.path(), args).status.code();
    assert_eq!(code(&["run", "--no-such-flag"]), Some(2));
    assert_eq!(code(&["print-config", "--set", "agent.no_such_key=1"]), Some(3));
    assert_eq!(code(&["print-config", "--set", "agent.gamma=1.5"]), Some(3));
    assert_eq!(code(&["run", "--demos", "missing.json", "--total-steps", "10"]), Some(4));
    std::fs::write(dir.path().join("bad.toml"), "[run\n").unwrap();
    assert_eq!(code(&["print-config", "--config", "bad.toml"]), Some(3));
    assert_eq!(code(&["eval", "missing.ckpt"]), Some(4));
}
