use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use abps_core::harness::output::{
    read_csv, EvalRecord, EVAL_CSV, EVENTS_CSV, METRICS_CSV, RESOLVED_CONFIG, SELECTIONS_CSV,
};

const CONFIG: &str = r#"
mode = "abps"
seed = 5

[env]
kind = "chain"
length = 5
max_episode_steps = 20

[abps]
total_env_steps = 600
m = 2
eval_period = 200
eval_episodes = 3
strategy = { kind = "ucb", xi = 1.0 }

[[pool]]
hidden_sizes = [8]
learning_rate = 1e-3
epsilon_decay_steps = 300

[[pool]]
hidden_sizes = [4, 4]
learning_rate = 1e-4
epsilon_decay_steps = 500

[[pool]]
hidden_sizes = [8]
learning_rate = 3e-3
epsilon_decay_steps = 200
"#;

fn abps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abps"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    abps(&args)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn run_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    ok(&run_into(&config, &out, &[]));
    for name in [
        EVAL_CSV,
        SELECTIONS_CSV,
        EVENTS_CSV,
        METRICS_CSV,
        RESOLVED_CONFIG,
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let eval: Vec<EvalRecord> = read_csv(&out.join(EVAL_CSV)).unwrap();
    // Initial evaluation plus one per 200 steps.
    assert_eq!(eval.len(), 3 * 4);
    assert_eq!(eval.last().unwrap().env_steps, 600);
}

#[test]
fn baseline_shares_the_eval_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("base");
    ok(&abps(&[
        "baseline",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let header = read(&out.join(EVAL_CSV));
    assert_eq!(
        header.lines().next(),
        Some("epoch,env_steps,agent_id,mean_return")
    );
    let resolved = read(&out.join(RESOLVED_CONFIG));
    assert!(resolved.contains("independent-baseline"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run_into(&config, &a, &["--mode", "abps-pbt"]));
    ok(&run_into(&config, &b, &["--mode", "abps-pbt"]));
    for name in [EVAL_CSV, SELECTIONS_CSV, EVENTS_CSV, METRICS_CSV] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run_into(&config, &a, &["--seed", "1"]));
    ok(&run_into(&config, &b, &["--seed", "2"]));
    assert_ne!(read(&a.join(SELECTIONS_CSV)), read(&b.join(SELECTIONS_CSV)));
    assert!(read(&b.join(RESOLVED_CONFIG)).contains("seed = 2"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let prior = CONFIG.split("[[pool]]").next().unwrap().to_string() + "\n[prior]\nk = 4\n";
    let config = write_config(dir.path(), &prior);
    let first = dir.path().join("first");
    ok(&run_into(&config, &first, &[]));
    let again = dir.path().join("again");
    ok(&run_into(&first.join(RESOLVED_CONFIG), &again, &[]));
    for name in [EVAL_CSV, SELECTIONS_CSV] {
        assert_eq!(read(&first.join(name)), read(&again.join(name)), "{name}");
    }
    let without_out = |dir: &Path| -> Vec<String> {
        read(&dir.join(RESOLVED_CONFIG))
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .map(String::from)
            .collect()
    };
    assert_eq!(without_out(&first), without_out(&again));
}

#[test]
fn metrics_subcommand_recomputes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    ok(&run_into(&config, &out, &[]));
    let written = read(&out.join(METRICS_CSV));
    std::fs::remove_file(out.join(METRICS_CSV)).unwrap();
    ok(&abps(&["metrics", "--out", out.to_str().unwrap()]));
    assert_eq!(read(&out.join(METRICS_CSV)), written);
}

#[test]
fn bad_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.toml");
    let o = run_into(&missing, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
    assert!(!out.exists());

    let typo = write_config(dir.path(), &CONFIG.replace("eval_period", "eval_perod"));
    assert_eq!(run_into(&typo, &out, &[]).status.code(), Some(1));
    assert!(!out.exists());

    let config = write_config(dir.path(), CONFIG);
    assert_eq!(run_into(&config, &out, &["--bogus"]).status.code(), Some(2));
    assert_eq!(abps(&["run"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_output_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let o = abps(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("output directory"));
}
