use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 4
log_level = "warn"

[env]
n_lp = 2
n_lt_flow = 2
n_lt_pnl = 1
episode_len = 6

[training]
iterations = 3
rollout_episodes = 2

[training.lp]
hidden = [8]

[training.lt]
hidden = [8]

[eval]
episodes = 3

[calibration.synth]
rows = 1500
"#;

fn dealersim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dealersim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    dir
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Asserts failure with a single-line reason and returns it.
fn fails(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

fn read(dir: &Path, f: &str) -> String {
    std::fs::read_to_string(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))
}

#[test]
fn unknown_preset_lists_presets() {
    let d = setup();
    let err = fails(&dealersim(&["experiment", "nope", "--dry-run"], d.path()));
    for p in ["diversity", "connectivity", "risk-aversion", "toy-trend"] {
        assert!(err.contains(p), "{err}");
    }
}

#[test]
fn dry_run_prints_sweep_without_running() {
    let d = setup();
    let out = ok(&dealersim(&["experiment", "connectivity", "--dry-run", "--out", "x", "--seed", "7"], d.path()));
    assert!(out.contains("p=0.1") && out.contains("p=1"), "{out}");
    assert!(out.contains("[7, 8, 9]"), "{out}");
    assert!(!d.path().join("x").exists());
}

#[test]
fn bad_arguments_and_config_keys_fail_cleanly() {
    let d = setup();
    fails(&dealersim(&["train", "--bogus"], d.path()));
    std::fs::write(d.path().join("bad.toml"), "[training]\niteration = 3\n").unwrap();
    let err = fails(&dealersim(&["train", "--config", "bad.toml"], d.path()));
    assert!(err.contains("iteration"), "{err}");
    fails(&dealersim(&["train", "--config", "missing.toml"], d.path()));
}

#[test]
fn train_writes_one_curve_row_per_iteration() {
    let d = setup();
    ok(&dealersim(&["train", "--config", "run.toml", "--out", "t"], d.path()));
    let curve = read(&d.path().join("t"), "curve.csv");
    assert_eq!(curve.lines().count(), 4);
    assert!(curve.starts_with("iteration,"));
    for f in ["lp.json", "lt.json", "effective-config.toml"] {
        assert!(d.path().join("t").join(f).exists(), "{f}");
    }
}

#[test]
fn zero_iterations_write_the_initial_checkpoint() {
    let d = setup();
    std::fs::write(d.path().join("zero.toml"), TINY.replace("iterations = 3", "iterations = 0")).unwrap();
    ok(&dealersim(&["train", "--config", "zero.toml", "--out", "z"], d.path()));
    let z = d.path().join("z");
    assert_eq!(read(&z, "curve.csv").lines().count(), 1);
    let cp: serde_json::Value = serde_json::from_str(&read(&z, "lp.json")).unwrap();
    assert_eq!(cp["iteration"], 0);
}

#[test]
fn resume_continues_the_curve() {
    let d = setup();
    std::fs::write(d.path().join("six.toml"), TINY.replace("iterations = 3", "iterations = 6")).unwrap();
    ok(&dealersim(&["train", "--config", "six.toml", "--out", "full"], d.path()));
    ok(&dealersim(&["train", "--config", "run.toml", "--out", "part"], d.path()));
    ok(&dealersim(&["train", "--config", "run.toml", "--checkpoint", "part", "--out", "part"], d.path()));
    let full = d.path().join("full");
    let part = d.path().join("part");
    assert_eq!(read(&full, "curve.csv"), read(&part, "curve.csv"));
    assert_eq!(read(&full, "lp.json"), read(&part, "lp.json"));
}

#[test]
fn evaluate_honors_episode_count_and_is_deterministic() {
    let d = setup();
    ok(&dealersim(&["train", "--config", "run.toml", "--out", "t"], d.path()));
    for o in ["e1", "e2"] {
        ok(&dealersim(&["evaluate", "--config", "run.toml", "--checkpoint", "t", "--out", o], d.path()));
    }
    let rows = read(&d.path().join("e1"), "rows.csv");
    assert_eq!(rows, read(&d.path().join("e2"), "rows.csv"));
    // 3 episodes x 6 steps x 5 agents, plus the header
    assert_eq!(rows.lines().count(), 91);
    assert!(d.path().join("e1/summary.json").exists());
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let d = setup();
    ok(&dealersim(&["train", "--config", "run.toml", "--out", "t"], d.path()));
    std::fs::write(d.path().join("wide.toml"), TINY.replace("n_lp = 2", "n_lp = 3")).unwrap();
    let err = fails(&dealersim(&["evaluate", "--config", "wide.toml", "--checkpoint", "t", "--out", "e"], d.path()));
    assert!(err.contains("schema"), "{err}");
    let err = fails(&dealersim(&["evaluate", "--config", "run.toml", "--out", "e"], d.path()));
    assert!(err.contains("checkpoint"), "{err}");
}

#[test]
fn calibrate_is_seeded_and_improves_likelihood() {
    let d = setup();
    let out = ok(&dealersim(&["calibrate", "--config", "run.toml", "--out", "c1"], d.path()));
    ok(&dealersim(&["calibrate", "--config", "run.toml", "--out", "c2"], d.path()));
    assert_eq!(read(&d.path().join("c1"), "ecn_model.json"), read(&d.path().join("c2"), "ecn_model.json"));
    for line in out.lines().filter(|l| l.contains("log-likelihood")) {
        let nums: Vec<f64> = line
            .split_whitespace()
            .filter_map(|w| w.parse().ok())
            .collect();
        assert!(nums[1] > nums[0], "{line}");
    }
    // the fitted model plugs back into the environment
    let cfg = TINY.replace("episode_len = 6", "episode_len = 6\necn_model = \"c1/ecn_model.json\"");
    std::fs::write(d.path().join("fitted.toml"), cfg).unwrap();
    ok(&dealersim(&["train", "--config", "fitted.toml", "--out", "tf"], d.path()));
}

#[test]
fn calibrate_reports_missing_data() {
    let d = setup();
    std::fs::write(d.path().join("data.toml"), "[calibration]\ndata = \"nowhere.csv\"\n").unwrap();
    let err = fails(&dealersim(&["calibrate", "--config", "data.toml"], d.path()));
    assert!(err.contains("nowhere.csv"), "{err}");
}

#[test]
fn effective_config_reloads() {
    let d = setup();
    ok(&dealersim(&["train", "--config", "run.toml", "--out", "t"], d.path()));
    let out = ok(&dealersim(&["train", "--config", "t/effective-config.toml", "--dry-run"], d.path()));
    assert!(out.contains("seed 4"), "{out}");
}

#[test]
fn experiment_from_config_spec() {
    let d = setup();
    let spec = r#"
[experiment.spec]
name = "mini"
seeds = [1]

[experiment.spec.training]
iterations = 1
rollout_episodes = 1

[experiment.spec.eval]
episodes = 1

[[experiment.spec.sweep]]
key = "n=1"

[experiment.spec.sweep.env]
n_lp = 2
n_lt_flow = 1
episode_len = 4
"#;
    std::fs::write(d.path().join("exp.toml"), spec).unwrap();
    ok(&dealersim(&["experiment", "--config", "exp.toml", "--out", "x", "--jobs", "1"], d.path()));
    let rows = read(&d.path().join("x"), "rows.csv");
    assert_eq!(rows.lines().count(), 1 + 4 * 3);
    let summary: serde_json::Value = serde_json::from_str(&read(&d.path().join("x"), "summary.json")).unwrap();
    assert_eq!(summary["points"][0]["sweep_key"], "n=1");
    assert!(read(&d.path().join("x"), "effective-config.toml").contains("[experiment.spec]"));
}

#[test]
fn experiment_output_does_not_depend_on_thread_count() {
    let d = setup();
    let spec = r#"
[experiment.spec]
name = "jobs"
seeds = [0, 1]

[experiment.spec.training]
iterations = 2
rollout_episodes = 2

[experiment.spec.eval]
episodes = 2

[[experiment.spec.sweep]]
key = "a"

[experiment.spec.sweep.env]
n_lp = 2
n_lt_flow = 1
episode_len = 4

[[experiment.spec.sweep]]
key = "b"

[experiment.spec.sweep.env]
n_lp = 2
n_lt_flow = 2
episode_len = 4
"#;
    std::fs::write(d.path().join("exp.toml"), spec).unwrap();
    ok(&dealersim(&["experiment", "--config", "exp.toml", "--out", "one", "--jobs", "1"], d.path()));
    ok(&dealersim(&["experiment", "--config", "exp.toml", "--out", "four", "--jobs", "4"], d.path()));
    for f in ["rows.csv", "summary.json"] {
        assert_eq!(read(&d.path().join("one"), f), read(&d.path().join("four"), f), "{f}");
    }
}
