use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rodservo::servo::log::{read_shapes, read_step_log, read_summary};

fn rodservo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rodservo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn rodservo")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// gen-data and fit-feature with default settings into `dir`.
fn prepare(dir: &Path) {
    let o = rodservo(dir, &["gen-data", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rodservo(dir, &["fit-feature", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.join("run.toml"), "run.max_steps = 200\n").unwrap();
}

#[test]
fn missing_config_exits_2_and_names_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = rodservo(dir.path(), &["run", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.cfg"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_2_and_names_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "akf.c00 = 1.0\n").unwrap();
    let o = rodservo(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("bad.toml") && msg.contains("c00"), "{msg}");
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = rodservo(dir.path(), &["run", "--config", "x.toml", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_feature_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "").unwrap();
    let o = rodservo(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("feature_model.txt"), "{}", stderr(&o));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["gen-data", "fit-feature", "run", "sweep", "oracle-check"] {
        let o = rodservo(dir.path(), &[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn pipeline_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let o = rodservo(d, &["run", "--config", "run.toml", "--dump-shapes", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stderr.is_empty());

    let records = read_step_log(d.join("run.csv")).unwrap();
    let summary = read_summary(d.join("run.summary.txt")).unwrap();
    let steps: usize = summary["steps_taken"].parse().unwrap();
    assert_eq!(records.len(), steps + 1);
    assert_eq!(summary["converged"], "true");
    assert_eq!(summary["config.run.max_steps"], "200");

    let shapes = read_shapes(d.join("run.shapes.csv")).unwrap();
    assert_eq!(shapes.len(), steps + 2);
    assert_eq!(shapes[0].label, "target");
    assert!(shapes[1..].iter().enumerate().all(|(k, r)| r.label == "step" && r.k == k));
    assert_eq!(shapes[1].centerline.len(), 100);

    // oracle-check replays the run and accepts the matching log.
    let o = rodservo(d, &["oracle-check", "--config", "run.toml", "--log", "run.csv", "--out", "oracle.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("median relative error"));
    let report = fs::read_to_string(d.join("oracle.csv")).unwrap();
    assert!(report.starts_with("k,frobenius_error,relative_error\n"));
    assert_eq!(report.lines().count(), steps + 1);
}

#[test]
fn oracle_check_rejects_foreign_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let o = rodservo(d, &["run", "--config", "run.toml", "--quiet", "--out", "a.csv"]);
    assert!(o.status.success());
    let text = fs::read_to_string(d.join("a.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let tampered = lines[3].replacen(",", ",9", 2);
    lines[3] = &tampered;
    fs::write(d.join("b.csv"), lines.join("\n") + "\n").unwrap();
    let o = rodservo(d, &["oracle-check", "--config", "run.toml", "--log", "b.csv", "--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("step 2"), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    fs::write(d.join("noisy.toml"), "world.obs_noise_sigma = 0.5\nrun.max_steps = 20\n").unwrap();
    let run = |seed: &str, out: &str| {
        let o = rodservo(d, &["run", "--config", "noisy.toml", "--seed", seed, "--out", out, "--quiet"]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(d.join(out)).unwrap()
    };
    assert_eq!(run("7", "a.csv"), run("7", "b.csv"));
    assert_ne!(run("7", "a.csv"), run("8", "c.csv"));
    let summary = read_summary(d.join("c.summary.txt")).unwrap();
    assert_eq!(summary["config.run.seed"], "8");
}

#[test]
fn sweep_writes_one_log_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    fs::write(
        d.join("sweep.toml"),
        "run.max_steps = 50\nsweep.weights = [[0.6, 0, 0.1, 0.1, 0, 0.1, 0.1], [0.8, 0, 0, 0, 0, 0.1, 0.1], [0.5, 0, 0.1, 0.2, 0, 0.1, 0.1]]\n",
    )
    .unwrap();
    let o = rodservo(d, &["sweep", "--config", "sweep.toml", "--out", "grid", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut logs: Vec<String> = fs::read_dir(d.join("grid"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("cell_") && n.ends_with(".csv"))
        .collect();
    logs.sort();
    assert_eq!(logs, ["cell_000.csv", "cell_001.csv", "cell_002.csv"]);
    let index = fs::read_to_string(d.join("grid/sweep_index.csv")).unwrap();
    assert_eq!(index.lines().count(), 4);
    let first = read_step_log(d.join("grid/cell_000.csv")).unwrap();
    let second = read_step_log(d.join("grid/cell_001.csv")).unwrap();
    assert_ne!(first, second);
}

#[test]
fn gen_data_respects_config_world() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("w.toml"), "world.n_points = 12\n").unwrap();
    let o = rodservo(d, &["gen-data", "--config", "w.toml", "--samples", "30", "--out", "data/d.txt", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = rodservo::feature::load_dataset(d.join("data/d.txt")).unwrap();
    assert_eq!((data.len(), data.n_points()), (30, 12));
    let o = rodservo(d, &["fit-feature", "--data", "data/d.txt", "--p", "40", "--quiet"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
