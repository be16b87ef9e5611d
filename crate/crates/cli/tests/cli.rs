use std::path::Path;
use std::process::{Command, Output};

fn seedsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedsched"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = seedsched(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_byte_identical_and_reports_guarded_labels() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    let out = ok(&["gen", "--preset", "size-misleading", "--file", path(&a)]);
    ok(&["gen", "--preset", "size-misleading", "--file", path(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(String::from_utf8_lossy(&out.stdout).contains("guarded labels"));
}

#[test]
fn gen_seed_changes_the_program() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    ok(&["gen", "--preset", "tiny", "--file", path(&a)]);
    ok(&["--seed", "77", "gen", "--preset", "tiny", "--file", path(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn unknown_preset_lists_presets() {
    let out = seedsched(&["gen", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learnable") && err.contains("size-misleading"), "{err}");
}

#[test]
fn run_writes_one_row_per_tick() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("p.toml");
    ok(&["gen", "--preset", "learnable", "--file", path(&prog)]);
    let out = dir.path().join("run");
    ok(&[
        "run",
        "--program",
        path(&prog),
        "--policy",
        "meuzz-ol",
        "--ticks",
        "200",
        "--seed",
        "1",
        "--out",
        path(&out),
    ]);
    let stats = std::fs::read_to_string(out.join("stats.csv")).unwrap();
    let rows: Vec<&str> = stats.lines().collect();
    assert_eq!(rows[0], "tick,policy,program,repetition,covered");
    assert_eq!(rows.len() - 1, 200);
    assert!(rows[1].starts_with("1,meuzz-ol,learnable,0,"));
    for f in ["dispatch.csv", "training.csv", "summary.json", "model.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        ok(&[
            "run",
            "--program",
            "preset:tiny",
            "--policy",
            "meuzz-en",
            "--ticks",
            "40",
            "--seed",
            "3",
            "--out",
            path(o),
        ]);
    }
    for f in ["stats.csv", "dispatch.csv", "training.csv", "model.bin"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn unknown_policy_is_a_usage_error() {
    let out = seedsched(&["run", "--program", "preset:tiny", "--policy", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_program_is_a_runtime_error() {
    let out = seedsched(&["run", "--policy", "random", "--out", "/nonexistent-dir-for-test"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn init_model_is_loaded_before_the_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&[
        "run",
        "--program",
        "preset:tiny",
        "--policy",
        "meuzz-en",
        "--ticks",
        "40",
        "--out",
        path(&first),
    ]);
    let model = first.join("model.bin");
    let out = ok(&[
        "run",
        "--program",
        "preset:tiny",
        "--policy",
        "meuzz-en",
        "--ticks",
        "10",
        "--init-model",
        path(&model),
        "--out",
        path(&dir.path().join("second")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("loaded model") && err.contains("model.bin"), "{err}");
    let inspect = ok(&["model", "inspect", path(&model)]);
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("forest:"));
    ok(&["model", "validate", path(&model)]);
    assert_eq!(
        seedsched(&["model", "validate", path(&first.join("stats.csv"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "program = \"preset:tiny\"\npolicy = \"afl\"\nticks = 12\nseed = 5\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(
        std::fs::read_to_string(out.join("stats.csv")).unwrap().lines().count(),
        13
    );
    std::fs::write(&cfg, "tickz = 3\n").unwrap();
    assert_eq!(seedsched(&["run", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn transfer_writes_a_square_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    ok(&[
        "--seed",
        "1",
        "--out",
        path(&out),
        "experiment",
        "transferability",
        "--programs",
        "preset:tiny",
        "gen:name=small,branches=60@4",
        "gen:name=mid,branches=120@5",
        "--reps",
        "3",
        "--ticks",
        "30",
    ]);
    let csv = std::fs::read_to_string(out.join("transfer.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 4));
    assert_eq!(rows[0][0], "trained_on");

    let again = dir.path().join("again");
    ok(&[
        "--seed",
        "1",
        "--out",
        path(&again),
        "experiment",
        "reuse",
        "--programs",
        "gen:name=mid,branches=120@5",
        "--reps",
        "3",
        "--ticks",
        "30",
    ]);
    let reuse = std::fs::read_to_string(again.join("report.json")).unwrap();
    let reuse: serde_json::Value = serde_json::from_str(&reuse).unwrap();
    let diag: f64 = rows[3][3].parse().unwrap();
    assert_eq!(reuse["programs"][0]["mean_improvement"].as_f64().unwrap(), diag);
}

#[test]
fn transfer_with_missing_models_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = seedsched(&[
        "--out",
        path(dir.path()),
        "experiment",
        "transfer",
        "--programs",
        "preset:tiny",
        "preset:learnable",
        "--models-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model file"));
}

#[test]
fn effectiveness_records_every_run_and_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "--out",
        path(dir.path()),
        "experiment",
        "effectiveness",
        "--programs",
        "preset:tiny",
        "--policies",
        "meuzz-ol,random",
        "--reps",
        "5",
        "--ticks",
        "20",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 10);
    assert!(runs.iter().all(|r| r["rng_seed"].is_u64()));
    let comparisons = std::fs::read_to_string(dir.path().join("comparisons.csv")).unwrap();
    assert_eq!(comparisons.lines().count(), 2);
}

#[test]
fn importance_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "--out",
        path(dir.path()),
        "experiment",
        "feature-importance",
        "--programs",
        "preset:tiny",
        "preset:learnable",
        "--ticks",
        "60",
    ]);
    let csv = std::fs::read_to_string(dir.path().join("importance.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let sum: f64 = line.split(',').skip(2).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn experiment_spec_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(
        &spec,
        "kind = \"effectiveness\"\nprograms = [\"preset:tiny\"]\npolicies = [\"meuzz-en\", \"afl\"]\nrepetitions = 3\nseed = 2\n[campaign]\nticks = 10\n",
    )
    .unwrap();
    ok(&[
        "--out",
        path(dir.path()),
        "--jobs",
        "2",
        "experiment",
        "--spec",
        path(&spec),
    ]);
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1 + 6 * 10);
}
