use std::path::Path;
use std::process::{Command, Output};

fn anchorneg(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_anchorneg")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "run",
        "--seed",
        "11",
        "--loads-per-cell",
        "4",
        "--spreads",
        "2,8,15",
        "--strategies",
        "boulware,two-index",
        "--carriers",
        "cooperative,tft",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    anchorneg(&args)
}

#[test]
fn run_writes_every_artifact_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    small_run(dir.path(), &[]);
    for f in ["results.csv", "summary.json", "transcripts.jsonl", "offer_curves.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let lines = std::fs::read_to_string(dir.path().join("transcripts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3 * 4 * 2 * 2);

    let out = anchorneg(&["replay", dir.path().join("transcripts.jsonl").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("48 of 48 transcripts replayed identically"));
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_run(a.path(), &["--threads", "1"]);
    small_run(b.path(), &["--threads", "3"]);
    for f in ["results.csv", "summary.json", "transcripts.jsonl", "offer_curves.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "loads_per_cell = 2\nspread_values = [4.0]\n\n[carrier_overrides.tft]\nopen_frac = 0.5\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    small_run(&out_dir, &["--config", config.to_str().unwrap()]);
    let lines = std::fs::read_to_string(out_dir.join("transcripts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * 2 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 11);
}

#[test]
fn stats_pools_a_results_file() {
    let dir = tempfile::tempdir().unwrap();
    small_run(dir.path(), &[]);
    let out = anchorneg(&["stats", dir.path().join("results.csv").to_str().unwrap(), "--json"]);
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["n"] == 24));
}

#[test]
fn sweep_writes_one_row_per_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    anchorneg(&["sweep-c", "--loads-per-cell", "3", "--spreads", "3,10", "--c-values", "1,3,5", "--out", out]);
    let sweep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.as_array().map(Vec::len), Some(3));
    assert!(dir.path().join("sweep.csv").is_file());
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_anchorneg")).args(["run", "--strategies", "stubborn"]).output().unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_anchorneg")).args(["stats", "/nonexistent.csv"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
