//! End-to-end tests of the balasso binary: every subcommand, determinism of
//! the run outputs, and the config-file/flag precedence rule.

use std::path::Path;
use std::process::Command;

fn balasso() -> Command {
    Command::new(env!("CARGO_BIN_EXE_balasso"))
}

fn write_csv(path: &Path, header: &str, rows: &[&str]) {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Small linear dataset: y depends strongly on a, not on b.
fn fixture_csv(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut rows = Vec::new();
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for _ in 0..n {
        let a = 4.0 * next();
        let b = 4.0 * next();
        let y = 3.0 * a + 0.5 * next();
        rows.push(format!("{y},{a},{b}"));
    }
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    write_csv(&path, "y,a,b", &refs);
    path
}

#[test]
fn run_writes_report_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = balasso()
        .args([
            "run",
            "--scenario",
            "ex1",
            "--n",
            "50",
            "--sigma",
            "1",
            "--reps",
            "2",
            "--methods",
            "mean,lasso",
            "--seed",
            "3",
            "--burnin",
            "100",
            "--draws",
            "150",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("scenario,"));
    assert!(report.contains("ex1,50,1,3,mean,"));
    assert!(report.contains("ex1,50,1,3,lasso,"));
    assert!(out.join("report.txt").exists());
    let meta = std::fs::read_to_string(out.join("meta.txt")).unwrap();
    assert!(meta.contains("command = run"));
    assert!(meta.contains("config_hash = "));
}

#[test]
fn run_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        let mut c = balasso();
        c.args([
            "run",
            "--scenario",
            "fig2",
            "--n",
            "50",
            "--reps",
            "2",
            "--methods",
            "mean",
            "--seed",
            "9",
            "--burnin",
            "100",
            "--draws",
            "100",
            "--out",
        ])
        .arg(out);
        c
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(args(&out_a).status().unwrap().success());
    assert!(args(&out_b).status().unwrap().success());
    let a = std::fs::read_to_string(out_a.join("report.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("report.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg_path,
        format!(
            r#"
[run]
scenario = "ex1"
n = 50
sigma = 1.0
reps = 3
methods = "mean"
seed = 5
burnin = 100
draws = 100
out = "{}"
"#,
            out.display()
        ),
    )
    .unwrap();
    // flag --reps 1 overrides the config's 3
    let status = balasso()
        .args(["run", "--reps", "1", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    // completed + failed = 1 replication
    let line = report.lines().nth(1).unwrap();
    let fields: Vec<&str> = line.split(',').collect();
    let completed: usize = fields[5].parse().unwrap();
    let failed: usize = fields[6].parse().unwrap();
    assert_eq!(completed + failed, 1);
}

#[test]
fn fit_writes_chain_selection_and_pmp() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_csv(dir.path(), "train.csv", 40, 1);
    let out = dir.path().join("fit");
    let output = balasso()
        .args([
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--response",
            "y",
            "--burnin",
            "200",
            "--draws",
            "300",
            "--seed",
            "4",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out.join("chains/chain.csv").exists());
    assert!(out.join("chains/meta.txt").exists());
    assert!(out.join("chains/checksums.txt").exists());
    let selection = std::fs::read_to_string(out.join("selection.csv")).unwrap();
    assert!(selection.starts_with("strategy,pattern"));
    assert!(selection.contains("mean,"));
    assert!(selection.contains("freq,"));
    let pmp = std::fs::read_to_string(out.join("pmp.csv")).unwrap();
    assert!(pmp.starts_with("pattern,probability"));

    // the saved chain reloads bit-exactly through the library
    let store = balasso::persistence::load_chain(&out.join("chains")).unwrap();
    assert_eq!(store.len(), 300);
}

#[test]
fn predict_reports_pse_when_response_present() {
    let dir = tempfile::tempdir().unwrap();
    let train = fixture_csv(dir.path(), "train.csv", 50, 2);
    let test = fixture_csv(dir.path(), "test.csv", 20, 3);
    let out = dir.path().join("pred");
    let output = balasso()
        .args([
            "predict",
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
            "--strategy",
            "bma",
            "--response",
            "y",
            "--burnin",
            "200",
            "--draws",
            "200",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("PSE (bma):"), "stdout: {stdout}");
    let preds = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(preds.starts_with("row,prediction,actual"));
    assert_eq!(preds.lines().count(), 21);
}

#[test]
fn unknown_method_fails_with_message() {
    let output = balasso()
        .args([
            "run",
            "--scenario",
            "ex1",
            "--n",
            "50",
            "--reps",
            "1",
            "--methods",
            "bogus",
            "--out",
            "/tmp/never",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown method"), "stderr: {stderr}");
}
