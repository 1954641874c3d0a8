use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmethods"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmethods-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

#[test]
fn simulate_then_estimate() {
    let dir = scratch("estimate");
    let data = dir.join("data.csv");
    let out = run(bin().args(["simulate", "--scenario", "1", "--n", "1500", "--seed", "9", "--out"]).arg(&data));
    assert!(out.status.success());
    let est = dir.join("est.csv");
    let out = run(bin()
        .args(["estimate", "--method", "iptw,gest", "--mc-size", "1000", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&est));
    assert!(out.status.success());
    let text = std::fs::read_to_string(&est).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,comparison,horizon,estimate"));
    assert_eq!(lines.count(), 60);
    assert!(text.contains("\ngest,AB-B,1,"));
}

#[test]
fn estimate_with_bootstrap_adds_se_column() {
    let dir = scratch("bootstrap");
    let data = dir.join("data.csv");
    assert!(run(bin().args(["simulate", "--n", "600", "--out"]).arg(&data)).status.success());
    let out = run(bin().args(["estimate", "--method", "gest", "--bootstrap", "50", "--data"]).arg(&data));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("method,comparison,horizon,estimate,se\n"));
    let row = text.lines().nth(1).unwrap();
    let se: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(se > 0.0);
}

#[test]
fn unknown_method_is_rejected_with_valid_set() {
    let out = bin().args(["estimate", "--method", "bogus", "--data", "x.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kind=unknown_key") && err.contains("bogus") && err.contains("seqtrial"), "{err}");
}

#[test]
fn config_file_keys_are_checked_and_flags_win() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "[simulate]\nn = 10000\nscenario = 2\n").unwrap();
    let out = run(bin().arg("--config").arg(&cfg).args(["simulate", "--n", "50"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // 50 individuals, 6 rows each, plus the header
    assert_eq!(text.lines().count(), 301);

    std::fs::write(&cfg, "[simulate]\nsize = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate.size"));

    std::fs::write(&cfg, "[simulate]\nn = \"lots\"\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=type_mismatch"));
}

#[test]
fn published_truth_table() {
    let out = run(bin().args(["truth", "--scenario", "1", "--truth", "published"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "1,AB-B,5,1.13,,"));
}

#[test]
fn simulated_truth_has_standard_errors() {
    let out = run(bin().args(["truth", "--scenario", "7", "--rct-n", "2000"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().find(|l| l.starts_with("7,AB-A,1,")).unwrap().split(',').collect();
    let theta: f64 = row[3].parse().unwrap();
    let mc_se: f64 = row[4].parse().unwrap();
    assert!((theta - 0.75).abs() < 4.0 * mc_se + 0.01);
}

#[test]
fn weights_command_writes_rows() {
    let dir = scratch("weights");
    let data = dir.join("data.csv");
    assert!(run(bin().args(["simulate", "--n", "300", "--out"]).arg(&data)).status.success());
    let out = run(bin().args(["weights", "--truncate", "--data"]).arg(&data));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 300 * 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ess"));
}

#[test]
fn study_outputs_are_reproducible() {
    let a = scratch("study-a");
    let b = scratch("study-b");
    let args = [
        "study", "--scenario", "1", "--nsim", "2", "--n", "800", "--method", "iptw,gest", "--truth", "published",
    ];
    let out = run(bin().args(args).arg("--out").arg(&a).arg("--svg").arg(a.join("svg")));
    assert!(out.status.success());
    let out = run(bin().env("GMETHODS_THREADS", "1").args(args).arg("--out").arg(&b));
    assert!(out.status.success());
    for f in ["raw.csv", "report.csv", "truth.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let raw = std::fs::read_to_string(a.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 2 * 30);
    assert_eq!(std::fs::read_dir(a.join("svg")).unwrap().count(), 12);
}

#[test]
fn missing_data_file_is_an_error() {
    let out = bin().args(["estimate", "--data", "/nonexistent/data.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=io"));
}
