use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const TINY: &str = r#"
[run]
duration = 4.0
model = "model/model.json"

[identify]
holdout_duration = 20.0

[identify.excitation]
duration = 60.0

[identify.learn]
epochs = 1
"#;

fn tsdrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdrive"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A directory with `tiny.toml` and an identified model under `model/`,
/// built once and shared by every test.
fn workspace() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-workspace");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("tiny.toml"), TINY).unwrap();
        let out = tsdrive(&[
            "identify",
            "--config",
            path_str(&dir.join("tiny.toml")),
            "--out",
            path_str(&dir.join("model")),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        dir
    })
}

fn config() -> PathBuf {
    workspace().join("tiny.toml")
}

#[test]
fn identify_writes_model_reports_and_dataset() {
    let model = workspace().join("model");
    for f in [
        "model.json",
        "training_report.json",
        "validation.json",
        "dataset.csv",
    ] {
        assert!(model.join(f).is_file(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("training_report.json")).unwrap())
            .unwrap();
    assert!(report.is_object());
    let text = fs::read_to_string(model.join("dataset.csv")).unwrap();
    assert!(text.starts_with("k,vx,vy,omega,delta,a,vx_next,vy_next,omega_next\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn run_then_report() {
    let out = TempDir::new().unwrap();
    let o = tsdrive(&[
        "run",
        "--config",
        path_str(&config()),
        "--out",
        path_str(out.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in ["runlog.csv", "metrics.json", "model.json"] {
        assert!(out.path().join(f).is_file(), "{f} missing");
    }
    fs::remove_file(out.path().join("metrics.json")).unwrap();
    let o = tsdrive(&[
        "report",
        "--config",
        path_str(&config()),
        "--out",
        path_str(out.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["steps"], 120);
    let table = fs::read_to_string(out.path().join("tracking.csv")).unwrap();
    assert_eq!(table.lines().count(), 121);
}

#[test]
fn validate_and_simulate() {
    let out = TempDir::new().unwrap();
    let o = tsdrive(&[
        "validate",
        "--config",
        path_str(&config()),
        "--out",
        path_str(out.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.path().join("validation.json").is_file());
    let o = tsdrive(&[
        "simulate",
        "--config",
        path_str(&config()),
        "--out",
        path_str(out.path()),
        "--seed",
        "9",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(out.path().join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 1801);
}

fn runlog_without_timing(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !tsdrive::harness::TIMING_COLUMNS.contains(&&headers[i]))
        .collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].to_string()).collect()];
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    rows
}

#[test]
fn same_seed_gives_identical_run_logs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let o = tsdrive(&[
            "run",
            "--config",
            path_str(&config()),
            "--seed",
            "7",
            "--out",
            path_str(dir.path()),
        ]);
        assert!(o.status.success());
    }
    let (la, lb) = (
        runlog_without_timing(&a.path().join("runlog.csv")),
        runlog_without_timing(&b.path().join("runlog.csv")),
    );
    assert_eq!(la.len(), 121);
    assert_eq!(la, lb);
}

#[test]
fn plant_domain_abort_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("abort.toml");
    let model = workspace().join("model").join("model.json");
    fs::write(
        &cfg,
        format!(
            "[run]\nduration = 5.0\ninitial_state = [0.3, 0.0, 0.0]\nmodel = {:?}\n\n[mpc.bounds]\na = [-1.0, -0.9]\n",
            path_str(&model)
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = tsdrive(&["run", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain"));
    assert!(out.join("runlog.csv").is_file());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.toml");
    let o = tsdrive(&[
        "run",
        "--config",
        path_str(&missing),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "[run]\nspeed = 3.0\n").unwrap();
    let o = tsdrive(&[
        "identify",
        "--config",
        path_str(&unknown),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let invalid = dir.path().join("invalid.toml");
    fs::write(&invalid, "[mpc]\nhp = 0\n").unwrap();
    let o = tsdrive(&[
        "run",
        "--config",
        path_str(&invalid),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let no_model = dir.path().join("no_model.toml");
    fs::write(&no_model, "[run]\nduration = 1.0\n").unwrap();
    let o = tsdrive(&[
        "run",
        "--config",
        path_str(&no_model),
        "--out",
        path_str(&dir.path().join("empty")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("identify"));

    let o = tsdrive(&[
        "report",
        "--config",
        path_str(&no_model),
        "--out",
        path_str(&dir.path().join("empty")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
