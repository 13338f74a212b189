use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bridgelab"))
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn run_dir(output: &Output) -> PathBuf {
    let stdout = String::from_utf8(output.stdout.clone()).unwrap();
    PathBuf::from(stdout.lines().last().unwrap())
}

#[test]
fn oracle_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["oracle", "--threads", "2"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = run_dir(&out);
    for f in ["config.toml", "config.sha256", "report.json", "oracle.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let hash = std::fs::read_to_string(dir.join("config.sha256")).unwrap();
    assert!(dir
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .ends_with(&hash.trim()[..12]));
}

#[test]
fn unknown_flag_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["oracle", "--no-such-flag"]);
    assert!(!out.status.success());
}

#[test]
fn bad_config_key_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n\n[knobs]\nepsilon = 0.2\n").unwrap();
    let out = run(tmp.path(), &["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilon") && err.contains("line 4"), "{err}");
}

#[test]
fn oracle_rejects_large_n() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("big.toml");
    std::fs::write(&cfg, "[params]\nn = 6\n").unwrap();
    let out = run(tmp.path(), &["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kpz_refuses_times_past_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("late.toml");
    std::fs::write(&cfg, "t_grid = [0.1, 0.6]\n").unwrap();
    let out = run(tmp.path(), &["kpz", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}

#[test]
fn emit_plots_needs_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("emit-plots").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing data"));
}

#[test]
fn emit_plots_after_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&run(tmp.path(), &["static-clt"]));
    let out = bin().arg("emit-plots").arg(&dir).output().unwrap();
    assert!(out.status.success());
    let py = std::fs::read_to_string(dir.join("plots.py")).unwrap();
    assert!(py.contains("\"cov.csv\"") && py.contains("\"profile.csv\""));
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_same_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = a.path().join("small.toml");
    std::fs::write(
        &cfg,
        "n_replicas = 64\nt_grid = [0.1, 0.2]\n[params]\nn = 16\n[knobs]\nfront_n = 64\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let ra = run_dir(&run(a.path(), &["kpz", "--config", c, "--threads", "1"]));
    let rb = run_dir(&run(b.path(), &["kpz", "--config", c, "--threads", "3"]));
    assert_eq!(ra.file_name(), rb.file_name());
    let (fa, fb) = (csv_files(&ra), csv_files(&rb));
    assert!(fa.len() >= 5);
    assert_eq!(fa, fb);

    let rc = run_dir(&run(a.path(), &["kpz", "--config", c, "--seed", "7"]));
    assert_ne!(rc, ra);
    assert_ne!(csv_files(&rc), fa);
}
