use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thinfilm"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn semigroup_run_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["run", config("semigroup.toml").to_str().unwrap(), "--grid", "32"], d.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("simulate: pass"));
    assert!(d.path().join("report.toml").exists());
    assert!(d.path().join("trajectory.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("semigroup.toml");
    for d in [&a, &b] {
        let o = run(&["run", cfg.to_str().unwrap(), "--grid", "32", "--seed", "11"], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let (x, y) = (csvs(a.path()), csvs(b.path()));
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn tolerance_failure_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("energy.toml"))
        .unwrap()
        .replace("energy_tol = 1e-6", "energy_tol = 1e-30");
    let cfg = d.path().join("tight.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["verify", cfg.to_str().unwrap(), "--grid", "32"], &d.path().join("out"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(2), "{stdout}");
    assert!(stdout.contains("FAIL"));
}

#[test]
fn unknown_key_is_an_error_with_position() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"simulate\"\n\n[grid]\nn = 32\nwidth = 3\n").unwrap();
    let o = run(&["run", cfg.to_str().unwrap()], &d.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("width"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn bad_thread_cap_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .env("THINFILM_THREADS", "zero")
        .args(["run", config("semigroup.toml").to_str().unwrap(), "--grid", "32", "--out"])
        .arg(d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("THINFILM_THREADS"));
}

#[test]
fn missing_config_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["blowup", "/nonexistent/x.toml"], d.path());
    assert_eq!(o.status.code(), Some(1));
}
