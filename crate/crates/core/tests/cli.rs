use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(config: &Path, out: &Path) -> Output {
    run_with(config, out, &[])
}

fn run_with(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelbounds"))
        .args(extra)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const TRANSMUTE: &str = r#"{"schema": 1, "command": "transmute",
  "graphs": [{"family": "cycle", "n": 50}], "a_list": [0.0], "n_max": 20}"#;

#[test]
fn transmute_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.json", TRANSMUTE);
    let out = run(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/residuals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);
}

#[test]
fn empty_inputs_are_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "empty.json", "");
    assert_eq!(run(&cfg, &dir.path().join("a")).status.code(), Some(1));

    write(&dir, "empty.txt", "# nothing here\n");
    let cfg = write(
        &dir,
        "file.json",
        r#"{"schema": 1, "command": "transmute", "graphs": [{"family": "file", "path": "empty.txt"}], "a_list": [0.0], "n_max": 4}"#,
    );
    assert_eq!(run(&cfg, &dir.path().join("b")).status.code(), Some(1));

    let cfg = write(&dir, "missing.json", "{}");
    assert_eq!(run(&cfg, &dir.path().join("c")).status.code(), Some(1));
    assert_eq!(run(&dir.path().join("absent.json"), &dir.path().join("d")).status.code(), Some(1));
}

#[test]
fn unknown_keys_and_schema_rejected() {
    let dir = TempDir::new().unwrap();
    let extra = TRANSMUTE.replace("\"n_max\": 20", "\"n_max\": 20, \"bogus\": 1");
    let cfg = write(&dir, "extra.json", &extra);
    assert_eq!(run(&cfg, &dir.path().join("a")).status.code(), Some(1));
    let cfg = write(&dir, "schema.json", &TRANSMUTE.replace("\"schema\": 1", "\"schema\": 2"));
    assert_eq!(run(&cfg, &dir.path().join("b")).status.code(), Some(1));
}

#[test]
fn violated_envelope_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = run(&configs().join("explicit_fixed_violation.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("violation"), "{stderr}");
    assert!(stderr.contains("n = 16, d = 16"), "{stderr}");
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "h.json",
        r#"{"schema": 1, "command": "harnack", "graph": {"family": "path", "n": 33},
            "center": 16, "r_list": [4, 8], "h": 0.5, "samples": 12, "seed": 3}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&cfg, &a).status.code(), Some(0));
    assert_eq!(run_with(&cfg, &b, &["--threads", "1"]).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 2);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}
