use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adaptor-lab");

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("ADAPTOR_LAB_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_id_of(o: &Output) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("run ").and_then(|r| r.split_whitespace().next()))
        .expect("run id line")
        .to_string()
}

fn series_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("series"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn list_enumerates_the_shipped_library() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["list"], tmp.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 6);
    for name in ["free", "positive_potential_radial", "well_with_barrier", "self_similar_W", "cubic_nls_small", "morawetz_radial"] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "missing {name}");
    }
}

#[test]
fn run_writes_artifacts_under_env_dir_and_report_renders_them() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["run", "self_similar_W"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let id = run_id_of(&o);
    let dir = tmp.path().join(&id);
    assert!(dir.join("manifest.toml").is_file());
    assert!(dir.join("report.txt").is_file());
    assert!(!series_files(&dir).is_empty());
    for (name, bytes) in series_files(&dir) {
        assert!(name.ends_with(".csv"));
        let head = String::from_utf8(bytes).unwrap();
        assert!(head.starts_with("time,"), "{name} header");
    }

    let r = lab(&["report", &id], tmp.path());
    assert!(r.status.success());
    assert!(stdout(&r).contains("validity window"));
}

#[test]
fn report_on_missing_run_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["report", "no-such-run-000000000000"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn negative_scenarios_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["run", "negative_flipped_q"], tmp.path()).status.code(), Some(1));
    assert_eq!(lab(&["run", "negative_corrupt_derivative"], tmp.path()).status.code(), Some(1));
    assert_eq!(lab(&["run", "negative_focusing"], tmp.path()).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = \"bad\"\nsuites = [\"adaptor\"]\npotental = 1\n[grid]\nkind = \"line\"\nn = 64\nextent = 10.0\n").unwrap();
    let o = lab(&["run", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("potental"));

    let missing = lab(&["run", tmp.path().join("absent.toml").to_str().unwrap()], tmp.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn overrides_change_the_run_id() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_id_of(&lab(&["run", "self_similar_W"], tmp.path()));
    let b = lab(&["run", "self_similar_W", "--tmax", "5", "--out-dir", tmp.path().join("other").to_str().unwrap()], tmp.path());
    assert_ne!(a, run_id_of(&b));
    assert!(tmp.path().join("other").join(run_id_of(&b)).join("manifest.toml").is_file());
}

#[test]
fn repeated_runs_produce_identical_series() {
    let tmp = tempfile::tempdir().unwrap();
    let (d1, d2) = (tmp.path().join("one"), tmp.path().join("two"));
    let a = lab(&["run", "cubic_nls_small", "--out-dir", d1.to_str().unwrap()], tmp.path());
    let b = lab(&["run", "cubic_nls_small", "--out-dir", d2.to_str().unwrap()], tmp.path());
    let id = run_id_of(&a);
    assert_eq!(id, run_id_of(&b));
    let (s1, s2) = (series_files(&d1.join(&id)), series_files(&d2.join(&id)));
    assert!(!s1.is_empty());
    assert_eq!(s1, s2);
}
