use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn subdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdiff")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("subdiff-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn converge_to_stdout() {
    let out = subdiff(&["converge", "--problem", "ode_ml", "--beta", "0.8", "--n-list", "10,20,40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,E1,eoc,E1_est,eoc,E2,eoc,E2_est,eoc");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("10,"));
    // first row has no rates
    assert_eq!(lines[1].split(',').filter(|c| c.is_empty()).count(), 4);
}

#[test]
fn converge_is_deterministic() {
    let args = ["converge", "--problem", "ode_heaviside", "--scheme", "cq", "--beta", "0.4", "--grading", "2", "--n-list", "8,16"];
    let a = subdiff(&args);
    let b = subdiff(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_and_overrides() {
    let dir = scratch("config");
    let cfg = dir.join("study.cfg");
    fs::write(&cfg, "# table run\nproblem = ode_ml\nbeta = 0.3\nn_list = 4, 8, 16\nscheme = l1\n").unwrap();
    let csv = dir.join("table.csv");
    let out = subdiff(&[
        "converge",
        "--config",
        cfg.to_str().unwrap(),
        "--n-list",
        "5,10",
        "--set",
        "T=0.5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&csv).unwrap();
    let ns: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["5", "10"]);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn adaptive_writes_files() {
    let dir = scratch("adaptive");
    let out_dir = dir.join("run");
    let out = subdiff(&[
        "adaptive",
        "--problem",
        "ode_heaviside",
        "--beta",
        "0.6",
        "--set",
        "budget=24",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["adaptive.csv", "uniform.csv", "steps.csv", "mesh.txt"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let trace = fs::read_to_string(out_dir.join("adaptive.csv")).unwrap();
    let uniform = fs::read_to_string(out_dir.join("uniform.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,N,e_max,e_max_est"));
    assert_eq!(trace.lines().count(), uniform.lines().count());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn weights_csv() {
    let out = subdiff(&["weights", "--n", "4", "--beta", "0.3", "--grading", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("n,j,cq,l1"));
    assert_eq!(text.lines().count(), 1 + 4 * 5 / 2);
}

#[test]
fn selftest_passes() {
    let out = subdiff(&["selftest"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("FAIL"));
    assert!(text.lines().count() >= 10);
}

#[test]
fn errors_exit_nonzero() {
    for args in [
        &["converge", "--beta", "1.5"][..],
        &["converge", "--problem", "nope"],
        &["converge", "--n-list", "20,10"],
        &["converge", "--set", "colour=blue"],
        &["converge", "--config", "/nonexistent/study.cfg"],
        &["converge", "--grading", "adaptive"],
        &["weights", "--grading", "0.5"],
    ] {
        let out = subdiff(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}
