use std::fs;
use std::process::Command;

use fbcontrol::io::{read_json, SavedState, Summary, CONTROLS_CSV, SIGMA_CSV, STATE_JSON, SUMMARY_JSON, TRACE_CSV};
use fbcontrol::{check_state, run_experiment, write_artifacts, Example, ExperimentSpec};

#[test]
fn artifacts_are_complete_and_deterministic() {
    let spec = ExperimentSpec::new(Example::Harmonic, 8);
    let result = run_experiment(&spec).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_artifacts(&result, a.path()).unwrap();
    write_artifacts(&run_experiment(&spec).unwrap(), b.path()).unwrap();
    for name in [CONTROLS_CSV, SIGMA_CSV, TRACE_CSV, SUMMARY_JSON, STATE_JSON] {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between identical runs");
    }

    let controls = fs::read_to_string(a.path().join(CONTROLS_CSV)).unwrap();
    let mut lines = controls.lines();
    assert_eq!(lines.next(), Some("x1,u,v"));
    assert_eq!(lines.count(), 9);
    let sigma = fs::read_to_string(a.path().join(SIGMA_CSV)).unwrap();
    assert_eq!(sigma.lines().count(), result.report.counts.total() + 1);

    let summary: Summary = read_json(&a.path().join(SUMMARY_JSON)).unwrap();
    assert_eq!(summary, Summary::from_result(&result));
    assert_eq!(summary.example, 2);

    // the saved point re-certifies to the same report
    let saved: SavedState = read_json(&a.path().join(STATE_JSON)).unwrap();
    assert_eq!(saved.u, result.u);
    let checked = check_state(&saved, None).unwrap();
    assert_eq!(checked.report, result.report);
    assert_eq!(checked.complementarity, result.complementarity);
}

#[test]
fn check_rejects_mismatched_state() {
    let result = run_experiment(&ExperimentSpec::new(Example::Constant, 4)).unwrap();
    let mut saved = SavedState::from_result(&result);
    saved.nx = 5;
    assert!(check_state(&saved, None).is_err());
    saved.nx = 4;
    saved.example = 9;
    assert!(check_state(&saved, None).is_err());
    saved.example = 3;
    assert!(check_state(&saved, Some(-1.0)).is_err());
}

#[test]
fn command_line_solve_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_fbcontrol");
    let out = Command::new(exe)
        .args(["solve", "--example", "3", "--nx", "6", "--out"])
        .arg(dir.path())
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["example"], 3);
    assert_eq!(printed["nx"], 6);

    let out = Command::new(exe)
        .args(["check", "--state"])
        .arg(dir.path().join(STATE_JSON))
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success());
    let checked: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(checked["verdict"], printed["verdict"]);
    assert_eq!(checked["tol"], printed["tol"]);

    let out = Command::new(exe)
        .args(["solve", "--example", "7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
