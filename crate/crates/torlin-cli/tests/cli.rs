//! End-to-end tests of the compiled binary: artifact layout, digest
//! embedding, determinism, report contents, and the exit-code contract
//! (0 success, 1 verdict fail, 2 usage, 3 numeric failure).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn torlin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torlin"))
        .args(args)
        .output()
        .expect("binary must run")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout must be JSON")
}

/// A two-component real perturbation `1e-4 * 2cos(x_1 - x_2)` in the archive
/// format, written by hand so the test does not depend on the library.
fn write_perturbation(dir: &Path) -> PathBuf {
    let path = dir.join("pert.json");
    std::fs::write(
        &path,
        concat!(
            "{\"artifact_version\":1,\"coords\":[1,2],\"components\":2,\"real\":true,",
            "\"modes\":[{\"k\":[1,-1],\"coeff\":[[0.0001,0.0],[0.0001,0.0]]},",
            "{\"k\":[-1,1],\"coeff\":[[0.0001,0.0],[0.0001,0.0]]}]}"
        ),
    )
    .unwrap();
    path
}

#[test]
fn run_writes_deterministic_artifacts_with_embedded_digest() {
    let dir = tempfile::tempdir().unwrap();
    let pert = write_perturbation(dir.path());
    let run = |stem: &str| -> (PathBuf, PathBuf) {
        let trace = dir.path().join(format!("{stem}.csv"));
        let out = dir.path().join(format!("{stem}.json"));
        let res = torlin(&[
            "run-kam",
            "--omega",
            "1,phi",
            "--perturbation",
            pert.to_str().unwrap(),
            "--scheme",
            "dio:2:1",
            "--r",
            "10",
            "--q",
            "0.1",
            "--nu-max",
            "3",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
        (trace, out)
    };
    let (trace_a, out_a) = run("a");
    let (trace_b, _) = run("b");

    let csv_a = std::fs::read(&trace_a).unwrap();
    let csv_b = std::fs::read(&trace_b).unwrap();
    assert_eq!(csv_a, csv_b, "repeated runs must produce identical traces");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    let digest = summary["manifest_digest"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    let head = String::from_utf8_lossy(&csv_a).lines().next().unwrap().to_string();
    assert_eq!(head, format!("# manifest_digest={digest}"));

    let psi_name = summary["psi_hat"].as_str().unwrap();
    let psi: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(psi_name)).unwrap())
            .unwrap();
    assert_eq!(psi["manifest_digest"].as_str().unwrap(), digest);
    assert_eq!(psi["coords"], serde_json::json!([1, 2]));
    assert_eq!(psi["components"], serde_json::json!(2));

    assert_eq!(summary["stages"], serde_json::json!(4));
    assert!(summary["aborted"].is_null());
    assert!(summary["final_defect"].as_f64().unwrap() < 1e-9);
    assert_eq!(summary["omega_tilde"].as_array().unwrap().len(), 2);
}

#[test]
fn resonant_frequency_aborts_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let pert = write_perturbation(dir.path());
    let trace = dir.path().join("run.csv");
    let out = dir.path().join("run.json");
    let res = torlin(&[
        "run-kam",
        "--omega",
        "1,1",
        "--perturbation",
        pert.to_str().unwrap(),
        "--scheme",
        "dio:2:1",
        "--r",
        "10",
        "--nu-max",
        "3",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("resonance"));
    // the completed stages are still on disk and the summary names the abort
    assert!(trace.exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(summary["aborted"].as_str().unwrap().contains("resonance"));
}

#[test]
fn nonresonance_example_reports_the_resonant_pair() {
    let res = torlin(&[
        "check-nonresonance",
        "--omega",
        "1,1",
        "--spec",
        "ratio:poly:1:0.333",
        "--kmax",
        "10",
    ]);
    assert_eq!(code(&res), 1);
    let report = stdout_json(&res);
    assert_eq!(report["pass"], serde_json::json!(false));
    assert_eq!(report["worst_k"], serde_json::json!([1, -1]));
    assert_eq!(report["worst_margin"].as_f64().unwrap(), 0.0);
    assert!(report["delta"].is_null());
}

#[test]
fn golden_mean_condition_passes() {
    let res = torlin(&[
        "check-nonresonance",
        "--omega",
        "1,phi",
        "--spec",
        "ratio:poly:1:0.333",
        "--kmax",
        "50",
    ]);
    assert_eq!(code(&res), 0);
    let report = stdout_json(&res);
    assert_eq!(report["pass"], serde_json::json!(true));
    assert!(report["worst_margin"].as_f64().unwrap() > 1.0);
    assert_eq!(report["modes_checked"], serde_json::json!(101 * 101 - 1));
}

#[test]
fn scheme_report_verdicts_drive_the_exit_code() {
    let res = torlin(&[
        "scheme-report", "--scheme", "dio:2:1", "--omega", "1,phi", "--horizon", "10", "--q",
        "0.1",
    ]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report = stdout_json(&res);
    assert_eq!(report["verdicts"]["series_bounded_finite_horizon"], serde_json::json!(true));
    assert_eq!(
        report["verdicts"]["weight_ratios_bounded_finite_horizon"],
        serde_json::json!(true)
    );
    assert_eq!(report["series"]["terms"].as_array().unwrap().len(), 11);

    // theta = 1.5 outruns the default decay majorant exp(t^{1/2}) of this
    // scheme, so the shell-weight probe honestly reports failure
    let res = torlin(&[
        "scheme-report", "--scheme", "gevrey:2:1:1:1.5", "--omega", "1,phi", "--horizon", "8",
    ]);
    assert_eq!(code(&res), 1);
    let report = stdout_json(&res);
    assert_eq!(report["verdicts"]["series_bounded_finite_horizon"], serde_json::json!(true));
    assert_eq!(
        report["verdicts"]["weight_ratios_bounded_finite_horizon"],
        serde_json::json!(false)
    );
}

#[test]
fn lemma_suite_reports_per_check_slack() {
    let res = torlin(&["verify-lemmas", "--seed", "42", "--cases", "10"]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report = stdout_json(&res);
    assert_eq!(report["manifest"]["seed"], serde_json::json!(42));
    assert_eq!(report["suite"]["pass"], serde_json::json!(true));
    let checks = report["suite"]["checks"].as_object().unwrap();
    assert_eq!(checks.len(), 8);
    for (name, check) in checks {
        assert_eq!(check["pass"], serde_json::json!(true), "check {name}");
        assert_eq!(check["cases"], serde_json::json!(10), "check {name}");
    }
}

#[test]
fn reports_can_be_written_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let res = torlin(&[
        "check-nonresonance",
        "--omega",
        "1,phi",
        "--spec",
        "product:0.25:2",
        "--kmax",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.stdout.is_empty(), "file output must not also print");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["manifest"]["command"], serde_json::json!("check-nonresonance"));
    assert_eq!(report["manifest_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn usage_errors_exit_two() {
    let res = torlin(&["run-kam", "--nope"]);
    assert_eq!(code(&res), 2);

    let res = torlin(&["check-nonresonance", "--omega", "1,x", "--spec", "product:0.5:2",
        "--kmax", "5"]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("bad frequency entry"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "not json").unwrap();
    let res = torlin(&[
        "run-kam",
        "--omega",
        "1,phi",
        "--perturbation",
        bad.to_str().unwrap(),
        "--scheme",
        "dio:2:1",
        "--r",
        "10",
        "--nu-max",
        "1",
        "--trace",
        dir.path().join("t.csv").to_str().unwrap(),
        "--out",
        dir.path().join("o.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
}
