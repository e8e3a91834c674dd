use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn itosym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itosym"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn classify_case_b_exits_zero() {
    let out = itosym(&["--deterministic", "classify", &config("case_b_constant.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["case"], "B");
    assert!((r["params"]["c1"].as_f64().unwrap() + 1.0).abs() < 1e-6);
    assert!(r.get("generatedAt").is_none());
}

#[test]
fn quadratic_drift_is_unclassified_with_code_3() {
    let out = itosym(&["classify", &config("quadratic.json")]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report(&out)["case"], "Unclassified");
    assert!(report(&out).get("generatedAt").is_some());
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.json", "{ \"drift\": ");
    let out = itosym(&["classify", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_command_line_is_a_config_error() {
    assert_eq!(itosym(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(itosym(&["classify"]).status.code(), Some(1));
    assert_eq!(itosym(&["--help"]).status.code(), Some(0));
}

#[test]
fn invariant_violation_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "k1.json", r#"{"drift":{"expr":"x"},"noise":{"kind":"simple","s":1,"k":1}}"#);
    let out = itosym(&["classify", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k = 1 out of scope"));
}

#[test]
fn evaluation_error_exits_2() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "log.json",
        r#"{"drift":{"expr":"x"},"noise":{"kind":"constant","s":1},"symmetry":{"phi":"log(x - 2)"}}"#,
    );
    assert_eq!(itosym(&["verify", &p]).status.code(), Some(2));
}

#[test]
fn symmetry_reports_the_family_form() {
    let out = itosym(&["--deterministic", "symmetry", &config("case_b_simple.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["case"], "B");
    assert_eq!(r["deterministic"], true);
    assert_eq!(r["phi"], "x ^ 2 * exp(t)");
}

#[test]
fn verify_correct_symmetry() {
    let out = itosym(&["--deterministic", "verify", "--points", "50", &config("case_b_simple.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["points"], 50);
    assert!(r["maxResidual"].as_f64().unwrap() <= 1e-6);
    assert!(r["itoCriterion"].as_f64().unwrap().abs() <= 1e-9);
}

#[test]
fn verify_reports_the_w_obstruction() {
    let out = itosym(&["--deterministic", "verify", &config("w_obstruction.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    // k s^2 r x^(2k-1) with k = 2, s = 1.5, r = 1 at x = 1
    assert_eq!(r["wObstruction"]["value"], 4.5);
    assert!(r["maxR2"].as_f64().unwrap() > 1e-3);
}

#[test]
fn verify_rejects_trivial_symmetry() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "zero.json",
        r#"{"drift":{"expr":"0"},"noise":{"kind":"constant","s":1},"symmetry":{"phi":"0 * x"}}"#,
    );
    let out = itosym(&["verify", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trivial symmetry"));
}

#[test]
fn integrate_writes_one_csv_per_path() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("run");
    let out = itosym(&[
        "--deterministic",
        "--out",
        out_dir.to_str().unwrap(),
        "integrate",
        "--paths",
        "10",
        "--dt",
        "0.01",
        "--gnuplot",
        &config("case_b_constant.json"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csvs = fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 10);
    assert!(out_dir.join("integrate.json").exists());
    assert!(out_dir.join("paths.gp").exists());
    let first = fs::read_to_string(out_dir.join("path_0000.csv")).unwrap();
    assert!(first.starts_with("t,w,x_exact,x_scheme\n"));
    assert_eq!(first.lines().count(), 102);
    assert_eq!(report(&out)["exact"]["truncated"], 0);
}

#[test]
fn integrate_case_c_reports_blow_up_fraction() {
    let out = itosym(&["--deterministic", "integrate", &config("case_c_blowup.json")]);
    assert_eq!(out.status.code(), Some(0));
    let f = report(&out)["blowUpFraction"].as_f64().unwrap();
    assert!(f > 0.0 && f < 1.0, "{f}");
}

#[test]
fn integrate_all_truncated_exits_4() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "c.json",
        r#"{"drift":{"family":"C","params":{"c1":1,"beta":1}},"noise":{"kind":"constant","s":0.1},
            "x0":0,"t1":3,"dt":0.01,"paths":5}"#,
    );
    let out = itosym(&["integrate", &p]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(report(&out)["exact"]["truncatedFraction"], 1.0);
}

#[test]
fn integrate_rejects_dt_beyond_horizon() {
    let out = itosym(&["integrate", "--dt", "2", &config("case_b_constant.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convergence_slopes() {
    let out = itosym(&["--deterministic", "convergence", &config("case_b_constant.json")]);
    assert_eq!(out.status.code(), Some(0));
    let s = report(&out)["slope"].as_f64().unwrap();
    assert!((0.8..=1.2).contains(&s), "EM slope {s}");

    let out = itosym(&["--deterministic", "convergence", &config("case_a_simple_milstein.json")]);
    assert_eq!(out.status.code(), Some(0));
    let s = report(&out)["slope"].as_f64().unwrap();
    assert!((0.8..=1.2).contains(&s), "Milstein slope {s}");
}

#[test]
fn convergence_needs_four_levels() {
    let out = itosym(&["convergence", "--levels", "3", &config("case_b_constant.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convergence_all_truncated_exits_4() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "c.json",
        r#"{"drift":{"family":"C","params":{"c1":1,"beta":1}},"noise":{"kind":"constant","s":0.1},
            "x0":0,"t1":3,"paths":4}"#,
    );
    assert_eq!(itosym(&["convergence", &p]).status.code(), Some(4));
}

#[test]
fn degenerate_convergence_is_an_evaluation_error() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "z.json",
        r#"{"drift":{"family":"B","params":{"c0":1,"c1":-1}},"noise":{"kind":"constant","s":1},
            "scheme":"exact","pathKind":"zero","paths":2}"#,
    );
    assert_eq!(itosym(&["convergence", &p]).status.code(), Some(2));
}

#[test]
fn reports_are_reproducible() {
    let a = itosym(&["--deterministic", "--seed", "7", "integrate", "--paths", "4", &config("case_b_simple.json")]);
    let b = itosym(&["--deterministic", "--seed", "7", "integrate", "--paths", "4", &config("case_b_simple.json")]);
    assert_eq!(a.stdout, b.stdout);
    let c = itosym(&["--deterministic", "--seed", "8", "integrate", "--paths", "4", &config("case_b_simple.json")]);
    assert_ne!(a.stdout, c.stdout);
}
