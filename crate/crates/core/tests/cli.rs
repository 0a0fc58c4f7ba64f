use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dhoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhoa"))
        .args(args)
        .env("DHOA_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["diagnostics"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn usual_oscillator_is_verified() {
    let out = dhoa(&[
        "analyze",
        "--family",
        "stretched_exp",
        "--k",
        "1",
        "--m",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "verified");
    assert_eq!(r["spectrum"]["shape"], "lower_bounded");
    assert_eq!(r["spectrum"]["lambda"], 0);
    for s in r["psi_samples"].as_array().unwrap() {
        let (rho, psi) = (s["rho"].as_f64().unwrap(), s["psi"].as_f64().unwrap());
        assert!(
            (psi - rho).abs() <= 1e-8 * rho.abs().max(1.0),
            "{rho} {psi}"
        );
    }
    assert_eq!(r["domain"]["outer_sq"], "+inf");
}

#[test]
fn non_integer_abscissa_is_rejected() {
    let out = dhoa(&[
        "analyze", "--family", "power", "--sigma", "1.5", "--alpha", "0", "--beta", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "rejected");
    let c = check(&r, "convergence_abscissa_integer");
    assert_eq!(c["status"], "fail");
    assert!(c["statement"]
        .as_str()
        .unwrap()
        .contains("not a nonpositive integer"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a nonpositive integer"));
}

#[test]
fn annulus_has_integer_spectrum_and_ring_domain() {
    let out = dhoa(&[
        "analyze", "--family", "power", "--sigma", "0", "--alpha", "1", "--beta", "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["spectrum"]["shape"], "all_integers");
    assert_eq!(r["domain"]["inner_sq"].as_f64(), Some(1.0));
    assert_eq!(r["domain"]["outer_sq"].as_f64(), Some(4.0));
    assert_eq!(r["basis"]["n_min"], -64);
    assert_eq!(r["basis"]["n_max"], 64);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"weight": {"family": "nope"}}"#,
        r#"{"weight": {"family": "power"}, "unknown_key": 1}"#,
        r#"{"weight": {"family": "power"}, "tolerances": {"relations": -1}}"#,
        r#"{"weight": {"family": "power"}, "basis": {"n_max": 4}}"#,
        r#"{"weight": {"family": "power", "alpha": 2, "beta": 1}}"#,
        "not json",
    ];
    for text in cases {
        let path = write_config(dir.path(), text);
        let out = dhoa(&["analyze", "--config", &path]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = dhoa(&["analyze", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three_and_a_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"weight": {"family": "essential_edge"}, "extrapolation": {"tol": 1e-15, "max_doublings": 3}}"#,
    );
    let out = dhoa(&["analyze", "--config", &path]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "numerical_failure");
    assert!(r["convergence_abscissa"].is_number());
    assert!(r["error"].as_str().unwrap().contains("did not settle"));
}

#[test]
fn flags_override_the_config_file_and_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"weight": {"family": "power", "sigma": 2, "alpha": 1, "beta": 4}, "mode": "annihilation", "mu": 0.5}"#,
    );
    let report = dir.path().join("out/report.json");
    let csv_dir = dir.path().join("tables");
    let out = dhoa(&[
        "analyze",
        "--config",
        &path,
        "--sigma",
        "0",
        "--mode",
        "creation",
        "--mu",
        "-0.25",
        "--nmax",
        "96",
        "--out",
        report.to_str().unwrap(),
        "--csv",
        csv_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["config"]["weight"]["sigma"].as_f64(), Some(0.0));
    assert_eq!(r["config"]["mode"], "creation");
    assert_eq!(r["config"]["mu"].as_f64(), Some(-0.25));
    // creation mode reflects the index, so the deep side is the negative one
    assert_eq!(
        (r["basis"]["n_min"].as_i64(), r["basis"]["n_max"].as_i64()),
        (Some(-96), Some(64))
    );

    let psi = fs::read_to_string(csv_dir.join("psi.csv")).unwrap();
    assert_eq!(psi.lines().next(), Some("rho,psi"));
    assert_eq!(
        psi.lines().count(),
        1 + r["psi_samples"].as_array().unwrap().len()
    );
    let checks = fs::read_to_string(csv_dir.join("checks.csv")).unwrap();
    assert!(checks
        .lines()
        .any(|l| l.starts_with("kernel_overlap,verification,pass")));
}

#[test]
fn tabulated_weight_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("w.csv");
    let mut text = String::from("x,y\n");
    for i in 0..=40 {
        let x = 1.0 + 3.0 * i as f64 / 40.0;
        text.push_str(&format!("{x},{}\n", (-x).exp()));
    }
    fs::write(&table, text).unwrap();
    let path = write_config(
        dir.path(),
        &format!(
            r#"{{"weight": {{"family": "tabulated", "table_path": {:?}}}}}"#,
            table.to_str().unwrap()
        ),
    );
    let out = dhoa(&["analyze", "--config", &path]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["method"], "quadrature");
    assert_eq!(r["spectrum"]["shape"], "all_integers");
}

#[test]
fn reports_are_deterministic_and_use_seventeen_digits() {
    let args = ["analyze", "--family", "log_gaussian", "--n", "2"];
    let strip = |o: &Output| {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let (a, b) = (dhoa(&args), dhoa(&args));
    assert_eq!(strip(&a), strip(&b));
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(
        text.contains("\"mu\": 0.0000000000000000e0"),
        "mu not written with 17 digits"
    );
}

#[test]
fn each_check_appears_once() {
    let out = dhoa(&["analyze", "--family", "essential_edge"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = r["diagnostics"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len(), "{names:?}");
    assert_eq!(r["diagnostics"]["verdict"]["verdict"], "constructible");
}

#[test]
fn reproduce_paper_writes_every_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dhoa(&["reproduce-paper", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let suite: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("suite.json")).unwrap()).unwrap();
    assert_eq!(suite["passed"], true);
    let examples = suite["examples"].as_array().unwrap();
    assert_eq!(examples.len(), 14);
    for e in examples {
        let id = e["id"].as_str().unwrap();
        assert!(dir.path().join(format!("{id}.json")).exists(), "{id}");
        assert_eq!(e["passed"], true, "{id}");
    }
    let rejected = examples
        .iter()
        .find(|e| e["expected_rejection"] == true)
        .unwrap();
    assert_eq!(rejected["report"]["status"], "rejected");
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_dhoa"))
        .args(["analyze", "--family", "power"])
        .env("DHOA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn short_truncation_fails_verification_with_one() {
    let out = dhoa(&[
        "analyze", "--family", "power", "--alpha", "1", "--beta", "4", "--nmax", "16",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "verification_failed");
    assert_eq!(check(&r, "coherent_eigen_residual")["status"], "fail");
}

#[test]
fn shipped_schema_lists_every_report_key() {
    let schema: Value =
        serde_json::from_str(include_str!("../../../docs/report.schema.json")).unwrap();
    let required: Vec<&str> = schema["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let out = dhoa(&[
        "analyze", "--family", "power", "--alpha", "1", "--beta", "4",
    ]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    let mut want = required.clone();
    keys.sort();
    want.sort();
    assert_eq!(keys, want);
    let config_keys = schema["$defs"]["config"]["properties"].as_object().unwrap();
    for k in r["config"].as_object().unwrap().keys() {
        assert!(config_keys.contains_key(k), "{k} missing from the schema");
    }
}
