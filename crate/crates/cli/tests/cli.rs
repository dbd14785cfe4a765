//! End-to-end tests of the `geogreen` binary: JSON output and exit codes.
use serde_json::Value;
use std::process::Command;

fn run(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_geogreen"))
        .args(args)
        .env_remove("GEOGREEN_CACHE")
        .output()
        .expect("binary runs");
    let text = String::from_utf8(out.stdout).expect("utf-8 output");
    let v: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("not one JSON object ({e}): {text}"));
    (out.status.code().expect("exit code"), v)
}

#[test]
fn field_reports_pell_solution() {
    let (code, v) = run(&["field", "--d", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["dK"], 5);
    assert_eq!(v["pell"], serde_json::json!([3, 1]));
    assert_eq!(v["h"], 1);
}

#[test]
fn radicand_resolves_to_field_discriminant() {
    let (code, v) = run(&["field", "--d", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["dK"], 12);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, v) = run(&["field", "--bogus"]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "usage");
    assert_eq!(v["error"]["exit_code"], 2);
}

#[test]
fn invalid_discriminant_is_a_usage_error() {
    let (code, v) = run(&["field", "--d", "4"]);
    assert_eq!(code, 2);
    assert!(v["error"]["message"].as_str().unwrap().contains("squarefree"));
}

#[test]
fn malformed_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.cfg");
    std::fs::write(&p, "[tolerances]\nfe = -1\n").unwrap();
    let (code, v) = run(&["--config", p.to_str().unwrap(), "field", "--d", "5"]);
    assert_eq!(code, 3);
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["error"]["message"].as_str().unwrap().contains(":2:"));
}

#[test]
fn config_values_apply_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.cfg");
    std::fs::write(&p, "curve = 11a\nd = 13\n[truncations]\ncoeffs = 12\n").unwrap();
    let (code, v) = run(&["--config", p.to_str().unwrap(), "coeffs"]);
    assert_eq!(code, 0);
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 12);
    let (_, v) = run(&["--config", p.to_str().unwrap(), "field", "--d", "5"]);
    assert_eq!(v["dK"], 5);
}

#[test]
fn impossible_tolerance_exits_4_with_report() {
    let (code, v) = run(&["--tol-scale", "1e-30", "field", "--d", "5"]);
    assert_eq!(code, 4);
    assert_eq!(v["dK"], 5);
    assert_eq!(v["error"]["kind"], "numeric");
}

#[test]
fn output_is_deterministic() {
    let a = run(&["theta", "--d", "13", "--m", "30"]);
    let b = run(&["--threads", "2", "theta", "--d", "13", "--m", "30"]);
    assert_eq!(a, b);
}

#[test]
fn main_rhs_marks_gap_not_computable() {
    let (code, v) = run(&["main-rhs", "--d", "5"]);
    assert_eq!(code, 0);
    assert_eq!(v["reports"][0]["gap_status"], "not-computable");
}

#[test]
fn grid_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("grid.csv");
    let (code, _) = run(&["--emit-grid", p.to_str().unwrap(), "eis-fe", "--d", "5", "--s", "0.3,0.7"]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("tau_re,tau_im,s,"));
    assert!(text.lines().count() > 2);
    let (code, v) = run(&["--emit-grid", p.to_str().unwrap(), "field", "--d", "5"]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "usage");
}

#[test]
fn corrupted_cache_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (_, first) = run(&["--cache-dir", d, "coeffs", "--curve", "37a", "--m", "40"]);
    let file = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&file).unwrap().replacen("\n2,", "\n2,9", 1);
    std::fs::write(&file, text).unwrap();
    let (code, second) = run(&["--cache-dir", d, "coeffs", "--curve", "37a", "--m", "40"]);
    assert_eq!(code, 0);
    assert_eq!(first, second);
}

#[test]
fn lift_of_j_on_unimodular_lattice() {
    let (code, v) = run(&["reglift", "--input", "j", "--z", "0.1,2.5,-0.2,0.9"]);
    assert_eq!(code, 0);
    assert_eq!(v["tolerance_checks"][0]["ok"], true);
}

#[test]
fn selftest_subset_passes() {
    let (code, v) = run(&["selftest", "--criteria", "1,3"]);
    assert_eq!(code, 0);
    assert_eq!(v["passed"], serde_json::json!([1, 3]));
}
