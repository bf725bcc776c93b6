use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn base(kind: &str) -> Value {
    json!({
        "kind": kind,
        "kernel": { "family": "one_over_f", "params": { "xi": 8.0, "gamma_lo": 0.1, "gamma_hi": 20.0 } },
        "target": { "axis": [1.0, 0.0, 1.0], "angle": 2.0 * 2f64.sqrt() * std::f64::consts::PI },
        "tau": 1.0,
        "grid": { "n_steps": 32, "refine": 2 }
    })
}

fn spinctl(dir: &Path, sub: &str, cfg: &Value, extra: &[&str]) -> Output {
    let path = dir.join(format!("{sub}.json"));
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_spinctl"))
        .arg(sub)
        .arg(&path)
        .args(extra)
        .env("SPINCTL_OUT", dir.join("out"))
        .output()
        .unwrap()
}

fn body(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'), "CRLF in {}", path.display());
    text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

#[test]
fn kernel_table_starts_at_the_zero_lag_value() {
    let dir = TempDir::new().unwrap();
    let out = spinctl(dir.path(), "kernel-table", &base("kernel-table"), &["--grid", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = body(&dir.path().join("out/kernel.csv"));
    assert_eq!(rows[0], ["s", "N_xx"]);
    assert_eq!(rows.len(), 1 + 41);
    let k0: f64 = rows[1][1].parse().unwrap();
    assert!((k0 - 8.0 * 200f64.ln()).abs() < 1e-12);
    let text = fs::read_to_string(dir.path().join("out/kernel.csv")).unwrap();
    assert!(text.starts_with("# grid:"));
}

#[test]
fn drift_only_sweep_has_zero_deviation() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("sweep");
    cfg["lambda_inv"] = json!([0]);
    cfg["epsilon"] = json!([0.1]);
    let out = spinctl(dir.path(), "sweep", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = body(&dir.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(column(&rows, "max_abs_d_omega"), ["0"]);
    let controls = body(&dir.path().join("out/controls_lambda_0.csv"));
    for c in ["d_omega_x", "d_omega_y", "d_omega_z"] {
        assert!(column(&controls, c).iter().all(|v| v == "0"), "{c}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["kind"], "sweep");
}

#[test]
fn monte_carlo_at_zero_strength_is_exactly_one() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("mc-validate");
    cfg["epsilon"] = json!([0.0]);
    cfg["two_s"] = json!([1, 3]);
    cfg["samples"] = json!(20);
    cfg["seed"] = json!(9);
    let out = spinctl(dir.path(), "mc-validate", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = body(&dir.path().join("out/mc.csv"));
    assert_eq!(rows[0].join(","), "epsilon,s,S_analytic,F_analytic,F_mc_real,F_mc_imag,std_err,samples,seed");
    assert_eq!(column(&rows, "F_mc_real"), ["1", "1"]);
    assert_eq!(column(&rows, "std_err"), ["0", "0"]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let mut cfg = base("mc-validate");
    cfg["epsilon"] = json!([0.2]);
    cfg["two_s"] = json!([1, 4]);
    cfg["samples"] = json!(64);
    cfg["seed"] = json!(11);
    cfg["lambda_inv"] = json!([0, 10]);
    let texts: Vec<String> = (0..2)
        .map(|_| {
            let dir = TempDir::new().unwrap();
            let out = spinctl(dir.path(), "mc-validate", &cfg, &[]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            fs::read_to_string(dir.path().join("out/mc.csv")).unwrap()
        })
        .collect();
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn solve_writes_archive_and_controls() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("solve");
    cfg["lambda_inv"] = json!([0, 20]);
    let out = spinctl(dir.path(), "solve", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let archive: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/solution.json")).unwrap()).unwrap();
    assert_eq!(archive["lambda_inv"], 20.0);
    assert_eq!(archive["t"].as_array().unwrap().len(), 33);
    assert_eq!(archive["refined"]["n_steps"], 64);
    let rows = body(&dir.path().join("out/controls.csv"));
    assert_eq!(rows[0].join(","), "t,omega_x,omega_y,omega_z,d_omega_x,d_omega_y,d_omega_z");
    assert_eq!(rows.len(), 34);
    let text = fs::read_to_string(dir.path().join("out/controls.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# refinement delta")));
}

#[test]
fn config_errors_exit_with_one_and_name_fields() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("kernel-table");
    cfg.as_object_mut().unwrap().remove("tau");
    cfg["kernel"]["params"]["gamma_lo"] = json!(30.0);
    cfg["two_s"] = json!([0]);
    let out = spinctl(dir.path(), "kernel-table", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tau: missing required field"), "{err}");
    assert!(err.contains("cutoffs out of order"), "{err}");
    assert!(err.contains("two_s"), "{err}");
    assert!(err.contains("line "), "{err}");

    let out = spinctl(dir.path(), "kernel-table", &base("kernel-table"), &["--grid", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = spinctl(dir.path(), "sweep", &base("kernel-table"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_two_and_names_the_stage() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("solve");
    cfg["lambda_inv"] = json!([0, 10]);
    cfg["tolerances"] = json!({ "max_iterations": 1 });
    let out = spinctl(dir.path(), "solve", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("optimize (lambda_inv = 10)"), "{err}");
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = spinctl::validate_config(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(path.file_stem().unwrap().to_str(), Some(cfg.kind.name()));
        seen += 1;
    }
    assert_eq!(seen, 5);
}

#[test]
fn magnus_check_separates_the_truncated_series() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base("magnus-check");
    cfg["epsilon"] = json!([0.5]);
    cfg["samples"] = json!(3);
    cfg["seed"] = json!(4);
    cfg["grid"] = json!({ "n_steps": 400, "refine": 1 });
    let out = spinctl(dir.path(), "magnus-check", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = body(&dir.path().join("out/magnus.csv"));
    let method = column(&rows, "method");
    let status = column(&rows, "status");
    let mismatch: Vec<f64> = column(&rows, "mismatch").iter().map(|v| v.parse().unwrap()).collect();
    assert!(status.iter().all(|s| s == "ok"));
    let worst = |m: &str| (0..method.len()).filter(|&i| method[i] == m).map(|i| mismatch[i]).fold(0.0, f64::max);
    assert!(worst("exact-ode") < 1e-3);
    // a lab-frame path along one axis would make all three agree
    assert!(worst("magnus-series") > 10.0 * worst("exact-ode"));
}
