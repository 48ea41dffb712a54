use std::path::PathBuf;
use std::process::{Command, Output};

fn dce(args: &[&str], env: &[(&str, &str)], tag: &str) -> (Output, PathBuf) {
    let dir = std::env::temp_dir().join(format!("dce-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dce"));
    cmd.args(args).arg("--out").arg(&dir);
    for (k, v) in env {
        cmd.env(k, v);
    }
    (cmd.output().expect("binary runs"), dir)
}

#[test]
fn sweep_writes_fixed_columns() {
    let (out, dir) = dce(&["sweep-entropy"], &[("DCE_PHYSICS__TAU_GRID", "[0.05, 0.1]")], "sweep");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p,tau,N,S_d"));
    // p = 1 creates nothing
    assert_eq!(lines.next(), Some("1,5e-2,0e0,0e0"));
    let p2: Vec<&str> = csv.lines().filter(|l| l.starts_with("2,1e-1")).collect();
    let s: f64 = p2[0].split(',').nth(3).unwrap().parse().unwrap();
    assert!((s - 0.031492).abs() < 1e-6, "{s}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["monotone_in_p"], true);
    assert!(report["records"].as_array().unwrap().iter().all(|r| r["pipeline"] == "short-time"));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn bad_config_exits_2() {
    let (out, _) = dce(&["gaussian"], &[("DCE_PHYSICS__MODES", "[2]")], "cfg");
    assert_eq!(out.status.code(), Some(2));
    let (out, _) = dce(&["resonance", "--config", "/nonexistent/dce.toml"], &[], "cfg2");
    assert_eq!(out.status.code(), Some(2));
    let (out, _) = dce(&["resonance", "--tol", "1e-3"], &[], "cfg3");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regime_violation_exits_3() {
    let (out, _) =
        dce(&["sweep-entropy"], &[("DCE_PHYSICS__P", "[8]"), ("DCE_PHYSICS__TAU_GRID", "[0.3]")], "regime");
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p = 8, tau = 0.3"));
}

#[test]
fn numerical_failure_exits_4() {
    let env = [("DCE_CUTOFFS__FIELD_K_MAX", "2"), ("DCE_CUTOFFS__FOCK_MODES", "2"), ("DCE_TOLERANCES__FIELD", "1e-300")];
    let (out, _) = dce(&["field-oracle"], &env, "numerical");
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn crosscheck_disagreement_exits_5() {
    let env = [("DCE_TOLERANCES__CROSSCHECK_N_EPS", "0"), ("DCE_TOLERANCES__CROSSCHECK_N_TAU2", "0")];
    let (out, dir) = dce(&["crosscheck"], &env, "xfail");
    assert_eq!(out.status.code(), Some(5));
    // outputs are still written for inspection
    assert!(dir.join("crosscheck.csv").exists());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn validate_config_prints_defaults() {
    let (out, _) = dce(&["validate-config"], &[("DCE_PHYSICS__EPSILON", "2e-3")], "validate");
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = dce_runner::ScenarioConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.physics.epsilon, 2e-3);
    assert_eq!(cfg.schema_version, dce_runner::config::SCHEMA_VERSION);
}

#[test]
fn config_file_round_trips_through_cli() {
    let dir = std::env::temp_dir().join(format!("dce-cli-file-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "schema_version = 1\npipeline = \"gaussian\"\n[physics]\nmodes = [1, 3]\ntau_grid = { start = 0.0, stop = 2.0, count = 5 }\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dce"))
        .args(["gaussian", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("out/gaussian.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("tau,m,sigma_q,sigma_p,N_m,S_d,S_R2,n_cut"));
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
    // a pinned pipeline rejects other subcommands
    let out = Command::new(env!("CARGO_BIN_EXE_dce")).args(["resonance", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(dir);
}
