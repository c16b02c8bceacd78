use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wfpc::config::{Format, StateBuilder};
use wfpc::{parse_scenario, Scenario};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"))
}

fn wfpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfpc")).args(args).output().unwrap()
}

/// Runs `cmd` on a shipped scenario into a fresh directory.
fn run_shipped(cmd: &str, name: &str, extra: &[&str]) -> (TempDir, Output) {
    let tmp = tempfile::tempdir().unwrap();
    let config = scenario_path(name);
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = wfpc(&args);
    (tmp, out)
}

fn write_scenario(dir: &Path, s: &Scenario) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, s.to_toml()).unwrap();
    path
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// `(mask_id, p)` at the last time of every mask.
fn final_rows(csv: &str) -> Vec<(usize, f64)> {
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mask = header.iter().position(|h| *h == "mask_id").unwrap();
    let p = header.iter().position(|h| *h == "p").unwrap();
    let mut finals: Vec<(usize, f64)> = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let id: usize = cols[mask].parse().unwrap();
        let value: f64 = cols[p].parse().unwrap();
        match finals.last_mut() {
            Some(last) if last.0 == id => last.1 = value,
            _ => finals.push((id, value)),
        }
    }
    finals
}

#[test]
fn witness_quadrants_from_shipped_scenarios() {
    for (name, quadrant, witnessed) in [
        ("witness_no_offdiag", "NoOffdiag", false),
        ("witness_chi_only", "ChiOnly", true),
        ("witness_rho_only", "RhoOnly", false),
        ("witness_both", "Both", true),
    ] {
        let (dir, out) = run_shipped("witness", name, &[]);
        ok(&out);
        let v = json(dir.path(), "verdict.json");
        assert_eq!(v["quadrant"], quadrant, "{name}");
        assert_eq!(v["correlations_witnessed"], witnessed, "{name}");
        assert_eq!(v["condition2_caveat"], false, "{name}");
        assert!(String::from_utf8_lossy(&out.stdout).starts_with(quadrant));
    }
}

#[test]
fn noncommuting_witness_carries_caveat() {
    let (dir, out) = run_shipped("witness", "witness_noncommuting", &[]);
    ok(&out);
    let v = json(dir.path(), "verdict.json");
    assert_eq!(v["condition2_caveat"], true);
    assert_eq!(v["condition2"]["passed"], false);
}

#[test]
fn commuting_gibbs_masks_end_at_the_same_yield() {
    let (dir, out) = run_shipped("simulate", "simulate_commuting_gibbs", &[]);
    ok(&out);
    let finals = final_rows(&fs::read_to_string(dir.path().join("trajectories.csv")).unwrap());
    assert_eq!(finals.len(), 20);
    let first = finals[0].1;
    assert!(finals.iter().all(|(_, p)| (p - first).abs() <= 1e-9));
    let summary = json(dir.path(), "summary.json");
    assert!(summary["contrast"].as_f64().unwrap() <= 1e-9);
    assert!(dir.path().join("field.csv").exists());
}

#[test]
fn zero_field_population_is_flat() {
    let (dir, out) = run_shipped("simulate", "simulate_zero_field", &[]);
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    let p: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(p.len() > 100);
    assert!(p.iter().all(|x| (x - p[0]).abs() <= 1e-12));
    assert!(!dir.path().join("field.csv").exists());
}

#[test]
fn uncoupled_qrf_scan_has_no_violations() {
    let (dir, out) = run_shipped("qrf", "qrf_uncoupled", &[]);
    ok(&out);
    let s = json(dir.path(), "summary.json");
    assert_eq!(s["violated_cells"], 0);
    assert!(s["max_deviation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn coupled_qrf_scan_violates_away_from_start() {
    let (dir, out) = run_shipped("qrf", "qrf_coupled", &[]);
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("qrf_scan.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (t1, violated) = (col("t1"), col("violated"));
    let mut late_violations = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let start: f64 = cols[t1].parse().unwrap();
        if start == 0.0 {
            assert_eq!(cols[violated], "false", "{line}");
        } else if cols[violated] == "true" {
            late_violations += 1;
        }
    }
    assert!(late_violations > 0);
}

#[test]
fn intermediate_witness_reads_chi_only() {
    let (dir, out) = run_shipped("qrf", "qrf_intermediate", &[]);
    ok(&out);
    let s = json(dir.path(), "summary.json");
    let w = &s["intermediate_witness"][0];
    assert_eq!(w["quadrant"], "ChiOnly");
    assert!(w["chi_ge_norm"].as_f64().unwrap() > 1e-6);
}

#[test]
fn nogo_conditions() {
    for (name, expected) in [
        ("nogo_commuting", [true, true, true]),
        ("nogo_noncommuting", [true, false, true]),
        ("nogo_strong_field", [false, true, true]),
    ] {
        let (dir, out) = run_shipped("nogo", name, &[]);
        ok(&out);
        let c = json(dir.path(), "conditions.json");
        let got = ["condition1", "condition2", "condition3"].map(|k| c[k]["passed"].as_bool().unwrap());
        assert_eq!(got, expected, "{name}");
    }
}

#[test]
fn schema_errors_exit_one_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path("nogo_commuting"))
        .unwrap()
        .replace("env_cutoffs = [4]", "env_cutoffs = [-4]");
    let path = tmp.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = wfpc(&[
        "nogo",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.env_cutoffs[0]"));

    let text = fs::read_to_string(scenario_path("nogo_commuting"))
        .unwrap()
        .replace("\"commuting\"", "\"lattice\"");
    fs::write(&path, text).unwrap();
    let out = wfpc(&[
        "nogo",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lattice"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(wfpc(&["simulate"]).status.code(), Some(1));
    assert_eq!(wfpc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wfpc(&["--help"]).status.code(), Some(0));
    let (_dir, out) = run_shipped("simulate", "nogo_commuting", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol"));
    let (_dir, out) = run_shipped("simulate", "simulate_zero_field", &["--workers", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = parse_scenario(&scenario_path("simulate_zero_field")).unwrap();
    s.state.beta = Some(1e6);
    let path = write_scenario(tmp.path(), &s);
    let out = wfpc(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn grid_check_failure_exits_two() {
    let (dir, out) = run_shipped("simulate", "simulate_noncommuting_gibbs", &["--verify-grid"]);
    ok(&out);
    assert_eq!(json(dir.path(), "manifest.json")["grid_check"]["passed"], true);

    let tmp = tempfile::tempdir().unwrap();
    let mut s = parse_scenario(&scenario_path("simulate_noncommuting_gibbs")).unwrap();
    s.grid.steps = 40;
    s.protocol.grid_tolerance = 1e-15;
    let path = write_scenario(tmp.path(), &s);
    let out = wfpc(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--verify-grid",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(tmp.path(), "manifest.json")["grid_check"]["passed"], false);
}

#[test]
fn overrides_are_recorded_in_the_manifest() {
    let (dir, out) = run_shipped("witness", "witness_rho_only", &["--seed", "12", "--method", "pert2"]);
    ok(&out);
    let m = json(dir.path(), "manifest.json");
    assert_eq!(m["seed"], 12);
    assert_eq!(m["method"], "pert2");
    assert!(m["config"].as_str().unwrap().contains("seed = 12"));
    let shipped = parse_scenario(&scenario_path("witness_rho_only")).unwrap();
    assert_ne!(m["config_hash"], shipped.config_hash());
    let csv = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={} seed=12", m["config_hash"].as_str().unwrap())));
}

#[test]
fn runs_are_byte_identical() {
    let (a, out) = run_shipped("witness", "witness_both", &["--workers", "1"]);
    ok(&out);
    let (b, out) = run_shipped("witness", "witness_both", &["--workers", "2"]);
    ok(&out);
    for file in ["verdict.json", "trajectories.csv", "field.csv"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn report_summarizes_an_output_directory() {
    let (dir, out) = run_shipped("witness", "witness_chi_only", &[]);
    ok(&out);
    let report = wfpc(&["report", "--out", dir.path().to_str().unwrap()]);
    ok(&report);
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("command witness"));
    assert!(text.contains("\"ChiOnly\""));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(
        wfpc(&["report", "--out", empty.path().to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn matrix_state_round_trips_through_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = parse_scenario(&scenario_path("simulate_zero_field")).unwrap();
    s.output.formats = vec![Format::Json, Format::Matrix];
    let first = tmp.path().join("first");
    let path = write_scenario(tmp.path(), &s);
    ok(&wfpc(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]));
    assert!(first.join("initial_state.mat").exists());

    s.state.builder = StateBuilder::Matrix;
    s.state.path = Some("first/initial_state.mat".into());
    let second = tmp.path().join("second");
    let path = write_scenario(tmp.path(), &s);
    ok(&wfpc(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]));
    assert_eq!(json(&first, "summary.json")["p0"], json(&second, "summary.json")["p0"]);
}
