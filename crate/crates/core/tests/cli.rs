//! End-to-end runs of the binary. Text outputs are pinned against files in
//! `tests/golden`; set `UPDATE_GOLDEN=1` to rewrite them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carfollow"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn check_golden(actual: &Path, name: &str) {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let got = fs::read_to_string(actual).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &got).unwrap();
        return;
    }
    let want = fs::read_to_string(&golden).unwrap_or_else(|_| panic!("missing golden {name}"));
    assert_eq!(got, want, "{name} differs from its golden copy");
}

fn out(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn simulate_newell_matches_golden() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "newell.csv");
    let o = run(&["simulate", "--config", fixture("newell_slvp.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    // ceil(10 / 0.5) + 1 rows plus the header
    assert_eq!(text.lines().count(), 22);
    check_golden(&csv, "simulate_newell.csv");
}

#[test]
fn simulate_moving_leader_matches_golden() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "ba.csv");
    let audit = out(&dir, "ba.audit.json");
    let o = run(&[
        "simulate",
        "--config",
        fixture("ba_newell_platoon_leader.json").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--audit",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    check_golden(&csv, "simulate_ba_newell_moving_leader.csv");
    check_golden(&audit, "simulate_ba_newell_moving_leader.audit.json");
}

#[test]
fn command_line_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "o.csv");
    let o = run(&[
        "simulate",
        "--model",
        "ba-newell",
        "--config",
        fixture("newell_slvp.json").to_str().unwrap(),
        "--dt",
        "0.25",
        "--t-end",
        "1 s",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().nth(1).unwrap().ends_with(",bounded-acceleration,"));
}

#[test]
fn idm_just_outside_minimum_spacing_runs() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "idm.csv");
    let o = run(&["simulate", "--config", fixture("idm_close.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn idm_inside_minimum_spacing_is_a_domain_failure() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "idm.csv");
    let o = run(&["simulate", "--config", fixture("idm_inside_minimum.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular"));
    // the truncated trajectory is still written
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);
}

#[test]
fn gipps_in_the_grey_region_is_a_domain_failure() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "g.csv");
    let o = run(&["simulate", "--config", fixture("gipps_grey.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ill-defined"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "x.csv");
    for f in ["unknown_key.json", "bad_unit.json", "does_not_exist.json"] {
        let o = run(&["simulate", "--config", fixture(f).to_str().unwrap(), "--out", csv.to_str().unwrap()]);
        assert_eq!(code(&o), 1, "{f}");
    }
    assert_eq!(code(&run(&["simulate", "--model", "newton", "--config", "x", "--out", "y"])), 1);
    assert_eq!(code(&run(&["replicate", "fig9", "--out", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn fd_newell_matches_golden() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "fd.csv");
    let o = run(&["fd", "--model", "newell", "--count", "20", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    check_golden(&csv, "fd_newell.csv");

    let rows: Vec<Vec<f64>> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let slopes: Vec<f64> = rows.windows(2).map(|w| (w[1][2] - w[0][2]) / (w[1][0] - w[0][0])).collect();
    assert!(slopes.iter().any(|s| (s - 30.0).abs() < 1e-5));
    assert!(slopes.iter().any(|s| (s + 4.375).abs() < 1e-5));
}

#[test]
fn fd_for_idm_is_unsupported() {
    let dir = TempDir::new().unwrap();
    let o = run(&["fd", "--model", "idm", "--out", out(&dir, "fd.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn phase_map_matches_golden_and_has_a_legend() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "map.csv");
    let o = run(&[
        "phase-map", "--model", "ba-newell", "--dt", "0.1", "--v-max", "30", "--v-count", "7", "--z-max", "60", "--z-count", "7",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    check_golden(&csv, "phase_map_ba_newell.csv");
    check_golden(&dir.path().join("map.legend.json"), "phase_map_ba_newell.legend.json");
}

#[test]
fn bda_phase_map_shows_five_phases() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "map.csv");
    let o = run(&[
        "phase-map", "--model", "bda-newell", "--dt", "1", "--v-max", "40", "--v-count", "161", "--z-max", "120", "--z-count", "121",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let mut codes: Vec<String> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    codes.sort();
    codes.dedup();
    assert_eq!(codes.len(), 5, "{codes:?}");
}

#[test]
fn idm_vector_field_has_no_phase_labels() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "vf.csv");
    let o = run(&[
        "vector-field", "--model", "idm", "--v-max", "10", "--v-count", "3", "--z-min", "4", "--z-max", "8", "--z-count", "5",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    check_golden(&csv, "vector_field_idm.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "v,z,dvdt,dzdt,phase");
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn oracle_checks_pass() {
    let o = run(&["oracle-check", "gipps", "--v0", "30"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() < report["tolerance"].as_f64().unwrap());

    let dir = TempDir::new().unwrap();
    let json = out(&dir, "idm.json");
    let o = run(&["oracle-check", "idm", "--out", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    check_golden(&json, "oracle_idm.json");
}

#[test]
fn sweep_of_compliant_newell_grid_passes() {
    let dir = TempDir::new().unwrap();
    let json = out(&dir, "report.json");
    let o = run(&["sweep", "--config", fixture("newell_grid.json").to_str().unwrap(), "--out", json.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    check_golden(&json, "sweep_newell_grid.json");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 16);
    for agg in report["aggregates"]["principles"].as_array().unwrap() {
        assert_eq!(agg["pass_rate"].as_f64(), Some(1.0), "{agg}");
    }
}

#[test]
fn replicate_idm_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["replicate", "idm-fig2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["trajectory.csv", "phase_plane.csv", "findings.json"] {
        assert!(dir.path().join("idm-fig2").join(f).exists(), "{f}");
    }
}

#[test]
fn replicate_collision_reports_its_failed_assertion() {
    let dir = TempDir::new().unwrap();
    let o = run(&["replicate", "bda-newell-collision", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("halt-after-onset") && stdout.contains("FAILED"));
}

#[test]
fn version_and_help() {
    let o = run(&["--version"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), format!("carfollow v{}", env!("CARGO_PKG_VERSION")));
    let o = run(&["--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Exit codes"));
}
