use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CAP: &str = r#"[problem]
n = 2
k = 2
sigma = 0.55
psi = { family = "constant", c = 0.36 }
subsolution = { family = "cap", sigma = 0.7, radius = 0.5, center = [0.0, 0.0] }

[grid]
h = 0.0625

[path]
eps = [0.1]
"#;

const SWEEP: &str = r#"[problem]
n = 2
k = 2
sigma = 0.55
psi = { family = "constant", c = 0.36 }
subsolution = { family = "cap", sigma = 0.65, radius = 1.1, center = [0.0, 0.0] }

[grid]
h = 0.0625

[path]
eps = [0.4, 0.2, 0.1, 0.05]
probe_eps = 0.42
"#;

fn plateau(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plateau"));
    cmd.args(args).current_dir(dir).env_remove("PLATEAU_CORRUPT_GV");
    if let Some(text) = config {
        fs::write(dir.join("run.toml"), text).unwrap();
        cmd.args(["--config", "run.toml"]);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_field_and_report() {
    let dir = TempDir::new().unwrap();
    let o = plateau(dir.path(), &["solve", "--out", "s"], Some(CAP));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["field.csv", "nodes.csv", "report.json"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(dir.path().join("s/field.csv")).unwrap();
    assert!(header.starts_with("node,x,y,v,u,kappa_1,kappa_2,margin\n"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["solver"]["status"], "Completed");
}

#[test]
fn missing_psi_is_a_config_error_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let text = CAP.replace("psi = { family = \"constant\", c = 0.36 }\n", "");
    let o = plateau(dir.path(), &["solve"], Some(&text));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("psi"), "{}", stderr(&o));
}

#[test]
fn unsolvable_problem_reports_last_good_t() {
    let dir = TempDir::new().unwrap();
    // no convex graph over this disk has σ_2(κ) = 1.21 with the boundary so low
    let text = CAP.replace("c = 0.36", "c = 1.21");
    let o = plateau(dir.path(), &["solve", "--out", "s"], Some(&text));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/report.json")).unwrap()).unwrap();
    let failed = &report["solver"]["status"]["Failed"];
    assert!(failed["last_good_t"].as_f64().unwrap() < 1.0);
}

#[test]
fn sweep_writes_one_field_per_level_and_a_summary() {
    let dir = TempDir::new().unwrap();
    let o = plateau(dir.path(), &["plateau", "--out", "p"], Some(SWEEP));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for j in 0..4 {
        assert!(dir.path().join(format!("p/field_{j:02}.csv")).exists());
    }
    let summary = fs::read_to_string(dir.path().join("p/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "level,eps,h,residual,m0,c2_interior,cauchy_gap");
    assert_eq!(lines.len(), 5);

    let o = plateau(dir.path(), &["plot-data", "--out", "p"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("p/plot/schedule.csv").exists());
    assert!(dir.path().join("p/plot/profile_field_03.csv").exists());
}

#[test]
fn sweep_failure_keeps_completed_levels() {
    let dir = TempDir::new().unwrap();
    // single full steps with a short Newton budget fail once the rim gets steep
    let text = format!(
        "{}warm_start = false\n\n[solver]\nmax_newton = 5\nt_start = 1.0\nt_min = 1.0\nt_max = 1.0\npredictor = false\n",
        SWEEP
    );
    let o = plateau(dir.path(), &["plateau", "--out", "p"], Some(&text));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("eps = 0.1"), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("p/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.path().join("p/field_01.csv").exists());
    assert!(!dir.path().join("p/field_02.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p/report.json")).unwrap()).unwrap();
    assert_eq!(report["levels"].as_array().unwrap().len(), 2);
    assert!(report["failure"].is_string());
}

#[test]
fn increasing_schedule_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = SWEEP.replace("[0.4, 0.2, 0.1, 0.05]", "[0.05, 0.1, 0.2, 0.4]");
    let o = plateau(dir.path(), &["plateau"], Some(&text));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("decreasing"), "{}", stderr(&o));
}

#[test]
fn default_suite_passes() {
    let dir = TempDir::new().unwrap();
    let o = plateau(dir.path(), &["verify", "--out", "v", "--seed", "3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
}

#[test]
fn corrupted_operator_derivative_is_caught() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_plateau"))
        .args(["verify", "--out", "v"])
        .current_dir(dir.path())
        .env("PLATEAU_CORRUPT_GV", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("Jacobian mismatch in dG/dv "), "{}", stderr(&o));
}

#[test]
fn k_above_n_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = plateau(dir.path(), &["verify"], Some(&CAP.replace("k = 2", "k = 3")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("k = 3"));
}

#[test]
fn plot_data_needs_outputs() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = plateau(dir.path(), &["plot-data", "--out", "empty"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_bit_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    for (out, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let o = plateau(dir.path(), &["plateau", "--out", out, "--threads", threads], Some(SWEEP));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["field_00.csv", "field_03.csv", "nodes_02.csv", "summary.csv", "report.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        for other in ["b", "c"] {
            assert!(a == fs::read(dir.path().join(other).join(f)).unwrap(), "{f} differs in {other}");
        }
    }
    for (out, seed) in [("v1", "9"), ("v2", "9")] {
        let o = plateau(dir.path(), &["verify", "--out", out, "--seed", seed], Some(CAP));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let v1 = fs::read(dir.path().join("v1/verify.json")).unwrap();
    assert_eq!(v1, fs::read(dir.path().join("v2/verify.json")).unwrap());
}
