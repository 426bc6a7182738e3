use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlcbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlcbs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_runs_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "# nothing set\n");
    let out_dir = dir.path().join("out");
    let o = nlcbs(&[
        "--config",
        &cfg,
        "--scenario",
        "conservation",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&out_dir.join("manifest.json"));
    assert_eq!(m["status"], "success");
    assert_eq!(m["config"]["alpha"], 0.01);
    assert_eq!(m["config"]["beta"], 0.1);
    assert_eq!(m["config"]["k_ell"], 10.0);
}

#[test]
fn negative_thickness_is_a_constraint_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b = -3\n");
    let out_dir = dir.path().join("out");
    let o = nlcbs(&["--config", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("b must be positive"), "{}", stderr(&o));
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn unknown_keys_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 0.01\nlength = 3\ncolour = red\n");
    let o = nlcbs(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(64));
    assert!(
        stderr(&o).contains("unknown keys: length, colour"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn conservation_scenario_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let o = nlcbs(&[
        "--scenario",
        "conservation",
        "--check",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read_json(&out_dir.join("summary.json"));
    for key in [
        "particle_residual_max",
        "energy_residual_max",
        "reversibility_residual_max",
    ] {
        let v = s[key].as_f64().unwrap();
        assert!(v < 1e-8, "{key} = {v}");
    }
    assert!(s["convergence"].is_object());
    let csv = std::fs::read_to_string(out_dir.join("conservation_grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
    assert!(csv.starts_with("E1 [E_i],E2 [E_i],"));
}

fn checksums(manifest: &Value) -> Vec<(String, String)> {
    manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["name"].as_str().unwrap().to_string(),
                f["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = fig9a\nb = 4\nne = 40\nalpha = 0.05\nbeta = 0.5\n",
    );
    let mut sums = Vec::new();
    for threads in ["1", "2", "2"] {
        let out_dir = dir.path().join(format!("out{}", sums.len()));
        let o = nlcbs(&[
            "--config",
            &cfg,
            "--threads",
            threads,
            "--output-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        sums.push(checksums(&read_json(&out_dir.join("manifest.json"))));
    }
    assert_eq!(sums[0].len(), 2);
    assert_eq!(sums[0], sums[1]);
    assert_eq!(sums[1], sums[2]);
}

#[test]
fn solver_failure_is_declared_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = fig9a\nb = 4\nne = 40\nalpha = 0.05\nbeta = 0.5\nmax_iters = 1\n",
    );
    let out_dir = dir.path().join("out");
    let o = nlcbs(&["--config", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = read_json(&out_dir.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert!(m["reason"].as_str().unwrap().contains("did not converge"));
    assert!(m["files"].as_array().unwrap().is_empty());
}
