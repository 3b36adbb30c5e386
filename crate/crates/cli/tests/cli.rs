//! End-to-end runs of the `rbdsde` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn rbdsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbdsde")).args(args).output().expect("binary runs")
}

fn run(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    rbdsde(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solution_rows(out: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(out.join("solution.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn constant_barrier_without_drivers_gives_constant_y() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("decoupled", &configs().join("decoupled_constant.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("solution.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["b_path", "time_index", "node_id", "Y", "Y_plus", "Z1", "U1", "K", "K_d", "C", "xi", "xi_plus"]
    );
    let rows = solution_rows(dir.path());
    assert!(!rows.is_empty());
    for row in &rows {
        assert_eq!(&row[3], "1.5");
        assert_eq!(&row[4], "1.5");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn picard_without_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("picard_lipschitz.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("beta");
    let cfg = dir.path().join("no_beta.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run("picard", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
    // the flag supplies the missing value
    let o = run("picard", &cfg, &dir.path().join("out"), &["--beta", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn picard_example_converges_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("picard", &configs().join("picard_lipschitz.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["iter", "bundle_diff", "ratio"]);
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert!(rows.len() > 2);
    assert_eq!(&rows[0][2], "");
    let norms: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("norms.json")).unwrap()).unwrap();
    assert!(norms["bundle"].as_f64().unwrap() > 0.0);
}

#[test]
fn minimal_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("minimal", &configs().join("minimal_quadratic.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn american_example_matches_hand_price() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("price_american", &configs().join("american_two_period.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let oracle = report.as_array().unwrap().iter().find(|r| r["name"] == "american_oracle").unwrap();
    assert!((oracle["metrics"]["price"].as_f64().unwrap() - 1.36).abs() < 1e-12);
}

#[test]
fn refinement_of_fixed_factors_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("price_american", &configs().join("american_two_period.json"), dir.path(), &["--refine", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("american.stock"), "{}", stderr(&o));
    let o = run("price_american", &configs().join("american_crr.json"), dir.path(), &["--refine", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"lattice": {"n_steps": "three", "horizon": 1.0}}"#).unwrap();
    let o = run("decoupled", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lattice.n_steps"), "{}", stderr(&o));
    std::fs::write(&cfg, r#"{"lattice": {"n_steps": 2, "horizon": 1.0}, "drivers": {"f": {"kind": "abs_y"}}, "barrier": {"shape": "constant", "c": 0.0}}"#).unwrap();
    let o = run("decoupled", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("drivers.f"), "{}", stderr(&o));
}

#[test]
fn failing_checks_exit_one() {
    // two sweeps cannot reach the tolerance, so the convergence check fails
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("loose.json");
    let text = std::fs::read_to_string(configs().join("picard_lipschitz.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["max_iter"] = 2.into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run("picard", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
