use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polyregion(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyregion"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--data", "data.csv", "--set", "simulate.eval=120"];
    args.extend_from_slice(extra);
    let o = polyregion(&args, dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seed", "7"]);
    let first = fs::read(dir.path().join("data.csv")).unwrap();
    simulate(dir.path(), &["--seed", "7"]);
    assert_eq!(first, fs::read(dir.path().join("data.csv")).unwrap());
    simulate(dir.path(), &["--seed", "8"]);
    assert_ne!(first, fs::read(dir.path().join("data.csv")).unwrap());
}

#[test]
fn run_writes_nineteen_levels_per_norm_method() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &[]);
    let o = polyregion(
        &["run", "--data", "data.csv", "--methods", "p1,mpi", "--scenarios", "100", "-o", "out", "--set", "volume.samples=2000"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let coverage = fs::read_to_string(dir.path().join("out/coverage.csv")).unwrap();
    assert_eq!(coverage.lines().filter(|l| l.starts_with("p1,")).count(), 19);
    assert_eq!(coverage.lines().filter(|l| l.starts_with("mpi,")).count(), 19);
    assert!(dir.path().join("out/volumes.csv").exists());
    assert!(dir.path().join("out/summary.json").exists());
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &[]);
    fs::write(dir.path().join("run.conf"), "data = data.csv\nmethods = pinf\nalphas = 0.5, 0.9\noutput = out\n").unwrap();
    let o = polyregion(&["run", "-c", "run.conf", "--alphas", "0.8"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let coverage = fs::read_to_string(dir.path().join("out/coverage.csv")).unwrap();
    let rows: Vec<&str> = coverage.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("pinf,0.8,"));
}

#[test]
fn hull_above_cap_exits_one_with_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyregion(&["run", "--horizons", "12", "--methods", "hull", "-o", "out"], dir.path());
    assert_eq!(code(&o), 1);
    let failure: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/failure.json")).unwrap()).unwrap();
    assert_eq!(failure["kind"], "hull_dimension_cap");
    assert_eq!(failure["dimension"], 12);
    assert_eq!(failure["max_dimension"], 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&polyregion(&["run", "--data", "missing.csv", "-o", "out"], dir.path())), 2);
    assert_eq!(code(&polyregion(&["run", "--set", "nonsense=1"], dir.path())), 1);
    assert_eq!(code(&polyregion(&["run", "--alphas", "1.5", "--data", "x.csv"], dir.path())), 1);
    assert_eq!(code(&polyregion(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&polyregion(&["--help"], dir.path())), 0);
}

#[test]
fn check_reports_zero_findings_on_clean_data() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &[]);
    let o = polyregion(&["check", "--data", "data.csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("0 findings"));
}

#[test]
fn hull_and_volume_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "x_1,x_2\n0,0\n1,0\n1,1\n0,1\n0.5,0.5\n").unwrap();
    let o = polyregion(&["hull", "s.csv", "--no-trim", "-o", "hull.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hull: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("hull.json")).unwrap()).unwrap();
    assert_eq!(hull["vertices"].as_array().unwrap().len(), 4);
    assert_eq!(hull["points"], 5);
    assert!((hull["volume"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let o = polyregion(&["volume", "hull.json", "--samples", "1000"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["volume"].as_f64().unwrap(), 1.0);

    fs::write(dir.path().join("box.json"), r#"{"alpha":0.9,"lower":[0.25,0.25],"upper":[0.75,0.75]}"#).unwrap();
    let o = polyregion(&["volume", "box.json", "--samples", "20000", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let (vol, se) = (v["volume"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((vol - 0.25).abs() < 4.0 * se);
    assert_eq!(v["unclipped_volume"].as_f64().unwrap(), 0.25);
}
