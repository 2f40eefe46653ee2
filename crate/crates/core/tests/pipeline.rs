use std::fs;

use polyregion::data::{load_dataset, write_dataset, DataFormat};
use polyregion::pipeline::{cmd_run, run_pipeline, simulate_dataset, Method, RunConfig};

fn config(eval: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.horizons = 2;
    c.simulate.eval_len = eval;
    c.methods = vec![Method::P1, Method::Pinf, Method::Hull, Method::Mpi];
    c.scenarios = 150;
    c.volume_samples = Some(3000);
    c.volume_stride = 7;
    c
}

#[test]
fn dataset_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    for format in [DataFormat::Wide, DataFormat::Long] {
        let mut c = config(50);
        c.format = format;
        let d = simulate_dataset(&c).unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&d, fs::File::create(&path).unwrap(), format).unwrap();
        let back = load_dataset(&path, c.spec().unwrap(), format, c.train).unwrap();
        assert_eq!(back.frames().len(), d.frames().len());
        for (a, b) in d.frames().iter().zip(back.frames()) {
            assert_eq!(a.t, b.t);
            for (x, y) in a.forecast.iter().zip(&b.forecast) {
                assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in a.measurement.as_ref().unwrap().iter().zip(b.measurement.as_ref().unwrap()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn simulation_is_reproducible() {
    let mut c = config(30);
    c.seed = 7;
    assert_eq!(simulate_dataset(&c).unwrap(), simulate_dataset(&c).unwrap());
    let mut other = c.clone();
    other.seed = 8;
    assert_ne!(simulate_dataset(&c).unwrap(), simulate_dataset(&other).unwrap());
}

#[test]
fn no_lookahead() {
    let c = config(80);
    let d = simulate_dataset(&c).unwrap();
    let full = run_pipeline(&d, &c, None).unwrap();
    let short = run_pipeline(&d.truncated(c.train + 40), &c, None).unwrap();
    assert_eq!(short.steps.len(), 40);
    assert_eq!(short.steps[..], full.steps[..40]);
}

#[test]
fn thread_count_does_not_change_results() {
    let mut c = config(40);
    let d = simulate_dataset(&c).unwrap();
    c.jobs = Some(1);
    let one = run_pipeline(&d, &c, None).unwrap();
    c.jobs = Some(4);
    assert_eq!(one, run_pipeline(&d, &c, None).unwrap());
}

#[test]
fn norm_volumes_are_nested_in_alpha() {
    let c = config(40);
    let d = simulate_dataset(&c).unwrap();
    let r = run_pipeline(&d, &c, None).unwrap();
    for step in r.steps.iter().filter(|s| !s.volumes.is_empty()) {
        for method in ["p1", "pinf", "mpi"] {
            let v: Vec<f64> = step.volumes.iter().filter(|v| v.region == method).map(|v| v.volume).collect();
            assert_eq!(v.len(), c.alphas.len());
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{method} at t={}: {v:?}", step.t);
        }
    }
}

#[test]
fn cmd_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(60);
    c.data = Some(dir.path().join("data.csv"));
    c.output = dir.path().join("out");
    let d = simulate_dataset(&c).unwrap();
    write_dataset(&d, fs::File::create(c.data.as_ref().unwrap()).unwrap(), c.format).unwrap();
    let out = cmd_run(&c).unwrap();

    let coverage = fs::read_to_string(&out.coverage).unwrap();
    let mut lines = coverage.lines();
    assert_eq!(lines.next(), Some("method,alpha,coverage,deviation"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.starts_with("p1,")).count(), 19);
    assert_eq!(rows.iter().filter(|l| l.starts_with("hull,")).count(), 1);
    assert!(rows.iter().any(|l| l.starts_with("hull,,")));

    let volumes = fs::read_to_string(&out.volumes).unwrap();
    assert!(volumes.starts_with("method,t,alpha,volume,stderr"));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out.summary).unwrap()).unwrap();
    assert_eq!(summary["dimension"], 2);
    assert_eq!(summary["evaluated_steps"], 60);
    assert_eq!(summary["complete"], true);
    assert!(!dir.path().join("out/failure.json").exists());
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(10);
    c.data = Some(dir.path().join("absent.csv"));
    c.output = dir.path().join("out");
    let e = cmd_run(&c).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("absent.csv"));
}
