use std::fs;
use std::path::Path;
use std::time::Instant;

use gfrg::config::ExperimentConfig;
use gfrg::generate::GeneratorKind;
use gfrg::pipeline::{report, run_pipeline, run_until, Stage};
use gfrg::Error;

fn small(kind: GeneratorKind, n: usize, m: usize, seed: u64, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { n, m, seed, out: out.to_path_buf(), ..Default::default() };
    c.generator.kind = kind;
    c.audits.lipschitz_pairs = 40;
    c.audits.stokes_triangles = 10;
    c.audits.density_balls = 20;
    c.sampling.base_samples = 64;
    c.sampling.inductive_samples = 64;
    c
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn zero_field_runs_fast_with_trivial_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let rep = run_pipeline(&small(GeneratorKind::Zero, 3, 17, 0, tmp.path())).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0, "{:?}", t.elapsed());
    assert_eq!(rep.exit_code(), 0, "{:?}", rep.failures);
    for row in &rep.constants {
        assert!(row.value.is_none_or(|v| v == 0.0), "{row:?}");
    }
    assert!(!tmp.path().join("failures.json").exists());
    let (back, table) = report(tmp.path()).unwrap();
    assert_eq!(back.constants, rep.constants);
    assert!(table.lines().count() == rep.constants.len() + 1);
}

#[test]
fn flat_field_is_gauged_away() {
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_pipeline(&small(GeneratorKind::PureGauge, 2, 17, 0, tmp.path())).unwrap();
    assert_eq!(rep.exit_code(), 0, "{:?} {:?}", rep.failures, rep.checks);
    assert!(!rep.flat.is_empty());
    assert!(rep.flat.iter().all(|f| f.link <= 1e-6), "{:?}", rep.flat);
}

#[test]
fn report_requires_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(report(tmp.path()), Err(Error::MissingArtifacts(_))));
}

#[test]
fn corrupted_field_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&small(GeneratorKind::Zero, 2, 9, 0, tmp.path())).unwrap();
    let f = tmp.path().join("connection.gfrg");
    let bytes = fs::read(&f).unwrap();
    fs::write(&f, &bytes[..bytes.len() - 7]).unwrap();
    match report(tmp.path()) {
        Err(Error::Decode(msg)) => assert!(msg.contains("connection.gfrg") || msg.contains("truncated"), "{msg}"),
        other => panic!("expected decode error, got {other:?}"),
    }
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(GeneratorKind::PureGauge, 2, 17, 3, tmp.path());
    run_pipeline(&cfg).unwrap();
    let first = artifacts(tmp.path());
    run_pipeline(&cfg).unwrap();
    assert_eq!(first, artifacts(tmp.path()));
}

#[test]
fn changing_seed_keeps_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let verdicts = |seed: u64| {
        let rep = run_pipeline(&small(GeneratorKind::PureGauge, 2, 17, seed, &tmp.path().join(seed.to_string()))).unwrap();
        (rep.exit_code(), rep.checks.iter().map(|c| (c.name.clone(), c.pass)).collect::<Vec<_>>())
    };
    assert_eq!(verdicts(1), verdicts(2));
}

#[test]
fn staged_run_stops_early() {
    let tmp = tempfile::tempdir().unwrap();
    let rep = run_until(&small(GeneratorKind::RandomSmooth, 2, 17, 0, tmp.path()), Stage::Stratify).unwrap();
    assert!(rep.coulomb.is_none());
    assert!(rep.gauges.is_empty());
    assert!(!rep.stratification.is_empty());
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(GeneratorKind::Zero, 2, 9, 0, tmp.path());
    c.m_max = 0;
    assert!(matches!(run_pipeline(&c), Err(Error::InvalidInput(_))));
}
