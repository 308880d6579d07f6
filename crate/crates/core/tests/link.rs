use std::path::Path;

use pnest::dimred::ModelKind;
use pnest::estimators::EstimatorKind::{self, Cis, Cpe, Genie, Gls, Nls, Uls};
use pnest::experiments::{frame_seed, preset, run_link, run_scenario, FrameOptions, FrameProcessor};
use pnest::link::LinkConfig;

fn small(snr_db: f64, rho: f64) -> LinkConfig {
    LinkConfig { n_sub: 64, snr_db, rho, ..LinkConfig::default() }
}

fn mean_err(proc: &FrameProcessor, kind: EstimatorKind, frames: usize) -> f64 {
    let reports = proc.run_frames(frames, 77, FrameOptions { decode: false, keep_estimates: false }).unwrap();
    let v: Vec<f64> = reports
        .iter()
        .flat_map(|f| f.symbols.iter().map(move |s| s.record(kind).unwrap().delta_sq_err))
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn genie_is_error_free_without_phase_noise() {
    let run = run_link(&small(40.0, 0.0), ModelKind::Ppt, 4, &[Genie, Uls], 20, 3).unwrap();
    assert_eq!(run.record(Genie).unwrap().bit_errors, 0);
    assert_eq!(run.record(Uls).unwrap().bit_errors, 0);
}

#[test]
fn ber_falls_with_snr() {
    let lo = run_link(&small(10.0, 0.02), ModelKind::Ppt, 4, &[Uls], 40, 5).unwrap();
    let hi = run_link(&small(25.0, 0.02), ModelKind::Ppt, 4, &[Uls], 40, 5).unwrap();
    assert!(hi.record(Uls).unwrap().ber < lo.record(Uls).unwrap().ber);
}

#[test]
fn constrained_estimates_are_closer() {
    let proc = FrameProcessor::new(small(30.0, 0.02), ModelKind::Ppt, 4, &[Uls, Nls, Gls, Cpe, Cis]).unwrap();
    let e: Vec<f64> = [Uls, Nls, Gls, Cpe].iter().map(|&k| mean_err(&proc, k, 30)).collect();
    assert!(e[2] < e[1] && e[1] < e[0], "{e:?}");
    assert!(e[1] < e[3], "{e:?}");
}

#[test]
fn runs_are_reproducible() {
    let a = run_link(&small(20.0, 0.02), ModelKind::Lft, 4, &[Uls, Cis], 8, 11).unwrap();
    let b = run_link(&small(20.0, 0.02), ModelKind::Lft, 4, &[Uls, Cis], 8, 11).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(frame_seed(11, 5), 11 ^ 5);
}

fn render_to(dir: &Path) -> String {
    let mut cfg = preset("fig2-desk").unwrap();
    cfg.n_sub = 64;
    cfg.dim = 4;
    cfg.trials = 3;
    cfg.snr_db = vec![20.0];
    cfg.estimators = vec![Uls, Cpe];
    let files = run_scenario(&cfg, dir).unwrap();
    std::fs::read_to_string(&files[0]).unwrap()
}

#[test]
fn scenario_csv_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = render_to(a.path());
    assert_eq!(x, render_to(b.path()));
    assert!(x.lines().any(|l| l.starts_with("# config_sha256")));
    assert!(x.lines().any(|l| l.starts_with("snr_db,estimator")));
}
