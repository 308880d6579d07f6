//! Browser bindings for three interactive views: one phase-noise
//! realization with its estimates, the histogram of the LS phase error, and
//! the duality gap of a small geometry-constrained LS problem.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page can show them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use pnest::dimred::ModelKind;
use pnest::estimators::{error_decomposition, EstimatorKind};
use pnest::experiments::stats::{freedman_diaconis, median};
use pnest::experiments::{FrameOptions, FrameProcessor};
use pnest::link::LinkConfig;
use pnest::sproc::{arbitrary_instance, duality_gap_for, ls_instance};

fn to_json<T: Serialize>(r: pnest::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

fn demo_link(n_sub: usize, rho: f64, snr_db: f64) -> LinkConfig {
    LinkConfig { n_sub, rho, snr_db, ..LinkConfig::default() }
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub label: String,
    pub theta_hat: Vec<f64>,
    pub sq_error: f64,
}

#[derive(Debug, Serialize)]
pub struct RealizationView {
    pub theta: Vec<f64>,
    pub traces: Vec<Trace>,
}

/// True phase of the first data symbol and the phase implied by each
/// estimate, under both transforms.
pub fn realization(n_sub: usize, dim: usize, rho: f64, snr_db: f64, seed: u64) -> pnest::Result<RealizationView> {
    use EstimatorKind::*;
    let opts = FrameOptions { decode: false, keep_estimates: true };
    let mut theta = Vec::new();
    let mut traces = Vec::new();
    for (t, est) in [(ModelKind::Ppt, vec![Uls, Nls, Gls, Cis]), (ModelKind::Lft, vec![Uls])] {
        let proc = FrameProcessor::new(demo_link(n_sub, rho, snr_db), t, dim, &est)?;
        let frame = proc.process_frame(0, seed, opts)?;
        let sym = &frame.symbols[0];
        theta = sym.theta.clone();
        for r in &sym.records {
            let th = r.theta_hat.clone().unwrap_or_default();
            let shift = match (th.first(), theta.first()) {
                (Some(a), Some(b)) => 2.0 * std::f64::consts::PI * ((b - a) / (2.0 * std::f64::consts::PI)).round(),
                _ => 0.0,
            };
            let label = if r.kind == Cis { "cis".to_string() } else { format!("{} ({t})", r.kind) };
            traces.push(Trace { label, theta_hat: th.iter().map(|x| x + shift).collect(), sq_error: r.delta_sq_err });
        }
    }
    Ok(RealizationView { theta, traces })
}

#[derive(Debug, Serialize)]
pub struct HistogramView {
    pub transform: String,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub median_abs: f64,
    pub samples: usize,
}

/// Histogram of the per-sample phase error of the ULS estimate.
pub fn omega(n_sub: usize, dim: usize, rho: f64, snr_db: f64, frames: usize, seed: u64, transform: &str) -> pnest::Result<HistogramView> {
    let t: ModelKind = transform.parse()?;
    let proc = FrameProcessor::new(demo_link(n_sub, rho, snr_db), t, dim, &[EstimatorKind::Uls])?;
    let reports = proc.run_frames(frames.max(1), seed, FrameOptions { decode: false, keep_estimates: true })?;
    let mut w = Vec::new();
    for s in reports.iter().flat_map(|f| f.symbols.iter()) {
        let dh = s.records[0].delta_hat.as_ref().expect("estimates kept");
        w.extend(error_decomposition(&proc.ctx.dft, dh.as_slice(), &s.theta)?.omega);
    }
    let h = freedman_diaconis(&w);
    let abs: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    Ok(HistogramView { transform: t.to_string(), edges: h.edges, density: h.density, median_abs: median(&abs), samples: w.len() })
}

#[derive(Debug, Serialize)]
pub struct GapView {
    pub n: usize,
    pub p_star: f64,
    pub d_star: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub status: String,
}

/// Brute-force primal optimum against the dual SDP value for one random
/// instance; `structured` draws an LS instance, otherwise `M` and `b` are
/// arbitrary.
pub fn gap(n: usize, seed: u64, structured: bool) -> pnest::Result<GapView> {
    if !(2..=5).contains(&n) {
        return Err(pnest::Error::InvalidArgument("the demo oracle handles 2 <= N <= 5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = if structured { ls_instance(n, 0.01, &mut rng)? } else { arbitrary_instance(n, &mut rng)? };
    let g = duality_gap_for(&inst)?;
    Ok(GapView {
        n,
        p_star: g.p_star,
        d_star: g.d_star,
        relative_gap: g.relative_gap,
        iterations: g.iterations,
        status: format!("{:?}", g.status),
    })
}

#[wasm_bindgen]
pub fn phase_realization(n_sub: usize, dim: usize, rho: f64, snr_db: f64, seed: u32) -> String {
    to_json(realization(n_sub, dim, rho, snr_db, seed as u64))
}

#[wasm_bindgen]
pub fn omega_histogram(n_sub: usize, dim: usize, rho: f64, snr_db: f64, frames: usize, seed: u32, transform: &str) -> String {
    to_json(omega(n_sub, dim, rho, snr_db, frames, seed as u64, transform))
}

#[wasm_bindgen]
pub fn duality_gap(n: usize, seed: u32, structured: bool) -> String {
    to_json(gap(n, seed as u64, structured))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_json_has_all_traces() {
        let v: serde_json::Value = serde_json::from_str(&phase_realization(64, 4, 0.02, 30.0, 3)).unwrap();
        assert_eq!(v["theta"].as_array().unwrap().len(), 64);
        assert_eq!(v["traces"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn omega_histogram_is_centered() {
        let h = omega(64, 4, 0.02, 30.0, 10, 1, "lft").unwrap();
        assert!(h.median_abs < 0.2, "{}", h.median_abs);
        assert_eq!(h.edges.len(), h.density.len() + 1);
    }

    #[test]
    fn gap_closes_on_ls_instances() {
        assert!(gap(3, 9, true).unwrap().relative_gap < 1e-3);
        let v: serde_json::Value = serde_json::from_str(&duality_gap(9, 1, true)).unwrap();
        assert!(v["error"].is_string());
    }
}
