//! Per-frame estimation and the link-level Monte-Carlo loop.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dimred::{build_model, ModelKind};
use crate::error::Result;
use crate::estimators::{
    build_ls_system, cis, cpe_estimate, cpe_only, gls, nls_from, uls, CisNeighbor, Diagnostics, EstimatorContext,
    EstimatorKind, EstimatorOutput, LsSystem,
};
use crate::link::{Link, LinkConfig};
use crate::phase_noise::phase_from_spectrum;

use super::stats::ber_interval;

type CVector = DVector<Complex64>;

/// Seed of frame `index` under master seed `master`.
pub fn frame_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

pub const SEED_RULE: &str = "frame_seed = master_seed XOR frame_index";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOptions {
    /// Run the demapper and decoder and count bit errors.
    pub decode: bool,
    /// Keep `delta_hat` and the implied phase for every estimate.
    pub keep_estimates: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { decode: true, keep_estimates: false }
    }
}

/// One estimator applied to one OFDM symbol.
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    pub kind: EstimatorKind,
    pub bit_errors: u64,
    pub bits: u64,
    /// `||gamma_hat - T^H delta||^2`.
    pub gamma_sq_err: f64,
    /// `||delta_hat - delta||^2`.
    pub delta_sq_err: f64,
    /// LS cost of `gamma_hat`, NaN when no LS system was available.
    pub cost: f64,
    pub geometry_residual: f64,
    /// Set when the estimator failed and another one's output was used.
    pub fallback: Option<Fallback>,
    pub unwrap_flag: bool,
    pub delta_hat: Option<CVector>,
    pub theta_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fallback {
    pub used: EstimatorKind,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SymbolReport {
    pub theta: Vec<f64>,
    pub delta: CVector,
    pub records: Vec<EstimateRecord>,
}

impl SymbolReport {
    pub fn record(&self, kind: EstimatorKind) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.kind == kind)
    }
}

#[derive(Debug, Clone)]
pub struct FrameReport {
    pub index: u64,
    pub seed: u64,
    pub symbols: Vec<SymbolReport>,
}

impl FrameReport {
    pub fn bit_errors(&self, kind: EstimatorKind) -> u64 {
        self.symbols.iter().filter_map(|s| s.record(kind)).map(|r| r.bit_errors).sum()
    }

    pub fn fallback_count(&self, kind: EstimatorKind) -> usize {
        self.symbols.iter().filter_map(|s| s.record(kind)).filter(|r| r.fallback.is_some()).count()
    }
}

/// A link plus the estimators for one transform.
pub struct FrameProcessor {
    pub link: Link,
    pub ctx: EstimatorContext,
    pub estimators: Vec<EstimatorKind>,
}

impl FrameProcessor {
    pub fn new(cfg: LinkConfig, transform: ModelKind, dim: usize, estimators: &[EstimatorKind]) -> Result<Self> {
        let link = Link::new(cfg, dim)?;
        let model = build_model(transform, link.cfg.n_sub, dim)?;
        let ctx = EstimatorContext::new(model)?;
        Ok(Self { link, ctx, estimators: estimators.to_vec() })
    }

    pub fn transform(&self) -> ModelKind {
        self.ctx.model.kind
    }

    pub fn process_frame(&self, index: u64, seed: u64, opts: FrameOptions) -> Result<FrameReport> {
        let link = &self.link;
        let frame = link.generate_frame(seed)?;
        let pilots = &link.pilots.indices;
        let w_p = link.pilot_products(&frame.channel_rx);
        let cpes: Vec<Option<Complex64>> =
            frame.symbols.iter().map(|s| cpe_estimate(&s.received, pilots, &w_p).ok()).collect();

        let mut symbols = Vec::with_capacity(frame.symbols.len());
        for (t, sym) in frame.symbols.iter().enumerate() {
            let delta = sym.delta.values.clone();
            let gamma_true = self.ctx.model.project(&delta)?;
            let need_ls = self.estimators.iter().any(|k| k.uses_ls());
            let sys: Option<std::result::Result<LsSystem, String>> = need_ls
                .then(|| build_ls_system(&sym.received, pilots, &w_p, &self.ctx.model).map_err(|e| e.to_string()));
            let uls_out: Option<std::result::Result<EstimatorOutput, String>> = sys.as_ref().map(|s| match s {
                Ok(sys) => uls(&self.ctx, sys).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            });

            let neighbor = if t + 1 < cpes.len() {
                cpes[t + 1].map(CisNeighbor::Next)
            } else if t > 0 {
                cpes[t - 1].map(CisNeighbor::Previous)
            } else {
                None
            };

            let mut records = Vec::with_capacity(self.estimators.len());
            for &kind in &self.estimators {
                let primary: std::result::Result<EstimatorOutput, String> = match kind {
                    EstimatorKind::Uls => uls_out.clone().unwrap(),
                    EstimatorKind::Nls => match (&sys, &uls_out) {
                        (Some(Ok(s)), Some(Ok(ls))) => Ok(nls_from(&self.ctx, s, ls)),
                        (_, Some(Err(e))) => Err(e.clone()),
                        _ => unreachable!(),
                    },
                    EstimatorKind::Gls => match &sys {
                        Some(Ok(s)) => gls(&self.ctx, s).map_err(|e| e.to_string()),
                        Some(Err(e)) => Err(e.clone()),
                        None => unreachable!(),
                    },
                    EstimatorKind::Cpe => cpe_only(&self.ctx, &sym.received, pilots, &w_p).map_err(|e| e.to_string()),
                    EstimatorKind::Cis => match cpes[t] {
                        Some(c) => cis(&self.ctx, c, neighbor).map(|o| o.output).map_err(|e| e.to_string()),
                        None => Err("no CPE anchor".into()),
                    },
                    EstimatorKind::Genie => self
                        .ctx
                        .from_delta(EstimatorKind::Genie, delta.clone(), Diagnostics::default())
                        .map_err(|e| e.to_string()),
                    EstimatorKind::None => {
                        let mut e0 = CVector::from_element(delta.len(), Complex64::new(0.0, 0.0));
                        e0[0] = Complex64::new(1.0, 0.0);
                        self.ctx.from_delta(EstimatorKind::None, e0, Diagnostics::default()).map_err(|e| e.to_string())
                    }
                };
                let (out, fallback) = match primary {
                    Ok(o) => (o, None),
                    Err(reason) => self.fallback(kind, reason, &sys, &uls_out, &sym.received, &w_p)?,
                };
                let cost = match &sys {
                    Some(Ok(s)) => s.cost(&out.gamma_hat),
                    _ => f64::NAN,
                };
                let (bit_errors, bits) = if opts.decode {
                    let decoded = link.demodulate(sym, &frame.channel_rx, out.delta_hat.as_slice());
                    let errs = decoded.iter().zip(&sym.info_bits).filter(|(a, b)| a != b).count() as u64;
                    (errs, sym.info_bits.len() as u64)
                } else {
                    (0, 0)
                };
                let theta_hat =
                    opts.keep_estimates.then(|| phase_from_spectrum(&self.ctx.dft, out.delta_hat.as_slice()));
                records.push(EstimateRecord {
                    kind,
                    bit_errors,
                    bits,
                    gamma_sq_err: (&out.gamma_hat - &gamma_true).norm_squared(),
                    delta_sq_err: (&out.delta_hat.values - &delta).norm_squared(),
                    cost,
                    geometry_residual: out.diagnostics.geometry_residual,
                    fallback,
                    unwrap_flag: out.diagnostics.unwrap_flag,
                    delta_hat: opts.keep_estimates.then(|| out.delta_hat.values.clone()),
                    theta_hat,
                });
            }
            symbols.push(SymbolReport { theta: sym.theta.clone(), delta, records });
        }
        Ok(FrameReport { index, seed, symbols })
    }

    /// GLS falls back to NLS; everything else (and a failing NLS) falls back
    /// to CPE-only compensation.
    fn fallback(
        &self,
        kind: EstimatorKind,
        reason: String,
        sys: &Option<std::result::Result<LsSystem, String>>,
        uls_out: &Option<std::result::Result<EstimatorOutput, String>>,
        r: &[Complex64],
        w_p: &[Complex64],
    ) -> Result<(EstimatorOutput, Option<Fallback>)> {
        if kind == EstimatorKind::Gls {
            if let (Some(Ok(s)), Some(Ok(ls))) = (sys, uls_out) {
                let out = nls_from(&self.ctx, s, ls);
                return Ok((out, Some(Fallback { used: EstimatorKind::Nls, reason })));
            }
        }
        let out = cpe_only(&self.ctx, r, &self.link.pilots.indices, w_p)?;
        Ok((out, Some(Fallback { used: EstimatorKind::Cpe, reason })))
    }

    /// Processes frames `0..n_frames` in parallel; the reports come back in
    /// frame order.
    pub fn run_frames(&self, n_frames: usize, master_seed: u64, opts: FrameOptions) -> Result<Vec<FrameReport>> {
        (0..n_frames as u64)
            .into_par_iter()
            .map(|i| self.process_frame(i, frame_seed(master_seed, i), opts))
            .collect()
    }
}

/// Coded BER of one estimator at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub estimator: EstimatorKind,
    pub transform: ModelKind,
    pub frames: usize,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Symbols whose estimate came from a fallback.
    pub fallback_symbols: usize,
}

#[derive(Debug, Clone)]
pub struct LinkRun {
    pub snr_db: f64,
    pub transform: ModelKind,
    pub records: Vec<BerRecord>,
    pub frames: Vec<FrameReport>,
}

impl LinkRun {
    pub fn record(&self, kind: EstimatorKind) -> Option<&BerRecord> {
        self.records.iter().find(|r| r.estimator == kind)
    }

    /// Per-frame BER of `kind`, in frame order.
    pub fn frame_ber(&self, kind: EstimatorKind) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| {
                let bits: u64 = f.symbols.iter().filter_map(|s| s.record(kind)).map(|r| r.bits).sum();
                f.bit_errors(kind) as f64 / bits.max(1) as f64
            })
            .collect()
    }
}

/// Runs `n_frames` frames at `cfg.snr_db` and summarizes the coded BER of
/// every estimator. Deterministic in `master_seed`.
pub fn run_link(
    cfg: &LinkConfig,
    transform: ModelKind,
    dim: usize,
    estimators: &[EstimatorKind],
    n_frames: usize,
    master_seed: u64,
) -> Result<LinkRun> {
    let proc = FrameProcessor::new(cfg.clone(), transform, dim, estimators)?;
    let frames = proc.run_frames(n_frames, master_seed, FrameOptions::default())?;
    let bits_per_frame = (proc.link.info_bits_per_symbol * cfg.symbols_per_frame) as u64;
    let records = estimators
        .iter()
        .map(|&kind| {
            let errs: Vec<u64> = frames.iter().map(|f| f.bit_errors(kind)).collect();
            let (ber, lo, hi) = ber_interval(&errs, bits_per_frame);
            BerRecord {
                snr_db: cfg.snr_db,
                estimator: kind,
                transform,
                frames: frames.len(),
                bits: bits_per_frame * frames.len() as u64,
                bit_errors: errs.iter().sum(),
                ber,
                ci95_low: lo,
                ci95_high: hi,
                fallback_symbols: frames.iter().map(|f| f.fallback_count(kind)).sum(),
            }
        })
        .collect();
    Ok(LinkRun { snr_db: cfg.snr_db, transform, records, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LinkConfig {
        LinkConfig { n_sub: 64, ..LinkConfig::default() }
    }

    #[test]
    fn reports_are_deterministic_and_ordered() {
        let est = [EstimatorKind::Uls, EstimatorKind::Cpe];
        let a = run_link(&small(), ModelKind::Ppt, 4, &est, 6, 11).unwrap();
        let b = run_link(&small(), ModelKind::Ppt, 4, &est, 6, 11).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.frames.iter().enumerate().all(|(i, f)| f.index == i as u64 && f.seed == 11 ^ i as u64));
    }

    #[test]
    fn genie_without_noise_or_phase_noise_is_error_free() {
        let cfg = LinkConfig { rho: 0.0, snr_db: f64::INFINITY, ..small() };
        let run = run_link(&cfg, ModelKind::Ppt, 4, &[EstimatorKind::Genie], 4, 3).unwrap();
        assert_eq!(run.records[0].bit_errors, 0);
        assert!(run.frames[0].symbols[0].records[0].delta_sq_err < 1e-24);
    }

    #[test]
    fn gls_on_lft_falls_back_to_nls() {
        let proc = FrameProcessor::new(small(), ModelKind::Lft, 4, &[EstimatorKind::Gls, EstimatorKind::Nls]).unwrap();
        let f = proc.process_frame(0, 5, FrameOptions::default()).unwrap();
        let s = &f.symbols[0];
        let g = s.record(EstimatorKind::Gls).unwrap();
        assert_eq!(g.fallback.as_ref().unwrap().used, EstimatorKind::Nls);
        assert_eq!(g.bit_errors, s.record(EstimatorKind::Nls).unwrap().bit_errors);
    }
}
