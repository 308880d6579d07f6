//! Study runners and their CSV artifacts.
//!
//! Each study has a compute step returning plain data and a writer that
//! renders it. Files start with `#` metadata lines carrying the config hash
//! and seed, followed by a header row.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dimred::ModelKind;
use crate::error::{Error, Result};
use crate::estimators::{error_decomposition, EstimatorKind};
use crate::link::SNR_DEFINITION;

use super::config::{ExperimentConfig, Study};
use super::sim::{run_link, BerRecord, FrameOptions, FrameProcessor, FrameReport, SEED_RULE};
use super::stats::{freedman_diaconis, mean_ci, median, Histogram, MeanCi};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Comment header shared by every artifact.
pub fn metadata_lines(cfg: &ExperimentConfig, extra: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# pnest {VERSION}");
    let _ = writeln!(s, "# scenario={} study={}", cfg.scenario, study_id(cfg.study));
    let _ = writeln!(s, "# config_sha256={}", cfg.hash());
    let _ = writeln!(s, "# master_seed={}", cfg.seed);
    let _ = writeln!(s, "# seed_rule={SEED_RULE}");
    let _ = writeln!(s, "# trials_per_point={}", cfg.trials);
    let _ = writeln!(s, "# snr_definition={SNR_DEFINITION}");
    for e in extra {
        let _ = writeln!(s, "# {e}");
    }
    s
}

fn study_id(s: Study) -> &'static str {
    match s {
        Study::Ber => "ber",
        Study::Mse => "mse",
        Study::ErrorPdf => "error-pdf",
        Study::OmegaPdf => "omega-pdf",
        Study::Realization => "realization",
    }
}

fn csv_body(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn skipped_notes(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.transforms
        .iter()
        .filter(|&&t| cfg.estimators_for(t).len() < cfg.estimators.len())
        .map(|t| format!("skipped=gls under {t} (needs a geometry-preserving transform)"))
        .collect()
}


pub fn ber_study(cfg: &ExperimentConfig) -> Result<Vec<(f64, BerRecord)>> {
    let mut out = Vec::new();
    for &t in &cfg.transforms {
        let est = cfg.estimators_for(t);
        for &rho in &cfg.rho {
            for &snr in &cfg.snr_db {
                let run = run_link(&cfg.link_config(snr, rho), t, cfg.dim, &est, cfg.trials, cfg.seed)?;
                out.extend(run.records.into_iter().map(|r| (rho, r)));
            }
        }
    }
    Ok(out)
}

pub fn ber_csv(cfg: &ExperimentConfig, rows: &[(f64, BerRecord)]) -> Result<String> {
    let header = [
        "snr_db", "estimator", "frames", "bit_errors", "ber", "ci95_low", "ci95_high", "transform", "rho", "bits",
        "fallback_symbols",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(rho, r)| {
            vec![
                fmt(r.snr_db),
                r.estimator.to_string(),
                r.frames.to_string(),
                r.bit_errors.to_string(),
                fmt(r.ber),
                fmt(r.ci95_low),
                fmt(r.ci95_high),
                r.transform.to_string(),
                fmt(*rho),
                r.bits.to_string(),
                r.fallback_symbols.to_string(),
            ]
        })
        .collect();
    let mut extra = skipped_notes(cfg);
    extra.push("ci=normal approximation over per-frame BER; zero errors give [0, 3/bits]".into());
    Ok(metadata_lines(cfg, &extra) + &csv_body(&header, &body)?)
}


#[derive(Debug, Clone)]
pub struct MsePoint {
    pub transform: ModelKind,
    pub snr_db: f64,
    pub rho: f64,
    pub estimator: EstimatorKind,
    /// Per-symbol `||gamma_hat - gamma||^2` in frame order.
    pub gamma_sq_err: Vec<f64>,
    pub delta_sq_err: Vec<f64>,
    pub fallback_symbols: usize,
}

impl MsePoint {
    pub fn mse(&self) -> MeanCi {
        mean_ci(&self.gamma_sq_err)
    }
}

fn frames_for(cfg: &ExperimentConfig, t: ModelKind, snr: f64, rho: f64, opts: FrameOptions) -> Result<(FrameProcessor, Vec<FrameReport>)> {
    let proc = FrameProcessor::new(cfg.link_config(snr, rho), t, cfg.dim, &cfg.estimators_for(t))?;
    let frames = proc.run_frames(cfg.trials, cfg.seed, opts)?;
    Ok((proc, frames))
}

pub fn mse_study(cfg: &ExperimentConfig) -> Result<Vec<MsePoint>> {
    let opts = FrameOptions { decode: false, keep_estimates: false };
    let mut out = Vec::new();
    for &t in &cfg.transforms {
        for &snr in &cfg.snr_db {
            for &rho in &cfg.rho {
                let (proc, frames) = frames_for(cfg, t, snr, rho, opts)?;
                for &k in &proc.estimators {
                    let recs = frames.iter().flat_map(|f| f.symbols.iter().filter_map(move |s| s.record(k)));
                    let (mut g, mut d, mut fb) = (Vec::new(), Vec::new(), 0);
                    for r in recs {
                        g.push(r.gamma_sq_err);
                        d.push(r.delta_sq_err);
                        fb += usize::from(r.fallback.is_some());
                    }
                    out.push(MsePoint { transform: t, snr_db: snr, rho, estimator: k, gamma_sq_err: g, delta_sq_err: d, fallback_symbols: fb });
                }
            }
        }
    }
    Ok(out)
}

pub fn mse_csv(cfg: &ExperimentConfig, points: &[MsePoint]) -> Result<String> {
    let header = [
        "rho", "estimator", "frames", "symbols", "mse_gamma", "ci95_low", "ci95_high", "mse_delta", "transform", "snr_db",
        "fallback_symbols",
    ];
    let body: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let ci = p.mse();
            vec![
                fmt(p.rho),
                p.estimator.to_string(),
                cfg.trials.to_string(),
                ci.n.to_string(),
                fmt(ci.mean),
                fmt(ci.low),
                fmt(ci.high),
                fmt(mean_ci(&p.delta_sq_err).mean),
                p.transform.to_string(),
                fmt(p.snr_db),
                p.fallback_symbols.to_string(),
            ]
        })
        .collect();
    let mut extra = skipped_notes(cfg);
    extra.push("mse_gamma=mean over symbols of ||gamma_hat - T^H delta||^2".into());
    Ok(metadata_lines(cfg, &extra) + &csv_body(&header, &body)?)
}


#[derive(Debug, Clone)]
pub struct PdfGroup {
    pub transform: ModelKind,
    pub snr_db: f64,
    pub estimator: EstimatorKind,
    pub samples: Vec<f64>,
    pub histogram: Histogram,
}

impl PdfGroup {
    fn new(transform: ModelKind, snr_db: f64, estimator: EstimatorKind, samples: Vec<f64>) -> Self {
        let histogram = freedman_diaconis(&samples);
        Self { transform, snr_db, estimator, samples, histogram }
    }

    pub fn median_abs(&self) -> f64 {
        median(&self.samples.iter().map(|x| x.abs()).collect::<Vec<_>>())
    }
}

/// Per-symbol `||delta_hat - delta||^2` histograms.
pub fn error_pdf_study(cfg: &ExperimentConfig) -> Result<Vec<PdfGroup>> {
    let opts = FrameOptions { decode: false, keep_estimates: false };
    let mut out = Vec::new();
    for &snr in &cfg.snr_db {
        for &t in &cfg.transforms {
            let (proc, frames) = frames_for(cfg, t, snr, cfg.rho[0], opts)?;
            for &k in &proc.estimators {
                let v: Vec<f64> =
                    frames.iter().flat_map(|f| f.symbols.iter().filter_map(move |s| s.record(k))).map(|r| r.delta_sq_err).collect();
                out.push(PdfGroup::new(t, snr, k, v));
            }
        }
    }
    Ok(out)
}

/// Histograms of the per-sample phase error `omega` of each estimate.
pub fn omega_pdf_study(cfg: &ExperimentConfig) -> Result<Vec<PdfGroup>> {
    let opts = FrameOptions { decode: false, keep_estimates: true };
    let mut out = Vec::new();
    for &snr in &cfg.snr_db {
        for &t in &cfg.transforms {
            let (proc, frames) = frames_for(cfg, t, snr, cfg.rho[0], opts)?;
            for &k in &proc.estimators {
                let mut v = Vec::new();
                for s in frames.iter().flat_map(|f| f.symbols.iter()) {
                    let r = s.record(k).expect("estimator was run");
                    let dh = r.delta_hat.as_ref().expect("estimates kept");
                    v.extend(error_decomposition(&proc.ctx.dft, dh.as_slice(), &s.theta)?.omega);
                }
                out.push(PdfGroup::new(t, snr, k, v));
            }
        }
    }
    Ok(out)
}

pub fn pdf_csv(cfg: &ExperimentConfig, groups: &[PdfGroup], quantity: &str) -> Result<String> {
    let header = ["transform", "snr_db", "estimator", "bin", "bin_low", "bin_high", "count", "density"];
    let mut body = Vec::new();
    let mut extra = skipped_notes(cfg);
    extra.push(format!("quantity={quantity}; bins by the Freedman-Diaconis rule (at most {} per group)", super::stats::MAX_BINS));
    for g in groups {
        let h = &g.histogram;
        extra.push(format!(
            "group transform={} snr_db={} estimator={} samples={} bins={} median={} median_abs={} mode_center={}",
            g.transform,
            fmt(g.snr_db),
            g.estimator,
            g.samples.len(),
            h.bins(),
            fmt(median(&g.samples)),
            fmt(g.median_abs()),
            fmt(h.bin_center(h.mode_bin()))
        ));
        for i in 0..h.bins() {
            body.push(vec![
                g.transform.to_string(),
                fmt(g.snr_db),
                g.estimator.to_string(),
                i.to_string(),
                fmt(h.edges[i]),
                fmt(h.edges[i + 1]),
                h.counts[i].to_string(),
                fmt(h.density[i]),
            ]);
        }
    }
    Ok(metadata_lines(cfg, &extra) + &csv_body(&header, &body)?)
}


#[derive(Debug, Clone)]
pub struct Realization {
    /// `(frame, symbol, sample, theta)` per row.
    pub rows: Vec<(u64, usize, usize, f64)>,
    /// Column name and one value per row.
    pub columns: Vec<(String, Vec<f64>)>,
}

/// True phase and each estimator's implied phase, sample by sample. Each
/// estimated symbol trajectory is shifted by a multiple of `2 pi` to start
/// on the true phase's branch.
pub fn realization_study(cfg: &ExperimentConfig) -> Result<Realization> {
    let opts = FrameOptions { decode: false, keep_estimates: true };
    let snr = cfg.snr_db[0];
    let mut rows = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for (ti, &t) in cfg.transforms.iter().enumerate() {
        let (proc, frames) = frames_for(cfg, t, snr, cfg.rho[0], opts)?;
        for &k in &proc.estimators {
            let mut col = Vec::new();
            for f in &frames {
                for s in &f.symbols {
                    let th = s.record(k).and_then(|r| r.theta_hat.as_ref()).expect("estimates kept");
                    let shift = 2.0 * PI * ((s.theta[0] - th[0]) / (2.0 * PI)).round();
                    col.extend(th.iter().map(|x| x + shift));
                }
            }
            columns.push((format!("theta_hat_{k}_{t}"), col));
        }
        if ti == 0 {
            for f in &frames {
                for (si, s) in f.symbols.iter().enumerate() {
                    let n = s.theta.len();
                    rows.extend(s.theta.iter().enumerate().map(|(i, &th)| (f.index, si, si * n + i, th)));
                }
            }
        }
    }
    Ok(Realization { rows, columns })
}

pub fn realization_csv(cfg: &ExperimentConfig, r: &Realization) -> Result<String> {
    let mut header: Vec<&str> = vec!["frame", "symbol", "index", "theta"];
    header.extend(r.columns.iter().map(|(n, _)| n.as_str()));
    let body: Vec<Vec<String>> = r
        .rows
        .iter()
        .enumerate()
        .map(|(i, &(f, s, n, th))| {
            let mut row = vec![f.to_string(), s.to_string(), n.to_string(), fmt(th)];
            row.extend(r.columns.iter().map(|(_, c)| fmt(c[i])));
            row
        })
        .collect();
    let mut extra = skipped_notes(cfg);
    extra.push(format!("snr_db={} rho={}", fmt(cfg.snr_db[0]), fmt(cfg.rho[0])));
    Ok(metadata_lines(cfg, &extra) + &csv_body(&header, &body)?)
}


/// Renders the study's artifact without touching the filesystem.
pub fn render(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    match cfg.study {
        Study::Ber => ber_csv(cfg, &ber_study(cfg)?),
        Study::Mse => mse_csv(cfg, &mse_study(cfg)?),
        Study::ErrorPdf => pdf_csv(cfg, &error_pdf_study(cfg)?, "||delta_hat - delta||^2 per symbol"),
        Study::OmegaPdf => pdf_csv(cfg, &omega_pdf_study(cfg)?, "omega = wrap(theta + arg x_hat) per sample"),
        Study::Realization => realization_csv(cfg, &realization_study(cfg)?),
    }
}

/// Runs the configured study and writes its CSV plus `config.toml` into
/// `out_dir`. Returns the written paths.
pub fn run_scenario(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let csv = render(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let data = out_dir.join(cfg.study.output_file());
    std::fs::write(&data, csv)?;
    let echo = out_dir.join("config.toml");
    std::fs::write(&echo, metadata_lines(cfg, &[]) + &cfg.to_toml())?;
    Ok(vec![data, echo])
}
