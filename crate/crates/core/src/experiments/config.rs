//! Flat TOML experiment configuration and the built-in scenario presets.
//!
//! Every key is optional; a file names a `scenario` preset and overrides any
//! of its keys. Unknown keys are rejected.
//!
//! | key | meaning |
//! |-----|---------|
//! | `scenario` | preset id, see [`SCENARIOS`] |
//! | `study` | `ber`, `mse`, `error-pdf`, `omega-pdf` or `realization` |
//! | `n_sub` | subcarriers `N_c` |
//! | `f_sub_hz` | subcarrier spacing in Hz |
//! | `pilot_fraction` | pilots as a fraction of `N_c`, rounded |
//! | `taps` | channel taps |
//! | `coherence_bw_hz` | 50% frequency-correlation bandwidth in Hz |
//! | `symbols_per_frame` | data symbols per frame |
//! | `phase_mode` | `continuous` or `independent` phase noise across symbols |
//! | `channel_knowledge` | `genie` or `pilot-ls` |
//! | `interleaver_depth` | rows of the block interleaver |
//! | `traceback` | Viterbi traceback depth |
//! | `diffusion_factor` | Wiener step variance is `diffusion_factor * rho / N_c` |
//! | `random_initial_phase` | draw the initial phase uniformly |
//! | `estimators` | list of `uls`, `nls`, `gls`, `cpe`, `cis`, `genie`, `none` |
//! | `dim` | reduced dimension `N` |
//! | `transforms` | list of `ppt`, `lft` |
//! | `snr_db` | SNR sweep in dB |
//! | `rho` | phase-noise rate sweep |
//! | `trials` | frames per sweep point |
//! | `seed` | master seed |
//! | `out` | output directory, overridden on the command line |

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dimred::ModelKind;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::link::{ChannelKnowledge, LinkConfig, PhaseMode};
use crate::phase_noise::WienerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Ber,
    Mse,
    ErrorPdf,
    OmegaPdf,
    Realization,
}

impl Study {
    pub fn output_file(self) -> &'static str {
        match self {
            Study::Ber => "ber_vs_snr.csv",
            Study::Mse => "mse_vs_rho.csv",
            Study::ErrorPdf => "error_pdf.csv",
            Study::OmegaPdf => "omega_pdf.csv",
            Study::Realization => "realization.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub study: Study,
    pub n_sub: usize,
    pub f_sub_hz: f64,
    pub pilot_fraction: f64,
    pub taps: usize,
    pub coherence_bw_hz: f64,
    pub symbols_per_frame: usize,
    pub phase_mode: PhaseMode,
    pub channel_knowledge: ChannelKnowledge,
    pub interleaver_depth: usize,
    pub traceback: usize,
    pub diffusion_factor: f64,
    pub random_initial_phase: bool,
    pub estimators: Vec<EstimatorKind>,
    pub dim: usize,
    pub transforms: Vec<ModelKind>,
    pub snr_db: Vec<f64>,
    pub rho: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let link = LinkConfig::default();
        Self {
            scenario: "custom".into(),
            study: Study::Ber,
            n_sub: link.n_sub,
            f_sub_hz: link.f_sub_hz,
            pilot_fraction: link.pilot_fraction,
            taps: link.taps,
            coherence_bw_hz: link.coherence_bw_hz,
            symbols_per_frame: link.symbols_per_frame,
            phase_mode: link.phase_mode,
            channel_knowledge: link.channel_knowledge,
            interleaver_depth: link.interleaver_depth,
            traceback: link.traceback,
            diffusion_factor: link.wiener.diffusion_factor,
            random_initial_phase: link.wiener.random_initial_phase,
            estimators: vec![EstimatorKind::Uls, EstimatorKind::Nls, EstimatorKind::Gls, EstimatorKind::Cpe, EstimatorKind::Cis],
            dim: 8,
            transforms: vec![ModelKind::Ppt],
            snr_db: vec![30.0],
            rho: vec![link.rho],
            trials: 500,
            seed: 1,
            out: None,
        }
    }
}

pub struct Scenario {
    pub id: &'static str,
    pub description: &'static str,
}

pub const SCENARIOS: [Scenario; 6] = [
    Scenario { id: "fig1-omega", description: "PDF of the LS phase error omega at 30 dB, PPT and LFT" },
    Scenario { id: "fig2-desk", description: "coded BER vs SNR for all estimators, N_c=128, N=8, rho=0.02" },
    Scenario { id: "fig34-error-pdf", description: "PDF of ||delta_hat - delta||^2 at 30 and 10 dB" },
    Scenario { id: "fig5-desk", description: "MSE of gamma_hat vs rho at 30 dB" },
    Scenario { id: "fig6-transform-ber", description: "coded BER of ULS and NLS under PPT and LFT" },
    Scenario { id: "fig8-realization", description: "true and estimated phase noise of one frame" },
];

/// The preset for `id`.
pub fn preset(id: &str) -> Result<ExperimentConfig> {
    use EstimatorKind::*;
    let base = ExperimentConfig { scenario: id.to_string(), ..ExperimentConfig::default() };
    let cfg = match id {
        "custom" => base,
        "fig1-omega" => ExperimentConfig {
            study: Study::OmegaPdf,
            estimators: vec![Uls],
            transforms: vec![ModelKind::Ppt, ModelKind::Lft],
            trials: 200,
            ..base
        },
        "fig2-desk" => ExperimentConfig {
            study: Study::Ber,
            estimators: vec![Uls, Nls, Gls, Cpe, Cis, Genie],
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            trials: 500,
            ..base
        },
        "fig34-error-pdf" => ExperimentConfig {
            study: Study::ErrorPdf,
            estimators: vec![Uls, Nls, Gls, Cis],
            transforms: vec![ModelKind::Ppt, ModelKind::Lft],
            snr_db: vec![30.0, 10.0],
            trials: 500,
            ..base
        },
        "fig5-desk" => ExperimentConfig {
            study: Study::Mse,
            estimators: vec![Uls, Nls, Gls, Cis],
            rho: vec![0.005, 0.02, 0.1, 0.2],
            trials: 500,
            ..base
        },
        "fig6-transform-ber" => ExperimentConfig {
            study: Study::Ber,
            estimators: vec![Uls, Nls],
            transforms: vec![ModelKind::Ppt, ModelKind::Lft],
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            trials: 500,
            ..base
        },
        "fig8-realization" => ExperimentConfig {
            study: Study::Realization,
            estimators: vec![Uls, Cis],
            transforms: vec![ModelKind::Lft, ModelKind::Ppt],
            trials: 1,
            ..base
        },
        other => {
            let ids: Vec<&str> = SCENARIOS.iter().map(|s| s.id).collect();
            return Err(Error::Config(vec![format!("unknown scenario '{other}'; known: custom, {}", ids.join(", "))]));
        }
    };
    Ok(cfg)
}

impl ExperimentConfig {
    /// Parses a TOML document: the named preset with the file's keys on top.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let id = match user.get("scenario") {
            None => "custom".to_string(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::Config(vec!["scenario must be a string".into()])),
        };
        let base = preset(&id)?;
        let mut merged = match toml::Value::try_from(&base).map_err(|e| Error::Config(vec![e.to_string()]))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for (k, v) in user {
            merged.insert(k, v);
        }
        toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML echo of the resolved configuration (without `out`).
    pub fn to_toml(&self) -> String {
        let echo = Self { out: None, ..self.clone() };
        toml::to_string(&echo).expect("config serializes")
    }

    /// SHA-256 of [`Self::to_toml`], hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Link parameters at one sweep point.
    pub fn link_config(&self, snr_db: f64, rho: f64) -> LinkConfig {
        LinkConfig {
            n_sub: self.n_sub,
            f_sub_hz: self.f_sub_hz,
            pilot_fraction: self.pilot_fraction,
            snr_db,
            taps: self.taps,
            coherence_bw_hz: self.coherence_bw_hz,
            rho,
            symbols_per_frame: self.symbols_per_frame,
            wiener: WienerConfig { diffusion_factor: self.diffusion_factor, random_initial_phase: self.random_initial_phase },
            phase_mode: self.phase_mode,
            channel_knowledge: self.channel_knowledge,
            interleaver_depth: self.interleaver_depth,
            traceback: self.traceback,
        }
    }

    /// Estimators applicable under `transform`; GLS needs a PPT.
    pub fn estimators_for(&self, transform: ModelKind) -> Vec<EstimatorKind> {
        self.estimators
            .iter()
            .copied()
            .filter(|&k| !(k == EstimatorKind::Gls && transform == ModelKind::Lft))
            .collect()
    }

    /// Every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.trials == 0 {
            v.push("trials must be at least 1".to_string());
        }
        if self.estimators.is_empty() {
            v.push("estimators must not be empty".to_string());
        }
        if self.transforms.is_empty() {
            v.push("transforms must not be empty".to_string());
        }
        if self.snr_db.is_empty() {
            v.push("snr_db must list at least one value".to_string());
        }
        if self.rho.is_empty() {
            v.push("rho must list at least one value".to_string());
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            v.push("snr_db values must be numbers".to_string());
        }
        if self.rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            v.push("rho values must be finite and nonnegative".to_string());
        }
        if self.dim == 0 {
            v.push("dim must be at least 1".to_string());
        }
        if self.transforms.contains(&ModelKind::Ppt) && self.dim > 0 && self.n_sub % self.dim != 0 {
            v.push(format!("dim = {} must divide n_sub = {} for the ppt transform", self.dim, self.n_sub));
        }
        if self.estimators.contains(&EstimatorKind::Gls) && !self.transforms.contains(&ModelKind::Ppt) {
            v.push("gls needs the ppt transform in transforms".to_string());
        }
        if self.study == Study::Realization && self.trials > 16 {
            v.push("realization study writes every sample; use trials <= 16".to_string());
        }
        let snr = self.snr_db.first().copied().unwrap_or(30.0);
        let rho = self.rho.first().copied().unwrap_or(0.0);
        for msg in self.link_config(snr, rho).violations(self.dim.max(1)) {
            if !v.contains(&msg) {
                v.push(msg);
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for s in SCENARIOS.iter() {
            let cfg = preset(s.id).unwrap();
            assert!(cfg.violations().is_empty(), "{}: {:?}", s.id, cfg.violations());
        }
    }

    #[test]
    fn file_keys_override_the_preset() {
        let cfg = ExperimentConfig::from_toml_str("scenario = \"fig2-desk\"\ntrials = 7\nsnr_db = [30.0]\n").unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.snr_db, vec![30.0]);
        assert_eq!(cfg.estimators.len(), 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("trials = 3\nfrobnicate = 1\n").unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn all_violations_are_listed() {
        let cfg = ExperimentConfig { trials: 0, dim: 7, ..ExperimentConfig::default() };
        let v = cfg.violations();
        assert!(v.iter().any(|m| m.contains("trials")));
        assert!(v.iter().any(|m| m.contains("divide")));
    }

    #[test]
    fn round_trip_and_hash_are_stable() {
        let cfg = preset("fig5-desk").unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.hash(), preset("fig2-desk").unwrap().hash());
    }
}
