//! Monte-Carlo studies, configuration and CSV artifacts.

pub mod config;
pub mod scenarios;
pub mod sim;
pub mod stats;
pub mod verify;

pub use config::{preset, ExperimentConfig, Study, SCENARIOS};
pub use scenarios::{render, run_scenario};
pub use sim::{frame_seed, run_link, BerRecord, FrameOptions, FrameProcessor, FrameReport, LinkRun, SEED_RULE};
pub use verify::{verify, VerifyOptions, VerifyReport};
