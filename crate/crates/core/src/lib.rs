//! Scattered-pilot phase noise estimation for OFDM.
//!
//! The crate covers the whole chain: Wiener phase noise and its spectral
//! vector, the constant-modulus spectral geometry, reduced-dimension models,
//! a coded 16-QAM OFDM link, five pilot-only estimators (unconstrained,
//! normalized and geometry-constrained least squares, CPE-only and CPE
//! interpolation), the dual SDP behind the constrained estimator, numerical
//! checks of the S-procedure duality argument, and a config-driven
//! Monte-Carlo harness.

pub mod error;
pub mod experiments;
pub mod spectral;
pub mod phase_noise;
pub mod dimred;
pub mod sdp;
pub mod link;
pub mod estimators;
pub mod sproc;

pub use error::{Error, Result};
