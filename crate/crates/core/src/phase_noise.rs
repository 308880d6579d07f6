//! Wiener phase noise and its spectral vector.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{geometry_residual, CVector, UnitaryDft};

/// Diffusion factor `4 pi`: increment variance is `4 pi rho / N_c`
/// (Lorentzian 3-dB linewidth convention).
pub const LORENTZIAN_FACTOR: f64 = 4.0 * PI;

const GEOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    /// Increment variance is `diffusion_factor * rho / samples_per_symbol`.
    pub diffusion_factor: f64,
    /// Draw the starting phase uniformly on `[-pi, pi)`; otherwise start at 0.
    pub random_initial_phase: bool,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self { diffusion_factor: LORENTZIAN_FACTOR, random_initial_phase: true }
    }
}

impl WienerConfig {
    pub fn increment_variance(&self, rho: f64, samples_per_symbol: usize) -> f64 {
        self.diffusion_factor * rho / samples_per_symbol as f64
    }
}

/// Sampled phase trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseRealization {
    pub theta: Vec<f64>,
    /// Realized Gaussian steps, `theta[k + 1] - theta[k] == increments[k]`.
    pub increments: Vec<f64>,
    pub rho: f64,
    pub seed: u64,
}

impl PhaseNoiseRealization {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Sub-trajectory for OFDM symbol `index` of `n_sub` samples.
    pub fn symbol(&self, index: usize, n_sub: usize) -> &[f64] {
        &self.theta[index * n_sub..(index + 1) * n_sub]
    }
}

/// One symbol of `n` samples with the default configuration.
pub fn wiener_realization(n: usize, rho: f64, seed: u64) -> Result<PhaseNoiseRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = wiener_trajectory(&mut rng, n, n, rho, &WienerConfig::default())?;
    r.seed = seed;
    Ok(r)
}

/// A trajectory of `len` samples whose step variance is set by the symbol
/// length `samples_per_symbol`; consecutive symbols of a frame share it.
pub fn wiener_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    samples_per_symbol: usize,
    rho: f64,
    cfg: &WienerConfig,
) -> Result<PhaseNoiseRealization> {
    if len == 0 || samples_per_symbol == 0 {
        return Err(Error::InvalidDimension("phase trajectory needs at least one sample".into()));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be finite and nonnegative, got {rho}")));
    }
    if !(cfg.diffusion_factor >= 0.0) {
        return Err(Error::InvalidArgument("diffusion factor must be nonnegative".into()));
    }
    let start = if cfg.random_initial_phase { rng.random_range(-PI..PI) } else { 0.0 };
    let sigma = cfg.increment_variance(rho, samples_per_symbol).sqrt();
    let mut theta = Vec::with_capacity(len);
    let mut increments = Vec::with_capacity(len - 1);
    theta.push(start);
    for k in 1..len {
        let z: f64 = rng.sample(StandardNormal);
        let w = sigma * z;
        increments.push(w);
        theta.push(theta[k - 1] + w);
    }
    Ok(PhaseNoiseRealization { theta, increments, rho, seed: 0 })
}

/// Spectral representation `delta` (or `gamma` in the reduced dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    pub values: CVector,
    pub geometry_ok: bool,
}

impl SpectralVector {
    /// Wraps a vector, caching whether it satisfies the geometry to 1e-12.
    pub fn new(values: CVector) -> Self {
        let geometry_ok = !values.is_empty() && geometry_residual(&values).satisfied(GEOMETRY_TOL);
        Self { values, geometry_ok }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.values.as_slice()
    }
}

/// `delta_k = (1/n) sum_m exp(-j theta[m]) exp(-j 2 pi k m / n)`.
pub fn spectral_vector(theta: &[f64]) -> SpectralVector {
    let n = theta.len();
    let dft = UnitaryDft::new(n).expect("non-empty trajectory");
    spectral_vector_with(&dft, theta)
}

pub fn spectral_vector_with(dft: &UnitaryDft, theta: &[f64]) -> SpectralVector {
    let n = theta.len();
    // unitary F applied to exp(-j theta)/sqrt(n) gives the 1/n-scaled DFT
    let scale = 1.0 / (n as f64).sqrt();
    let x: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(scale, -t)).collect();
    SpectralVector::new(CVector::from_vec(dft.forward(&x)))
}

/// Common phase error: the zeroth spectral component.
pub fn cpe(delta: &SpectralVector) -> Complex64 {
    delta.values[0]
}

/// Time samples `exp(-j theta_hat[i])/n` implied by a spectral vector, via the
/// 1/n-normalized inverse DFT.
pub fn time_samples(dft: &UnitaryDft, delta: &[Complex64]) -> Vec<Complex64> {
    let scale = 1.0 / (dft.len() as f64).sqrt();
    dft.inverse(delta).into_iter().map(|z| z * scale).collect()
}

/// Phase trajectory implied by a spectral vector, unwrapped sample to sample.
pub fn phase_from_spectrum(dft: &UnitaryDft, delta: &[Complex64]) -> Vec<f64> {
    let x = time_samples(dft, delta);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for (i, z) in x.iter().enumerate() {
        let raw = -z.arg();
        let v = if i == 0 { raw } else { prev + wrap_angle(raw - prev) };
        out.push(v);
        prev = v;
    }
    out
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
