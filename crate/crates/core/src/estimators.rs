//! Pilot-only phase-noise estimators and the LS error diagnostics.
//!
//! With `R` the column-circulant matrix of `r` and `K` the pilot selector,
//! the pilot equations read `K R T gamma = w_p`, so the LS cost is
//! `J(gamma) = ||A gamma - w_p||^2` with `A = K R T`.

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dimred::DimRedModel;
use crate::error::{Error, Result};
use crate::phase_noise::{spectral_vector_with, time_samples, wrap_angle, SpectralVector};
use crate::sdp::{kkt_recover, solve_dual, SdpInstance, SolveStatus, DEFAULT_TOL};
use crate::spectral::{geometry_residual, CMatrix, CVector, UnitaryDft, ONE, ZERO};

/// ULS switches to Tikhonov regularization above this condition number.
pub const MAX_CONDITION: f64 = 1e12;
pub const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Uls,
    Nls,
    Gls,
    Cpe,
    Cis,
    /// True spectral vector (upper bound).
    Genie,
    /// No compensation at all.
    None,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [Self::Uls, Self::Nls, Self::Gls, Self::Cpe, Self::Cis, Self::Genie, Self::None];

    pub fn id(self) -> &'static str {
        match self {
            Self::Uls => "uls",
            Self::Nls => "nls",
            Self::Gls => "gls",
            Self::Cpe => "cpe",
            Self::Cis => "cis",
            Self::Genie => "genie",
            Self::None => "none",
        }
    }

    /// Whether the estimator solves the reduced LS system.
    pub fn uses_ls(self) -> bool {
        matches!(self, Self::Uls | Self::Nls | Self::Gls)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}' (expected uls|nls|gls|cpe|cis|genie|none)")))
    }
}

/// `M = A^H A`, `b = A^H w_p`, `const_term = w_p^H w_p`.
#[derive(Debug, Clone)]
pub struct LsSystem {
    pub a: CMatrix,
    pub m: CMatrix,
    pub b: CVector,
    pub w_p: CVector,
    pub const_term: f64,
}

impl LsSystem {
    pub fn from_parts(a: CMatrix, w_p: CVector) -> Result<Self> {
        if a.nrows() != w_p.len() {
            return Err(Error::InvalidDimension("A and w_p row counts differ".into()));
        }
        if a.nrows() < a.ncols() {
            return Err(Error::Underdetermined { pilots: a.nrows(), dim: a.ncols() });
        }
        let ah = a.adjoint();
        let mut m = &ah * &a;
        // exact Hermitian symmetry
        let mh = m.adjoint();
        m = (m + mh) * Complex64::new(0.5, 0.0);
        let b = &ah * &w_p;
        let const_term = w_p.norm_squared();
        Ok(Self { a, m, b, w_p, const_term })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// `J(gamma) = ||A gamma - w_p||^2`.
    pub fn cost(&self, gamma: &CVector) -> f64 {
        (&self.a * gamma - &self.w_p).norm_squared()
    }
}

/// Assembles the LS system from the received symbol `r`, the pilot
/// subcarriers and their known products `w_p = K H s`.
pub fn build_ls_system(r: &[Complex64], pilots: &[usize], w_p: &[Complex64], model: &DimRedModel) -> Result<LsSystem> {
    let n_sub = r.len();
    if n_sub != model.n_sub {
        return Err(Error::InvalidDimension(format!("r has length {n_sub}, model expects {}", model.n_sub)));
    }
    if pilots.len() != w_p.len() {
        return Err(Error::InvalidArgument("pilot index and product counts differ".into()));
    }
    if pilots.len() < model.dim {
        return Err(Error::Underdetermined { pilots: pilots.len(), dim: model.dim });
    }
    if let Some(&p) = pilots.iter().find(|&&p| p >= n_sub) {
        return Err(Error::InvalidArgument(format!("pilot index {p} out of range")));
    }
    let n = model.dim;
    let mut a = CMatrix::zeros(pilots.len(), n);
    for (row, &p) in pilots.iter().enumerate() {
        // (R T)[p, :] = sum_j r[p - j] T[j, :]
        for j in 0..n_sub {
            let rv = r[(p + n_sub - j) % n_sub];
            for c in 0..n {
                a[(row, c)] += rv * model.t[(j, c)];
            }
        }
    }
    LsSystem::from_parts(a, CVector::from_column_slice(w_p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub status: SolveStatus,
    pub iterations: usize,
    pub tau: f64,
    /// Dual bound on the full cost, `tau + w_p^H w_p`.
    pub dual_value: f64,
    pub rank_deficient: bool,
    /// Constraint violation of the KKT point before projection.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `J(gamma_hat)`; NaN when no LS system was involved.
    pub cost: f64,
    /// Geometry residual of `delta_hat`.
    pub geometry_residual: f64,
    /// Geometry residual of `gamma_hat` in the reduced domain.
    pub reduced_residual: f64,
    pub condition: f64,
    pub regularized: bool,
    /// Time samples that were exactly zero before modulus normalization.
    pub zero_samples: usize,
    /// Set when a CPE angle difference had to be wrapped.
    pub unwrap_flag: bool,
    pub solver: Option<SolverInfo>,
    /// Set when this output replaces a failed estimator.
    pub fallback_from: Option<EstimatorKind>,
}

#[derive(Debug, Clone)]
pub struct EstimatorOutput {
    pub kind: EstimatorKind,
    pub gamma_hat: CVector,
    pub delta_hat: SpectralVector,
    pub diagnostics: Diagnostics,
}

/// Everything the estimators share across frames.
#[derive(Debug, Clone)]
pub struct EstimatorContext {
    pub model: DimRedModel,
    pub dft: UnitaryDft,
    pub dft_dim: UnitaryDft,
    pub sdp_tol: f64,
}

impl EstimatorContext {
    pub fn new(model: DimRedModel) -> Result<Self> {
        let dft = UnitaryDft::new(model.n_sub)?;
        let dft_dim = UnitaryDft::new(model.dim)?;
        Ok(Self { model, dft, dft_dim, sdp_tol: DEFAULT_TOL })
    }

    fn output(&self, kind: EstimatorKind, gamma_hat: CVector, delta_hat: SpectralVector, mut d: Diagnostics) -> EstimatorOutput {
        d.geometry_residual = geometry_residual(&delta_hat.values).max_abs;
        d.reduced_residual = geometry_residual(&gamma_hat).max_abs;
        EstimatorOutput { kind, gamma_hat, delta_hat, diagnostics: d }
    }

    /// Output for an externally supplied `delta_hat` (CPE, CIS, genie),
    /// with `gamma_hat = T^H delta_hat`.
    pub fn from_delta(&self, kind: EstimatorKind, delta_hat: CVector, d: Diagnostics) -> Result<EstimatorOutput> {
        let gamma = self.model.project(&delta_hat)?;
        Ok(self.output(kind, gamma, SpectralVector::new(delta_hat), d))
    }
}

fn hermitian_eigen_range(m: &CMatrix) -> (f64, f64) {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn condition_number(m: &CMatrix) -> f64 {
    let (lo, hi) = hermitian_eigen_range(m);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `gamma = M^{-1} b`, regularized when `cond(M) > 1e12`.
pub fn uls(ctx: &EstimatorContext, sys: &LsSystem) -> Result<EstimatorOutput> {
    let n = sys.dim();
    let (_, hi) = hermitian_eigen_range(&sys.m);
    if !(hi > 0.0) {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    let mut condition = condition_number(&sys.m);
    let mut regularized = false;
    let mut m = sys.m.clone();
    if condition > MAX_CONDITION {
        let trace: f64 = (0..n).map(|i| sys.m[(i, i)].re).sum();
        let lambda = REGULARIZATION * trace / n as f64;
        m += CMatrix::identity(n, n) * Complex64::new(lambda, 0.0);
        regularized = true;
        condition = condition_number(&m);
        if !(condition.is_finite()) {
            return Err(Error::Singular { condition });
        }
    }
    let gamma = m.clone().cholesky().map(|c| c.solve(&sys.b)).or_else(|| m.lu().solve(&sys.b)).ok_or(Error::Singular { condition })?;
    let delta = ctx.model.lift(&gamma)?;
    let d = Diagnostics { cost: sys.cost(&gamma), condition, regularized, ..Default::default() };
    Ok(ctx.output(EstimatorKind::Uls, gamma, delta, d))
}

/// Scales every entry to modulus `modulus`; zero entries get phase 0.
fn normalize_modulus(x: &mut [Complex64], modulus: f64) -> usize {
    let mut zeros = 0;
    for z in x.iter_mut() {
        let a = z.norm();
        if a > 0.0 && a.is_finite() {
            *z = *z * (modulus / a);
        } else {
            *z = Complex64::new(modulus, 0.0);
            zeros += 1;
        }
    }
    zeros
}

/// Projects a reduced vector onto the PPT-feasible set: time samples
/// `F~^H gamma` forced to modulus `1/sqrt(N)`.
pub fn project_reduced(dft_dim: &UnitaryDft, gamma: &CVector) -> (CVector, usize) {
    let mut x = dft_dim.inverse(gamma.as_slice());
    let zeros = normalize_modulus(&mut x, 1.0 / (gamma.len() as f64).sqrt());
    (CVector::from_vec(dft_dim.forward(&x)), zeros)
}

/// Projects a full spectral vector onto the constant-modulus set.
pub fn project_full(dft: &UnitaryDft, delta: &CVector) -> (CVector, usize) {
    project_reduced(dft, delta)
}

/// Normalization-based LS.
pub fn nls(ctx: &EstimatorContext, sys: &LsSystem) -> Result<EstimatorOutput> {
    let ls = uls(ctx, sys)?;
    Ok(nls_from(ctx, sys, &ls))
}

/// NLS from an existing ULS output. With a PPT the reduced time samples are
/// normalized; otherwise the full-length time samples of `T gamma_ls` are,
/// and `gamma_hat = T^H delta_hat`.
pub fn nls_from(ctx: &EstimatorContext, sys: &LsSystem, ls: &EstimatorOutput) -> EstimatorOutput {
    let base = Diagnostics { condition: ls.diagnostics.condition, regularized: ls.diagnostics.regularized, ..Default::default() };
    if ctx.model.is_ppt() {
        let (gamma, zeros) = project_reduced(&ctx.dft_dim, &ls.gamma_hat);
        let delta = SpectralVector::new(&ctx.model.t * &gamma);
        let d = Diagnostics { cost: sys.cost(&gamma), zero_samples: zeros, ..base };
        ctx.output(EstimatorKind::Nls, gamma, delta, d)
    } else {
        let (delta, zeros) = project_full(&ctx.dft, &ls.delta_hat.values);
        let gamma = ctx.model.t.adjoint() * &delta;
        let d = Diagnostics { cost: sys.cost(&gamma), zero_samples: zeros, ..base };
        ctx.output(EstimatorKind::Nls, gamma, SpectralVector::new(delta), d)
    }
}

/// Geometry-constrained LS through the dual SDP, KKT recovery and a final
/// modulus projection. Requires a PPT model.
pub fn gls(ctx: &EstimatorContext, sys: &LsSystem) -> Result<EstimatorOutput> {
    if !ctx.model.is_ppt() {
        return Err(Error::InvalidArgument("GLS needs a geometry-preserving model".into()));
    }
    let inst = SdpInstance::new(sys.m.clone(), sys.b.clone(), sys.const_term)?;
    let sol = solve_dual(&inst, ctx.sdp_tol)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::SolverFailed { status: sol.status, iterations: sol.iterations, tau_trace: sol.tau_trace });
    }
    let rec = kkt_recover(&inst, &sol)?;
    let kkt_residual = inst.constraint_residual(&rec.gamma);
    let (gamma, zeros) = project_reduced(&ctx.dft_dim, &rec.gamma);
    let delta = ctx.model.lift(&gamma)?;
    let info = SolverInfo {
        status: sol.status,
        iterations: sol.iterations,
        tau: sol.tau,
        dual_value: sol.dual_value(&inst),
        rank_deficient: rec.rank_deficient,
        kkt_residual,
    };
    let d = Diagnostics { cost: sys.cost(&gamma), zero_samples: zeros, solver: Some(info), ..Default::default() };
    Ok(ctx.output(EstimatorKind::Gls, gamma, delta, d))
}

/// Pilot-weighted CPE estimate `c = sum w_p conj(r_p) / sum |w_p|^2`.
///
/// With `V` built from `delta^H`, a pure CPE `delta = c e_0` gives
/// `r = conj(c) w`, hence the conjugate on `r`.
pub fn cpe_estimate(r: &[Complex64], pilots: &[usize], w_p: &[Complex64]) -> Result<Complex64> {
    if pilots.is_empty() || pilots.len() != w_p.len() {
        return Err(Error::InvalidArgument("CPE needs at least one pilot with a known product".into()));
    }
    let mut num = ZERO;
    let mut den = 0.0;
    for (&p, w) in pilots.iter().zip(w_p) {
        num += w * r[p].conj();
        den += w.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("all pilot products are zero".into()));
    }
    Ok(num / den)
}

/// CPE-only compensation: `delta_hat = (c / |c|) e_0`.
pub fn cpe_only(ctx: &EstimatorContext, r: &[Complex64], pilots: &[usize], w_p: &[Complex64]) -> Result<EstimatorOutput> {
    let c = cpe_estimate(r, pilots, w_p)?;
    let unit = if c.norm() > 0.0 { c / c.norm() } else { ONE };
    let mut delta = CVector::from_element(ctx.model.n_sub, ZERO);
    delta[0] = unit;
    ctx.from_delta(EstimatorKind::Cpe, delta, Diagnostics { cost: f64::NAN, ..Default::default() })
}

/// Which neighbouring symbol supplies the second CIS anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CisNeighbor {
    Next(Complex64),
    /// Used for the last symbol of a frame; the line is extrapolated.
    Previous(Complex64),
}

#[derive(Debug, Clone)]
pub struct CisOutput {
    pub theta_hat: Vec<f64>,
    pub output: EstimatorOutput,
}

/// Linear interpolation of the mean phase between symbol midpoints.
///
/// Anchors are `-arg(c)` of the CPE estimates, placed at sample
/// `(N_c - 1)/2` of their symbols, one symbol length apart. The anchor
/// difference is taken on the nearest branch; `unwrap_flag` records that the
/// raw difference exceeded `pi`.
pub fn cis(ctx: &EstimatorContext, cpe_current: Complex64, neighbor: Option<CisNeighbor>) -> Result<CisOutput> {
    let n = ctx.model.n_sub;
    let a0 = -cpe_current.arg();
    let (slope, unwrap_flag) = match neighbor {
        None => (0.0, false),
        Some(CisNeighbor::Next(c)) => {
            let raw = -c.arg() - a0;
            (wrap_angle(raw) / n as f64, raw.abs() > std::f64::consts::PI)
        }
        Some(CisNeighbor::Previous(c)) => {
            let raw = a0 + c.arg();
            (wrap_angle(raw) / n as f64, raw.abs() > std::f64::consts::PI)
        }
    };
    let mid = (n as f64 - 1.0) / 2.0;
    let theta_hat: Vec<f64> = (0..n).map(|i| a0 + slope * (i as f64 - mid)).collect();
    let delta = spectral_vector_with(&ctx.dft, &theta_hat).values;
    let d = Diagnostics { cost: f64::NAN, unwrap_flag, ..Default::default() };
    let output = ctx.from_delta(EstimatorKind::Cis, delta, d)?;
    Ok(CisOutput { theta_hat, output })
}

/// Amplitude and phase errors of the time samples implied by `delta_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    pub kappa: Vec<f64>,
    pub omega: Vec<f64>,
    pub eps: Vec<f64>,
    /// Closed form `(1/N_c^2) sum [eps^2 - 2 eps (1 - cos w) + 2 (1 - cos w)]`.
    pub total: f64,
    /// Direct `sum |x_hat[i] - exp(-j theta[i]) / N_c|^2`.
    pub direct_total: f64,
}

impl ErrorDecomposition {
    /// Total error relative to `sum |exp(-j theta)/N_c|^2 = 1/N_c`; equals
    /// `||delta_hat - delta||^2` for unit-norm `delta`.
    pub fn relative_total(&self) -> f64 {
        self.total * self.kappa.len() as f64
    }
}

/// Closed-form total error from `kappa` and `omega`.
pub fn total_error(kappa: &[f64], omega: &[f64]) -> f64 {
    let n = kappa.len() as f64;
    kappa
        .iter()
        .zip(omega)
        .map(|(&k, &w)| {
            let e = 1.0 - k;
            let c = 1.0 - w.cos();
            e * e - 2.0 * e * c + 2.0 * c
        })
        .sum::<f64>()
        / (n * n)
}

/// `x_hat = F^H delta_hat / sqrt(N_c)`, `kappa = N_c |x_hat|`,
/// `omega = theta + arg x_hat` (so `x_hat = kappa/N_c exp(-j(theta - omega))`),
/// `eps = 1 - kappa`.
pub fn error_decomposition(dft: &UnitaryDft, delta_hat: &[Complex64], theta: &[f64]) -> Result<ErrorDecomposition> {
    let n = dft.len();
    if delta_hat.len() != n || theta.len() != n {
        return Err(Error::InvalidDimension("delta_hat and theta must both have length N_c".into()));
    }
    let x = time_samples(dft, delta_hat);
    let nf = n as f64;
    let kappa: Vec<f64> = x.iter().map(|z| nf * z.norm()).collect();
    let omega: Vec<f64> = x.iter().zip(theta).map(|(z, &t)| wrap_angle(t + z.arg())).collect();
    let eps: Vec<f64> = kappa.iter().map(|k| 1.0 - k).collect();
    let total = total_error(&kappa, &omega);
    let direct_total = x
        .iter()
        .zip(theta)
        .map(|(z, &t)| (z - Complex64::from_polar(1.0 / nf, -t)).norm_sqr())
        .sum();
    Ok(ErrorDecomposition { kappa, omega, eps, total, direct_total })
}

/// The error-transfer matrix `C` with `delta_ls = F C F^H delta`, built from
/// the true phase `theta`, the noise-free subcarrier products `w = H s` and
/// the noise `noise` (all length `N_c`). PPT models only.
pub fn c_matrix(
    model: &DimRedModel,
    pilots: &[usize],
    theta: &[f64],
    w: &[Complex64],
    noise: &[Complex64],
) -> Result<CMatrix> {
    let tt = model
        .t_tilde
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("C is defined through the PPT interpolator".into()))?;
    let n = model.n_sub;
    if theta.len() != n || w.len() != n || noise.len() != n {
        return Err(Error::InvalidDimension("theta, w and noise must have length N_c".into()));
    }
    let dft = UnitaryDft::new(n)?;
    let fw = dft.inverse(w);
    let fnz = dft.inverse(noise);
    if fw.iter().any(|z| z.norm() < 1e-14) {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    let e_theta: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    // E_snr = I + E_theta^{-1} E_w^{-1} E_n
    let e_snr: Vec<Complex64> = (0..n).map(|i| ONE + fnz[i] / (e_theta[i] * fw[i])).collect();
    let mut kw = vec![ZERO; n];
    for &p in pilots {
        kw[p] = w[p];
    }
    let e_p = dft.inverse(&kw);

    // P_r = E_theta^H F^H K^H K F E_theta
    let f = crate::spectral::dft_matrix(n)?;
    let mut kf = CMatrix::zeros(n, n);
    for &p in pilots {
        for j in 0..n {
            kf[(p, j)] = f[(p, j)] * e_theta[j];
        }
    }
    let p_r = kf.adjoint() * &kf;
    let g = CMatrix::from_fn(n, tt.ncols(), |i, j| fw[i] * e_snr[i] * tt[(i, j)]);
    let inner = g.adjoint() * &p_r * &g;
    let inv = inner.clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let right = CMatrix::from_fn(tt.ncols(), n, |i, j| (fw[j] * e_snr[j]).conj() * tt[(j, i)].conj() * e_p[j]);
    Ok(tt * inv * right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::{lft_default, pc_ppt};
    use crate::link::ofdm::qpsk_sequence;
    use crate::phase_noise::{spectral_vector, wiener_realization};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Case {
        r: Vec<Complex64>,
        w: Vec<Complex64>,
        noise: Vec<Complex64>,
        theta: Vec<f64>,
        delta: SpectralVector,
    }

    fn case(n: usize, theta: Vec<f64>, sigma: f64, seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dft = UnitaryDft::new(n).unwrap();
        let s = qpsk_sequence(seed, n);
        let h: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random::<f64>() + 0.5, rng.random::<f64>() - 0.5)).collect();
        let w: Vec<Complex64> = s.iter().zip(&h).map(|(a, b)| a * b).collect();
        let noise: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * sigma).collect();
        let delta = spectral_vector(&theta);
        let clean = dft.apply_v(delta.as_slice(), &w);
        let r = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        Case { r, w, noise, theta, delta }
    }

    fn pilots_of(c: &Case, idx: &[usize]) -> Vec<Complex64> {
        idx.iter().map(|&i| c.w[i]).collect()
    }

    #[test]
    fn ids_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.id().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("foo".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn underdetermined_is_rejected() {
        let c = case(16, vec![0.0; 16], 0.0, 1);
        let model = pc_ppt(16, 8).unwrap();
        let idx: Vec<usize> = (0..7).collect();
        let err = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap_err();
        assert_eq!(err, Error::Underdetermined { pilots: 7, dim: 8 });
    }

    #[test]
    fn zero_phase_gives_unit_cpe_vector() {
        let c = case(16, vec![0.0; 16], 0.0, 2);
        let model = pc_ppt(16, 16).unwrap();
        let ctx = EstimatorContext::new(model.clone()).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let sys = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap();
        let out = uls(&ctx, &sys).unwrap();
        assert!((out.delta_hat.values[0] - ONE).norm() < 1e-10);
        assert!(out.delta_hat.values.iter().skip(1).all(|z| z.norm() < 1e-10));
        assert!(sys.cost(&model.project(&c.delta.values).unwrap()) < 1e-20);
    }

    #[test]
    fn exact_recovery_full_pilots() {
        let p = wiener_realization(16, 0.1, 3).unwrap();
        let c = case(16, p.theta.clone(), 0.0, 3);
        let model = pc_ppt(16, 16).unwrap();
        let ctx = EstimatorContext::new(model.clone()).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let sys = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap();
        let m_h = &sys.m - sys.m.adjoint();
        assert!(m_h.iter().all(|z| z.norm() < 1e-12));
        let u = uls(&ctx, &sys).unwrap();
        assert!((&u.delta_hat.values - &c.delta.values).norm() < 1e-8);
        let g = gls(&ctx, &sys).unwrap();
        assert!((&g.gamma_hat - &u.gamma_hat).norm() < 1e-6, "{}", (&g.gamma_hat - &u.gamma_hat).norm());
        let n = nls(&ctx, &sys).unwrap();
        assert!((&n.gamma_hat - &u.gamma_hat).norm() < 1e-8);
    }

    #[test]
    fn constrained_estimators_are_feasible_and_ordered() {
        let n_sub = 64;
        let model = pc_ppt(n_sub, 8).unwrap();
        let ctx = EstimatorContext::new(model.clone()).unwrap();
        let idx: Vec<usize> = (0..12).map(|i| i * n_sub / 12).collect();
        for seed in 0..10 {
            let p = wiener_realization(n_sub, 0.05, seed).unwrap();
            let c = case(n_sub, p.theta.clone(), 0.05, seed);
            let sys = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap();
            let u = uls(&ctx, &sys).unwrap();
            let nl = nls_from(&ctx, &sys, &u);
            let g = gls(&ctx, &sys).unwrap();
            assert!(nl.diagnostics.geometry_residual < 1e-10);
            assert!(g.diagnostics.geometry_residual < 1e-10);
            let x = ctx.dft_dim.inverse(nl.gamma_hat.as_slice());
            let m0 = x[0].norm();
            assert!(x.iter().all(|z| (z.norm() - m0).abs() < 1e-13));
            assert!(u.diagnostics.cost <= g.diagnostics.cost + 1e-12);
            assert!(g.diagnostics.cost >= g.diagnostics.solver.as_ref().unwrap().dual_value - 1e-9);
        }
    }

    #[test]
    fn nls_is_idempotent_on_feasible_input() {
        let model = pc_ppt(32, 4).unwrap();
        let ctx = EstimatorContext::new(model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<Complex64> = (0..4).map(|_| Complex64::from_polar(0.5, rng.random::<f64>() * 6.0)).collect();
        let g = CVector::from_vec(ctx.dft_dim.forward(&x));
        let (p, zeros) = project_reduced(&ctx.dft_dim, &g);
        assert_eq!(zeros, 0);
        assert!((p - g).norm() < 1e-14);
    }

    #[test]
    fn nls_lft_branch_is_feasible() {
        let n_sub = 64;
        let model = lft_default(n_sub, 8).unwrap();
        let ctx = EstimatorContext::new(model.clone()).unwrap();
        let idx: Vec<usize> = (0..12).map(|i| i * n_sub / 12).collect();
        let p = wiener_realization(n_sub, 0.05, 9).unwrap();
        let c = case(n_sub, p.theta.clone(), 0.05, 9);
        let sys = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap();
        let out = nls(&ctx, &sys).unwrap();
        assert!(out.diagnostics.geometry_residual < 1e-10);
        assert!(gls(&ctx, &sys).is_err());
    }

    #[test]
    fn zero_time_sample_is_flagged() {
        let dft = UnitaryDft::new(4).unwrap();
        let x = [ZERO, ONE, ONE, ONE];
        let g = CVector::from_vec(dft.forward(&x));
        let (_, zeros) = project_reduced(&dft, &g);
        assert_eq!(zeros, 1);
    }

    #[test]
    fn cpe_constant_phase() {
        let phi = 0.7;
        let c = case(32, vec![phi; 32], 0.0, 4);
        let ctx = EstimatorContext::new(pc_ppt(32, 4).unwrap()).unwrap();
        let idx = [0usize, 8, 16, 24];
        let w_p = pilots_of(&c, &idx);
        let est = cpe_estimate(&c.r, &idx, &w_p).unwrap();
        assert!((est.arg() + phi).abs() < 1e-12);
        let out = cpe_only(&ctx, &c.r, &idx, &w_p).unwrap();
        assert!((out.delta_hat.values[0] - c.delta.values[0]).norm() < 1e-12);
        let c0 = case(32, vec![0.0; 32], 0.0, 5);
        let out = cpe_only(&ctx, &c0.r, &idx, &pilots_of(&c0, &idx)).unwrap();
        assert!((out.delta_hat.values[0] - ONE).norm() < 1e-12);
        assert!(cpe_estimate(&c.r, &idx, &[ZERO; 4]).is_err());
    }

    #[test]
    fn cis_recovers_linear_ramp() {
        let n = 64;
        let ctx = EstimatorContext::new(pc_ppt(n, 8).unwrap()).unwrap();
        let slope = 0.004;
        let theta: Vec<f64> = (0..2 * n).map(|i| 0.3 + slope * i as f64).collect();
        let c0 = case(n, theta[..n].to_vec(), 0.0, 6);
        let c1 = case(n, theta[n..].to_vec(), 0.0, 6);
        let idx: Vec<usize> = (0..8).map(|i| i * 8).collect();
        let e0 = cpe_estimate(&c0.r, &idx, &pilots_of(&c0, &idx)).unwrap();
        let e1 = cpe_estimate(&c1.r, &idx, &pilots_of(&c1, &idx)).unwrap();
        let out = cis(&ctx, e0, Some(CisNeighbor::Next(e1))).unwrap();
        let off = out.theta_hat[0] - theta[0];
        for (a, b) in out.theta_hat.iter().zip(&theta[..n]) {
            assert!((a - b - off).abs() < 1e-3);
        }
        let back = cis(&ctx, e1, Some(CisNeighbor::Previous(e0))).unwrap();
        let off = back.theta_hat[0] - theta[n];
        for (a, b) in back.theta_hat.iter().zip(&theta[n..]) {
            assert!((a - b - off).abs() < 1e-3);
        }
        let flat = cis(&ctx, Complex64::from_polar(1.0, -0.2), Some(CisNeighbor::Next(Complex64::from_polar(1.0, -0.2))))
            .unwrap();
        assert!(flat.theta_hat.iter().all(|t| (t - 0.2).abs() < 1e-14));
        let wrapped = cis(&ctx, Complex64::from_polar(1.0, 3.0), Some(CisNeighbor::Next(Complex64::from_polar(1.0, -3.0))))
            .unwrap();
        assert!(wrapped.output.diagnostics.unwrap_flag);
    }

    #[test]
    fn decomposition_of_exact_estimate() {
        let p = wiener_realization(32, 0.1, 8).unwrap();
        let d = spectral_vector(&p.theta);
        let dft = UnitaryDft::new(32).unwrap();
        let e = error_decomposition(&dft, d.as_slice(), &p.theta).unwrap();
        assert!(e.kappa.iter().all(|k| (k - 1.0).abs() < 1e-12));
        assert!(e.omega.iter().all(|w| w.abs() < 1e-12));
        assert!(e.total.abs() < 1e-15);
    }

    #[test]
    fn constant_phase_error_anchor() {
        let kappa = vec![1.0; 64];
        let omega = vec![0.2; 64];
        let rel = total_error(&kappa, &omega) * 64.0;
        assert!((rel - 2.0 * (1.0 - 0.2f64.cos())).abs() < 1e-12);
        // kappa = 0 is an all-miss: total relative error exactly 1
        let rel0 = total_error(&[0.0; 8], &[std::f64::consts::PI; 8]) * 8.0;
        assert!((rel0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decomposition_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dft = UnitaryDft::new(16).unwrap();
        for _ in 0..200 {
            let d: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let th: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let e = error_decomposition(&dft, &d, &th).unwrap();
            assert!((e.total - e.direct_total).abs() < 1e-12);
            assert!((e.relative_total() - (CVector::from_vec(d.clone()) - spectral_vector(&th).values).norm_squared()).abs() < 1e-12);
        }
    }

    #[test]
    fn c_matrix_ideal_is_identity() {
        let n = 16;
        let p = wiener_realization(n, 0.1, 11).unwrap();
        let c = case(n, p.theta.clone(), 0.0, 11);
        let model = pc_ppt(n, n).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let cm = c_matrix(&model, &idx, &c.theta, &c.w, &c.noise).unwrap();
        let err = (&cm - CMatrix::identity(n, n)).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn c_matrix_reproduces_uls() {
        let n = 32;
        let model = pc_ppt(n, 4).unwrap();
        let ctx = EstimatorContext::new(model.clone()).unwrap();
        let idx: Vec<usize> = (0..8).map(|i| i * 4).collect();
        for seed in 0..5 {
            let p = wiener_realization(n, 0.05, 20 + seed).unwrap();
            let c = case(n, p.theta.clone(), 0.1, 20 + seed);
            let sys = build_ls_system(&c.r, &idx, &pilots_of(&c, &idx), &model).unwrap();
            let u = uls(&ctx, &sys).unwrap();
            let cm = c_matrix(&model, &idx, &c.theta, &c.w, &c.noise).unwrap();
            let svd = cm.clone().svd(false, false);
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9 * svd.singular_values.max()).count();
            assert_eq!(rank, 4);
            let inner = &cm * CVector::from_vec(ctx.dft.inverse(c.delta.as_slice()));
            let pred = CVector::from_vec(ctx.dft.forward(inner.as_slice()));
            assert!((pred - &u.delta_hat.values).norm() < 1e-8);
        }
    }
}
