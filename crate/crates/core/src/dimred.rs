//! Dimensionality reduction `delta = T gamma`.
//!
//! Two families are provided: the low-frequency selection (LFT), which keeps
//! the lowest spectral components, and the geometry-preserving transform (PPT)
//! `T = F T~ F~^H`, whose time-domain interpolator `T~` maps constant-modulus
//! sequences of length `N` to constant-modulus sequences of length `N_c`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_noise::SpectralVector;
use crate::spectral::{dft_matrix, max_abs, CMatrix, CVector, ONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lft,
    Ppt,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lft => "lft",
            ModelKind::Ppt => "ppt",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lft" => Ok(ModelKind::Lft),
            "ppt" => Ok(ModelKind::Ppt),
            other => Err(Error::InvalidArgument(format!("unknown transform '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DimRedModel {
    pub kind: ModelKind,
    /// `N_c x N`, orthonormal columns.
    pub t: CMatrix,
    /// Time-domain interpolator (PPT only).
    pub t_tilde: Option<CMatrix>,
    pub n_sub: usize,
    pub dim: usize,
    pub ppt_valid: bool,
}

/// Low-frequency selection keeping the top `m` and bottom `k` components.
pub fn lft(n_sub: usize, m: usize, k: usize) -> Result<DimRedModel> {
    if m == 0 || m + k > n_sub {
        return Err(Error::InvalidArgument(format!(
            "LFT needs m >= 1 and m + k <= N_c (m={m}, k={k}, N_c={n_sub})"
        )));
    }
    let dim = m + k;
    let mut t = CMatrix::zeros(n_sub, dim);
    for i in 0..m {
        t[(i, i)] = ONE;
    }
    for j in 0..k {
        t[(n_sub - k + j, m + j)] = ONE;
    }
    Ok(DimRedModel { kind: ModelKind::Lft, t, t_tilde: None, n_sub, dim, ppt_valid: false })
}

/// LFT with the default split `m = N/2 + 1`, `k = N - m`.
pub fn lft_default(n_sub: usize, dim: usize) -> Result<DimRedModel> {
    if dim == 0 {
        return Err(Error::InvalidArgument("LFT dimension must be positive".into()));
    }
    let m = dim / 2 + 1;
    let m = m.min(dim);
    lft(n_sub, m, dim - m)
}

/// Piecewise-constant interpolator `T~_pc` (`N_c x N`), each column a block of
/// `N_c / N` equal entries scaled to unit norm.
pub fn pc_interpolator(n_sub: usize, dim: usize) -> Result<CMatrix> {
    if dim == 0 || n_sub == 0 || n_sub % dim != 0 {
        return Err(Error::InvalidArgument(format!("N = {dim} must divide N_c = {n_sub}")));
    }
    let rep = n_sub / dim;
    let scale = Complex64::new(1.0 / (rep as f64).sqrt(), 0.0);
    let mut tt = CMatrix::zeros(n_sub, dim);
    for i in 0..dim {
        for r in 0..rep {
            tt[(i * rep + r, i)] = scale;
        }
    }
    Ok(tt)
}

/// Piecewise-constant PPT `T = F T~_pc F~^H`.
pub fn pc_ppt(n_sub: usize, dim: usize) -> Result<DimRedModel> {
    let tt = pc_interpolator(n_sub, dim)?;
    ppt_from_interpolator(tt)
}

/// Builds `T = F T~ F~^H` from an interpolator and records whether it passes
/// the geometry-preservation conditions.
pub fn ppt_from_interpolator(t_tilde: CMatrix) -> Result<DimRedModel> {
    let (n_sub, dim) = t_tilde.shape();
    if dim == 0 || dim > n_sub {
        return Err(Error::InvalidDimension(format!("interpolator must be N_c x N with N <= N_c, got {n_sub}x{dim}")));
    }
    let f = dft_matrix(n_sub)?;
    let ft = dft_matrix(dim)?;
    let t = &f * &t_tilde * ft.adjoint();
    let ppt_valid = validate_ppt(&t_tilde).passes(PPT_TOL);
    Ok(DimRedModel { kind: ModelKind::Ppt, t, t_tilde: Some(t_tilde), n_sub, dim, ppt_valid })
}

const PPT_TOL: f64 = 1e-12;

/// Worst violation of each of the three interpolator conditions over all shifts
/// `l = 1..N_c-1`, with `D_l = F^H P_l F = diag(exp(j 2 pi k l / N_c))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptReport {
    /// `max |T~^H T~ - I|`
    pub orthonormality: f64,
    /// `max |t_i^H D_l t_j|`, `i != j`
    pub cross_terms: f64,
    /// `max |sum_i t_i^H D_l t_i|`
    pub diagonal_sum: f64,
}

impl PptReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.orthonormality < tol && self.cross_terms < tol && self.diagonal_sum < tol
    }

    pub fn worst(&self) -> f64 {
        self.orthonormality.max(self.cross_terms).max(self.diagonal_sum)
    }
}

pub fn validate_ppt(t_tilde: &CMatrix) -> PptReport {
    let (n_sub, dim) = t_tilde.shape();
    let gram = t_tilde.adjoint() * t_tilde - CMatrix::identity(dim, dim);
    let orthonormality = max_abs(&gram);

    // t_i^H D_l t_j = sum_k conj(t_ki) t_kj exp(j 2 pi k l / N_c): an
    // unnormalized inverse DFT of the elementwise product, evaluated at l.
    let inverse = FftPlanner::new().plan_fft_inverse(n_sub);
    let mut cross_terms: f64 = 0.0;
    let mut diag_acc = vec![Complex64::new(0.0, 0.0); n_sub];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_sub];
    for i in 0..dim {
        for j in i..dim {
            for k in 0..n_sub {
                buf[k] = t_tilde[(k, i)].conj() * t_tilde[(k, j)];
            }
            inverse.process(&mut buf);
            if i == j {
                for (a, b) in diag_acc.iter_mut().zip(&buf) {
                    *a += b;
                }
            } else {
                // (i, j) and (j, i) are conjugate-reversed, one pass covers both
                cross_terms = buf[1..].iter().fold(cross_terms, |m, z| m.max(z.norm()));
            }
        }
    }
    let diagonal_sum = diag_acc[1..].iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    PptReport { orthonormality, cross_terms, diagonal_sum }
}

impl DimRedModel {
    /// `delta_hat = T gamma`.
    pub fn lift(&self, gamma: &CVector) -> Result<SpectralVector> {
        if gamma.len() != self.dim {
            return Err(Error::InvalidDimension(format!(
                "gamma has length {}, model expects {}",
                gamma.len(),
                self.dim
            )));
        }
        Ok(SpectralVector::new(&self.t * gamma))
    }

    /// Least-squares reduced coordinates `T^H delta` of a full spectral vector.
    pub fn project(&self, delta: &CVector) -> Result<CVector> {
        if delta.len() != self.n_sub {
            return Err(Error::InvalidDimension(format!(
                "delta has length {}, model expects {}",
                delta.len(),
                self.n_sub
            )));
        }
        Ok(self.t.adjoint() * delta)
    }

    pub fn is_ppt(&self) -> bool {
        self.kind == ModelKind::Ppt
    }
}

/// Builds the model selected by `kind` with the default parameters.
pub fn build_model(kind: ModelKind, n_sub: usize, dim: usize) -> Result<DimRedModel> {
    match kind {
        ModelKind::Lft => lft_default(n_sub, dim),
        ModelKind::Ppt => pc_ppt(n_sub, dim),
    }
}
