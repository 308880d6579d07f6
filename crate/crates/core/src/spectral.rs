//! Dense complex linear algebra for the phase-noise spectral model.
//!
//! Every DFT matrix here is unitary: `F[k, n] = exp(-j 2 pi k n / N) / sqrt(N)`.
//! Under this convention a spectral vector built from a constant-modulus time
//! sequence of modulus `1/sqrt(N)` has unit norm, and the quadratic geometry
//! `v^H P_l v = [l == 0]` holds exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Unitary `n x n` DFT matrix.
pub fn dft_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be positive".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CMatrix::from_fn(n, n, |k, m| {
        // reduce the exponent first so large n keeps full precision
        let e = ((k * m) % n) as f64;
        Complex64::from_polar(scale, -2.0 * PI * e / n as f64)
    }))
}

/// Cyclic shift `P_l = (P_1)^l`; `P_1` moves every entry one place down.
pub fn permutation_matrix(n: usize, l: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("permutation size must be positive".into()));
    }
    if l >= n {
        return Err(Error::InvalidArgument(format!("shift {l} out of range for n = {n}")));
    }
    let mut p = CMatrix::zeros(n, n);
    for j in 0..n {
        p[((j + l) % n, j)] = ONE;
    }
    Ok(p)
}

/// Splits a square matrix into the Hermitian parts `P_R = (P + P^H)/2` and
/// `P_I = j (P^H - P)/2`, so that `Re(v^H P v) = v^H P_R v` and
/// `Im(v^H P v) = v^H P_I v`.
pub fn hermitian_split(p: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if !p.is_square() {
        return Err(Error::InvalidDimension(format!(
            "hermitian split needs a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let ph = p.adjoint();
    let real = (p + &ph).scale(0.5);
    let imag = (ph - p) * Complex64::new(0.0, 0.5);
    Ok((real, imag))
}

/// Residuals of the quadratic geometry `v^H P_l v - [l == 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryResidual {
    pub residuals: Vec<Complex64>,
    pub max_abs: f64,
}

impl GeometryResidual {
    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_abs < tol
    }
}

/// Evaluates `v^H P_l v - Lambda_l` for every shift `l`.
pub fn geometry_residual(v: &CVector) -> GeometryResidual {
    let n = v.len();
    let mut residuals = Vec::with_capacity(n);
    let mut max_abs: f64 = 0.0;
    for l in 0..n {
        // (P_l v)[i] = v[i - l]
        let mut acc = ZERO;
        for i in 0..n {
            acc += v[i].conj() * v[(i + n - l) % n];
        }
        if l == 0 {
            acc -= ONE;
        }
        max_abs = max_abs.max(acc.norm());
        residuals.push(acc);
    }
    GeometryResidual { residuals, max_abs }
}

/// Circulant matrix whose `j`-th column is `c` shifted down `j` places.
pub fn circulant_from_column(c: &CVector) -> CMatrix {
    let n = c.len();
    CMatrix::from_fn(n, n, |i, j| c[(i + n - j) % n])
}

/// Phase-noise mixing matrix: row-wise circulant with first row `delta^H`.
pub fn build_v(delta: &CVector) -> CMatrix {
    let n = delta.len();
    CMatrix::from_fn(n, n, |i, j| delta[(j + n - i) % n].conj())
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

/// FFT-backed application of the unitary DFT and of circulant products.
///
/// Cheap to clone; plans are shared.
#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("DFT size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `F x`
    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.run(&self.forward, x)
    }

    /// `F^H x`
    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.run(&self.inverse, x)
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n, "DFT input length mismatch");
        let mut buf = x.to_vec();
        plan.process(&mut buf);
        for z in &mut buf {
            *z *= self.scale;
        }
        buf
    }

    /// Unnormalized DFT `sum_n x[n] exp(-j 2 pi k n / N)`, i.e. the eigenvalues of
    /// the circulant matrix with first column `x`.
    pub fn spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.forward.process(&mut buf);
        buf
    }

    /// Circular convolution `circulant_from_column(c) * x`.
    pub fn circulant_apply(&self, c: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let mut cf = c.to_vec();
        let mut xf = x.to_vec();
        self.forward.process(&mut cf);
        self.forward.process(&mut xf);
        for (a, b) in xf.iter_mut().zip(&cf) {
            *a *= b;
        }
        self.inverse.process(&mut xf);
        let inv_n = 1.0 / self.n as f64;
        for z in &mut xf {
            *z *= inv_n;
        }
        xf
    }

    /// `build_v(delta) * x`
    pub fn apply_v(&self, delta: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        // V = (circulant of the index-reversed conjugate of delta)
        let n = self.n;
        let c: Vec<Complex64> = (0..n).map(|i| delta[(n - i) % n].conj()).collect();
        self.circulant_apply(&c, x)
    }

    /// `build_v(delta)^H * x`
    pub fn apply_v_adjoint(&self, delta: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        self.circulant_apply(delta, x)
    }
}
