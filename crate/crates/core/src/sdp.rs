//! Dual of the geometry-constrained least-squares problem and a small
//! log-det barrier solver for it.
//!
//! The primal problem is
//!
//! ```text
//! minimize   g^H M g - 2 Re(b^H g)
//! subject to g^H g = 1,  g^H A_i g = 0 for every constraint matrix A_i
//! ```
//!
//! and its dual maximizes `tau` over `(tau, lambda, alpha, beta)` subject to
//!
//! ```text
//! [ M + lambda I + sum alpha_l R_l + sum beta_l I_l   b          ]
//! [ b^H                                               -tau-lambda ]  >= 0
//! ```
//!
//! with `R_l`, `I_l` the Hermitian parts of the cyclic shifts. The constant
//! `w^H w` of the least-squares cost is carried separately so objective values
//! can be reported either way.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{hermitian_split, permutation_matrix, CMatrix, CVector, ONE, ZERO};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_NEWTON: usize = 200;
/// Relative singular-value cutoff used by [`kkt_recover`].
pub const PINV_CUTOFF: f64 = 1e-10;
const OUTER_FACTOR: f64 = 10.0;
const UNBOUNDED_TAU: f64 = 1e12;
const CENTERING_TOL: f64 = 1e-10;
const CENTERING_STALL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Real and imaginary Hermitian parts of the shifts `P_l`, `l >= 1`.
///
/// For odd `n` both parts are kept for `l = 1..(n-1)/2`. For even `n` the
/// shift `P_{n/2}` is symmetric, so only its real part enters.
pub fn geometry_constraints(n: usize) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("geometry constraints need n >= 2, got {n}")));
    }
    let mut re = Vec::new();
    let mut im = Vec::new();
    for l in 1..=n / 2 {
        let (r, i) = hermitian_split(&permutation_matrix(n, l)?)?;
        re.push(r);
        if 2 * l != n {
            im.push(i);
        }
    }
    Ok((re, im))
}

#[derive(Debug, Clone)]
pub struct SdpInstance {
    pub m: CMatrix,
    pub b: CVector,
    /// `w^H w`, added to objective values when reporting the full cost.
    pub const_term: f64,
    pub real_constraints: Vec<CMatrix>,
    pub imag_constraints: Vec<CMatrix>,
}

impl SdpInstance {
    /// Instance with the phase-noise geometry constraints.
    pub fn new(m: CMatrix, b: CVector, const_term: f64) -> Result<Self> {
        let (re, im) = geometry_constraints(m.nrows())?;
        Self::with_constraints(m, b, const_term, re, im)
    }

    pub fn with_constraints(
        m: CMatrix,
        b: CVector,
        const_term: f64,
        real_constraints: Vec<CMatrix>,
        imag_constraints: Vec<CMatrix>,
    ) -> Result<Self> {
        let n = m.nrows();
        if !m.is_square() || b.len() != n || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "M is {}x{} but b has length {}",
                m.nrows(),
                m.ncols(),
                b.len()
            )));
        }
        for a in real_constraints.iter().chain(&imag_constraints) {
            if a.shape() != (n, n) {
                return Err(Error::InvalidArgument("constraint matrix shape mismatch".into()));
            }
            if hermitian_defect(a) > 1e-12 {
                return Err(Error::InvalidArgument("constraint matrices must be Hermitian".into()));
            }
        }
        Ok(Self { m, b, const_term, real_constraints, imag_constraints })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Number of scalar dual variables, `tau` and `lambda` included.
    pub fn num_vars(&self) -> usize {
        2 + self.real_constraints.len() + self.imag_constraints.len()
    }

    /// Primal objective without the constant term.
    pub fn objective(&self, g: &CVector) -> f64 {
        let mg = &self.m * g;
        g.dotc(&mg).re - 2.0 * self.b.dotc(g).re
    }

    /// Full least-squares cost `||A g - w||^2`.
    pub fn cost(&self, g: &CVector) -> f64 {
        self.objective(g) + self.const_term
    }

    /// Largest violation of the primal constraints at `g`.
    pub fn constraint_residual(&self, g: &CVector) -> f64 {
        let mut worst = (g.norm_squared() - 1.0).abs();
        for a in self.real_constraints.iter().chain(&self.imag_constraints) {
            worst = worst.max(g.dotc(&(a * g)).norm());
        }
        worst
    }

    /// `M + lambda I + sum alpha_l R_l + sum beta_l I_l`.
    pub fn kkt_matrix(&self, lambda: f64, alpha: &[f64], beta: &[f64]) -> Result<CMatrix> {
        self.check_multipliers(alpha, beta)?;
        let n = self.dim();
        let mut k = &self.m + CMatrix::identity(n, n) * Complex64::new(lambda, 0.0);
        for (a, x) in self.real_constraints.iter().zip(alpha) {
            k += a * Complex64::new(*x, 0.0);
        }
        for (a, x) in self.imag_constraints.iter().zip(beta) {
            k += a * Complex64::new(*x, 0.0);
        }
        Ok(k)
    }

    fn check_multipliers(&self, alpha: &[f64], beta: &[f64]) -> Result<()> {
        if alpha.len() != self.real_constraints.len() || beta.len() != self.imag_constraints.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} real and {} imaginary multipliers, got {} and {}",
                self.real_constraints.len(),
                self.imag_constraints.len(),
                alpha.len(),
                beta.len()
            )));
        }
        Ok(())
    }

    /// Coefficient matrices of the LMI in the variable order
    /// `(tau, lambda, alpha.., beta..)`; element 0 of the result is the
    /// constant part.
    fn lmi_basis(&self) -> Vec<CMatrix> {
        let n = self.dim();
        let mut f0 = CMatrix::zeros(n + 1, n + 1);
        f0.view_mut((0, 0), (n, n)).copy_from(&self.m);
        for i in 0..n {
            f0[(i, n)] = self.b[i];
            f0[(n, i)] = self.b[i].conj();
        }
        let mut basis = vec![f0];
        let mut ftau = CMatrix::zeros(n + 1, n + 1);
        ftau[(n, n)] = -ONE;
        basis.push(ftau);
        let mut flam = CMatrix::identity(n + 1, n + 1);
        flam[(n, n)] = -ONE;
        basis.push(flam);
        for a in self.real_constraints.iter().chain(&self.imag_constraints) {
            let mut f = CMatrix::zeros(n + 1, n + 1);
            f.view_mut((0, 0), (n, n)).copy_from(a);
            basis.push(f);
        }
        basis
    }
}

/// The `(N+1) x (N+1)` dual LMI matrix at the given variables.
pub fn assemble_lmi(inst: &SdpInstance, tau: f64, lambda: f64, alpha: &[f64], beta: &[f64]) -> Result<CMatrix> {
    let k = inst.kkt_matrix(lambda, alpha, beta)?;
    let n = inst.dim();
    let mut z = CMatrix::zeros(n + 1, n + 1);
    z.view_mut((0, 0), (n, n)).copy_from(&k);
    for i in 0..n {
        z[(i, n)] = inst.b[i];
        z[(n, i)] = inst.b[i].conj();
    }
    z[(n, n)] = Complex64::new(-tau - lambda, 0.0);
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub tau: f64,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Smallest eigenvalue of the LMI at the returned point.
    pub min_eig: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// `tau` after each centering step.
    pub tau_trace: Vec<f64>,
}

impl SdpSolution {
    /// Dual objective including the constant term of the cost.
    pub fn dual_value(&self, inst: &SdpInstance) -> f64 {
        self.tau + inst.const_term
    }
}

pub fn min_eigenvalue(h: &CMatrix) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lower Cholesky factor of a Hermitian matrix, `None` unless positive
/// definite. `nalgebra`'s complex Cholesky takes complex square roots of
/// negative pivots, so definiteness is checked here explicitly.
fn hpd_cholesky(z: &CMatrix) -> Option<CMatrix> {
    let n = z.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = z[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = z[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn log_det_pd(z: &CMatrix) -> Option<f64> {
    let l = hpd_cholesky(z)?;
    Some((0..z.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive definite matrix.
fn hpd_inverse(z: &CMatrix) -> Option<CMatrix> {
    let l = hpd_cholesky(z)?;
    let n = z.nrows();
    let linv = l.solve_lower_triangular(&CMatrix::identity(n, n))?;
    Some(linv.adjoint() * linv)
}

fn lmi_at(basis: &[CMatrix], y: &[f64]) -> CMatrix {
    let mut z = basis[0].clone();
    for (f, v) in basis[1..].iter().zip(y) {
        z += f * Complex64::new(*v, 0.0);
    }
    z
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    // Re tr(A B) without forming the product
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    s
}

/// Maximizes `tau` subject to the dual LMI with a log-det barrier method.
///
/// Starts from the strictly feasible point `lambda0 = 1 + tr(M)/N`,
/// `tau0 = -lambda0 - b^H (M + lambda0 I)^{-1} b - 1`, multipliers zero, and
/// stops once the barrier gap bound `(N+1)/t` drops below
/// `tol * (1 + |tau|)`. Every Newton step is damped to stay strictly inside
/// the cone, so the reported centering points are feasible and their `tau`
/// values increase with `t`.
pub fn solve_dual(inst: &SdpInstance, tol: f64) -> Result<SdpSolution> {
    let n = inst.dim();
    let nv = inst.num_vars();
    let n_re = inst.real_constraints.len();
    let basis = inst.lmi_basis();
    let c = {
        let mut c = vec![0.0; nv];
        c[0] = 1.0;
        c
    };

    let trace_m: f64 = (0..n).map(|i| inst.m[(i, i)].re).sum();
    let lambda0 = 1.0 + trace_m.max(0.0) / n as f64;
    let shifted = &inst.m + CMatrix::identity(n, n) * Complex64::new(lambda0, 0.0);
    let inv = hpd_inverse(&shifted)
        .ok_or_else(|| Error::InvalidArgument("M + lambda0 I is not positive definite; M must be PSD".into()))?;
    let quad = inst.b.dotc(&(inv * &inst.b)).re;
    let mut y = vec![0.0; nv];
    y[1] = lambda0;
    y[0] = -lambda0 - quad - 1.0;

    let nu = (n + 1) as f64;
    let mut t = nu / (1.0 + y[0].abs()).max(1.0);
    let mut iterations = 0usize;
    let mut tau_trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut last_hessian: Option<DMatrix<f64>> = None;

    'outer: loop {
        // centering
        let mut prev_decrement = f64::INFINITY;
        loop {
            if iterations >= MAX_NEWTON {
                break 'outer;
            }
            let z = lmi_at(&basis, &y);
            let s = match hpd_inverse(&z) {
                Some(s) => s,
                None => break 'outer,
            };
            let sa: Vec<CMatrix> = basis[1..].iter().map(|f| &s * f).collect();
            let mut grad = DVector::<f64>::zeros(nv);
            let mut hess = DMatrix::<f64>::zeros(nv, nv);
            for i in 0..nv {
                let tr: f64 = (0..n + 1).map(|k| sa[i][(k, k)].re).sum();
                grad[i] = -t * c[i] - tr;
                for j in 0..=i {
                    let h = trace_product(&sa[i], &sa[j]);
                    hess[(i, j)] = h;
                    hess[(j, i)] = h;
                }
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match hess.clone().lu().solve(&(-&grad)) {
                    Some(d) => d,
                    None => break 'outer,
                },
            };
            iterations += 1;
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                break 'outer;
            }
            // at large t the decrement bottoms out at a roundoff floor
            let stalled = decrement < CENTERING_STALL && decrement > 0.5 * prev_decrement;
            prev_decrement = decrement;
            if decrement / 2.0 <= CENTERING_TOL || stalled {
                break;
            }
            // backtracking on the barrier change; differencing tau and the
            // log-determinant separately avoids cancellation at large t
            let ld0 = log_det_pd(&z).unwrap_or(f64::NEG_INFINITY);
            let mut alpha_step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + alpha_step * d).collect();
                if let Some(ld1) = log_det_pd(&lmi_at(&basis, &cand)) {
                    let change = -t * alpha_step * step[0] - (ld1 - ld0);
                    if change <= -0.25 * alpha_step * decrement {
                        y = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha_step *= 0.5;
            }
            last_hessian = Some(hess);
            if y[0] > UNBOUNDED_TAU {
                status = SolveStatus::Infeasible;
                break 'outer;
            }
            if !accepted {
                break;
            }
        }
        tau_trace.push(y[0]);
        if nu / t <= tol * (1.0 + y[0].abs()) {
            status = SolveStatus::Optimal;
            break;
        }
        let t_next = t * OUTER_FACTOR;
        // predictor along the central-path tangent dy/dt = H^{-1} c
        if let Some(h) = last_hessian.take() {
            if let Some(dir) = h.cholesky().map(|ch| ch.solve(&DVector::from_column_slice(&c))) {
                let mut scale = t_next - t;
                let ld0 = log_det_pd(&lmi_at(&basis, &y)).unwrap_or(f64::NEG_INFINITY);
                for _ in 0..40 {
                    let cand: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, d)| a + scale * d).collect();
                    if let Some(ld1) = log_det_pd(&lmi_at(&basis, &cand)) {
                        if -t_next * scale * dir[0] - (ld1 - ld0) < 0.0 {
                            y = cand;
                            break;
                        }
                    }
                    scale *= 0.5;
                }
            }
        }
        t = t_next;
    }

    let z = lmi_at(&basis, &y);
    let min_eig = min_eigenvalue(&z);
    if status == SolveStatus::Optimal && min_eig < -1e-8 * (1.0 + inst.m.norm()) {
        status = SolveStatus::MaxIter;
    }
    Ok(SdpSolution {
        tau: y[0],
        lambda: y[1],
        alpha: y[2..2 + n_re].to_vec(),
        beta: y[2 + n_re..].to_vec(),
        min_eig,
        iterations,
        status,
        tau_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktRecovery {
    pub gamma: CVector,
    /// Set when singular values were dropped by the pseudo-inverse cutoff.
    pub rank_deficient: bool,
    pub rank: usize,
}

/// `g = pinv(M + lambda I + sum alpha R + sum beta I) b`, with singular values
/// below `PINV_CUTOFF * sigma_max` treated as zero.
pub fn kkt_recover(inst: &SdpInstance, sol: &SdpSolution) -> Result<KktRecovery> {
    let k = inst.kkt_matrix(sol.lambda, &sol.alpha, &sol.beta)?;
    Ok(pinv_solve(&k, &inst.b))
}

pub fn pinv_solve(k: &CMatrix, b: &CVector) -> KktRecovery {
    let svd = k.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().expect("u computed"), svd.v_t.as_ref().expect("v_t computed"));
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * smax;
    let utb = u.adjoint() * b;
    let mut coeff = CVector::from_element(k.ncols(), ZERO);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            coeff[i] = utb[i] / s;
            rank += 1;
        }
    }
    let gamma = vt.adjoint() * coeff;
    KktRecovery { gamma, rank_deficient: rank < k.ncols(), rank }
}
