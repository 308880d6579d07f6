//! Numerical checks of the lossless S-procedure behind the constrained
//! estimator: regularity of the constraint image, a brute-force primal
//! oracle, duality-gap measurement and the null-space identity used for the
//! constraint set.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sdp::{geometry_constraints, min_eigenvalue, solve_dual, SdpInstance, SolveStatus, DEFAULT_TOL};
use crate::spectral::{dft_matrix, geometry_residual, CMatrix, CVector, ONE, ZERO};

/// Homogeneous quadratic forms `q_l(x) = x^H Q_l x` on `C^{N+1}`, with
/// `Q_l = [[A_l, d_l], [d_l^H, c_l]]`. Form 0 is the objective.
#[derive(Debug, Clone)]
pub struct QuadraticFormSet {
    pub forms: Vec<CMatrix>,
}

impl QuadraticFormSet {
    pub fn new(forms: Vec<CMatrix>) -> Result<Self> {
        let n = forms.first().map(|f| f.nrows()).ok_or_else(|| Error::InvalidArgument("empty form set".into()))?;
        for f in &forms {
            if f.shape() != (n, n) {
                return Err(Error::InvalidDimension("all forms must share one size".into()));
            }
            if (f - f.adjoint()).iter().any(|z| z.norm() > 1e-12) {
                return Err(Error::InvalidArgument("forms must be Hermitian".into()));
            }
        }
        Ok(Self { forms })
    }

    /// Objective `[[M, -b], [-b^H, -tau]]` followed by the norm form
    /// `diag(I, -1)` and the geometry forms of `inst`.
    pub fn from_instance(inst: &SdpInstance, tau: f64) -> Result<Self> {
        let n = inst.dim();
        let mut q0 = CMatrix::zeros(n + 1, n + 1);
        q0.view_mut((0, 0), (n, n)).copy_from(&inst.m);
        for i in 0..n {
            q0[(i, n)] = -inst.b[i];
            q0[(n, i)] = -inst.b[i].conj();
        }
        q0[(n, n)] = Complex64::new(-tau, 0.0);
        let mut forms = vec![q0];
        let mut q1 = CMatrix::identity(n + 1, n + 1);
        q1[(n, n)] = -ONE;
        forms.push(q1);
        for a in inst.real_constraints.iter().chain(&inst.imag_constraints) {
            let mut q = CMatrix::zeros(n + 1, n + 1);
            q.view_mut((0, 0), (n, n)).copy_from(a);
            forms.push(q);
        }
        Self::new(forms)
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn size(&self) -> usize {
        self.forms[0].nrows()
    }

    pub fn eval(&self, l: usize, x: &CVector) -> f64 {
        x.dotc(&(&self.forms[l] * x)).re
    }

    /// `A_l`, `d_l`, `c_l` blocks of form `l`.
    pub fn blocks(&self, l: usize) -> (CMatrix, CVector, f64) {
        let n = self.size() - 1;
        let f = &self.forms[l];
        (f.view((0, 0), (n, n)).clone_owned(), f.view((0, n), (n, 1)).column(0).clone_owned(), f[(n, n)].re)
    }

    /// `Q_0 + sum_l rho_l Q_l` for `l >= 1`.
    pub fn lmi(&self, rho: &[f64]) -> Result<CMatrix> {
        if rho.len() + 1 != self.len() {
            return Err(Error::InvalidArgument(format!("expected {} multipliers, got {}", self.len() - 1, rho.len())));
        }
        let mut z = self.forms[0].clone();
        for (f, r) in self.forms[1..].iter().zip(rho) {
            z += f * Complex64::new(*r, 0.0);
        }
        Ok(z)
    }
}

/// Rows: the norm form, then the real and imaginary geometry forms, evaluated
/// at `x_i = [f_i; 0]` (DFT columns) and `x_{N+1} = [0; sqrt(N)]`.
pub fn regularity_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidDimension(format!("regularity matrix is defined for odd N >= 3, got {n}")));
    }
    let inst = SdpInstance::new(CMatrix::identity(n, n), CVector::zeros(n), 0.0)?;
    let qset = QuadraticFormSet::from_instance(&inst, 0.0)?;
    let f = dft_matrix(n)?;
    let mut points = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut x = CVector::from_element(n + 1, ZERO);
        x.rows_mut(0, n).copy_from(&f.column(i));
        points.push(x);
    }
    let mut last = CVector::from_element(n + 1, ZERO);
    last[n] = Complex64::new((n as f64).sqrt(), 0.0);
    points.push(last);
    // skip the objective form
    Ok(DMatrix::from_fn(n, n + 1, |r, c| qset.eval(r + 1, &points[c])))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub n: usize,
    pub rank: usize,
    /// `max |Q 1|`.
    pub row_sum_residual: f64,
    pub first_row: Vec<f64>,
}

impl RegularityReport {
    pub fn passes(&self) -> bool {
        self.rank == self.n && self.row_sum_residual < 1e-12
    }
}

fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel * smax).count()
}

pub fn check_regularity(n: usize) -> Result<RegularityReport> {
    let q = regularity_matrix(n)?;
    let rank = numerical_rank(&q, 1e-10);
    let ones = nalgebra::DVector::from_element(n + 1, 1.0);
    let row_sum_residual = (&q * ones).amax();
    Ok(RegularityReport { n, rank, row_sum_residual, first_row: q.row(0).iter().copied().collect() })
}

/// The `(N-1) x N` matrix of the eigenvalue rows `cos(2 pi n l / N)` and
/// `sin(2 pi n l / N)`, `l = 1..(N-1)/2`, acting on `|y_n|^2`.
pub fn qmatnew(n: usize) -> Result<DMatrix<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidDimension(format!("null-space system is defined for odd N >= 3, got {n}")));
    }
    let h = (n - 1) / 2;
    Ok(DMatrix::from_fn(n - 1, n, |r, c| {
        let (l, sine) = if r < h { (r + 1, false) } else { (r + 1 - h, true) };
        let a = TAU * (c * l) as f64 / n as f64;
        if sine {
            a.sin()
        } else {
            a.cos()
        }
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct NullspaceReport {
    pub n: usize,
    pub rank: usize,
    /// `||Q_new v||` at `v = 1/N`.
    pub residual: f64,
    /// Distance of the normalized null vector from `1/sqrt(N)` (sign fixed).
    pub direction_error: f64,
    /// Whether the null vector can be scaled to be nonnegative.
    pub nonnegative: bool,
}

impl NullspaceReport {
    pub fn passes(&self) -> bool {
        self.rank == self.n - 1 && self.residual < 1e-12 && self.direction_error < 1e-12 && self.nonnegative
    }
}

pub fn nullspace_report(q: &DMatrix<f64>) -> NullspaceReport {
    let n = q.ncols();
    let rank = numerical_rank(q, 1e-10);
    let v = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let residual = (q * &v).norm();
    // smallest right singular vector of the padded square system
    let mut sq = DMatrix::<f64>::zeros(n, n);
    sq.view_mut((0, 0), (q.nrows(), n)).copy_from(q);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t computed");
    let (imin, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &s)| if s < a.1 { (i, s) } else { a });
    let mut null: Vec<f64> = vt.row(imin).iter().copied().collect();
    let sum: f64 = null.iter().sum();
    if sum < 0.0 {
        null.iter_mut().for_each(|x| *x = -*x);
    }
    let target = 1.0 / (n as f64).sqrt();
    let direction_error = null.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
    let nonnegative = null.iter().all(|&x| x >= -1e-12);
    NullspaceReport { n, rank, residual, direction_error, nonnegative }
}

pub fn qmatnew_nullspace(n: usize) -> Result<NullspaceReport> {
    Ok(nullspace_report(&qmatnew(n)?))
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Minimum of the full cost `J` (constant term included).
    pub p_star: f64,
    pub phases: Vec<f64>,
    pub gamma: Vec<Complex64>,
    pub grid_resolution: usize,
    pub refinement_sweeps: usize,
    pub geometry_residual: f64,
}

/// Grid resolution per axis used by [`primal_oracle`].
pub fn default_grid(n: usize) -> usize {
    match n {
        0..=3 => 64,
        4 => 40,
        _ => 24,
    }
}

const REFINE_STARTS: usize = 8;
const MAX_SWEEPS: usize = 100_000;

struct Reduced {
    a: CMatrix,
    c: CVector,
    const_term: f64,
    amp: f64,
}

impl Reduced {
    fn new(m: &CMatrix, b: &CVector, const_term: f64) -> Result<Self> {
        let n = m.nrows();
        let f = dft_matrix(n)?;
        Ok(Self { a: f.adjoint() * m * &f, c: f.adjoint() * b, const_term, amp: 1.0 / (n as f64).sqrt() })
    }

    fn objective(&self, x: &[Complex64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            let mut ax = ZERO;
            for j in 0..n {
                ax += self.a[(i, j)] * x[j];
            }
            s += (x[i].conj() * ax).re - 2.0 * (self.c[i].conj() * x[i]).re;
        }
        s
    }

    fn point(&self, phases: &[f64]) -> Vec<Complex64> {
        phases.iter().map(|&p| Complex64::from_polar(self.amp, p)).collect()
    }

    /// Closed-form coordinate descent on the torus.
    fn refine(&self, phases: &mut [f64]) -> usize {
        let n = phases.len();
        let mut x = self.point(phases);
        let mut val = self.objective(&x);
        for sweep in 1..=MAX_SWEEPS {
            let mut max_move: f64 = 0.0;
            for i in 0..n {
                let mut g = -self.c[i];
                for j in 0..n {
                    if j != i {
                        g += self.a[(i, j)] * x[j];
                    }
                }
                if g.norm() == 0.0 {
                    continue;
                }
                let new = (-g).arg();
                let d = crate::phase_noise::wrap_angle(new - phases[i]).abs();
                max_move = max_move.max(d);
                phases[i] = new;
                x[i] = Complex64::from_polar(self.amp, new);
            }
            let nv = self.objective(&x);
            let stalled = (val - nv).abs() <= 1e-15 * (1.0 + nv.abs());
            val = nv;
            if max_move < 1e-10 || stalled {
                return sweep;
            }
        }
        MAX_SWEEPS
    }
}

/// Global minimum of `J(g) = g^H M g - 2 Re(b^H g) + const` over
/// `g = F~ x`, `|x_i| = 1/sqrt(N)`, by an exhaustive phase grid followed by
/// coordinate descent from the best grid points. Ties on the grid go to the
/// lexicographically smallest phase tuple.
pub fn primal_oracle(m: &CMatrix, b: &CVector, const_term: f64, grid: usize) -> Result<OracleResult> {
    let n = m.nrows();
    if n == 0 || b.len() != n || !m.is_square() {
        return Err(Error::InvalidDimension("oracle needs square M and matching b".into()));
    }
    if n > 6 {
        return Err(Error::InvalidDimension(format!("exhaustive oracle limited to N <= 6, got {n}")));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let red = Reduced::new(m, b, const_term)?;
    let total = grid.pow(n as u32);
    let step = TAU / grid as f64;
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut ph = vec![0.0; n];
        for k in (0..n).rev() {
            ph[k] = (idx % grid) as f64 * step;
            idx /= grid;
        }
        ph
    };
    // keep the best few grid points per chunk, then merge
    let mut best: Vec<(f64, usize)> = (0..total)
        .into_par_iter()
        .fold(Vec::new, |mut acc: Vec<(f64, usize)>, idx| {
            let v = red.objective(&red.point(&decode(idx)));
            push_best(&mut acc, (v, idx));
            acc
        })
        .reduce(Vec::new, |mut a, b| {
            for e in b {
                push_best(&mut a, e);
            }
            a
        });
    best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut winner: Option<(f64, Vec<f64>, usize)> = None;
    for &(_, idx) in best.iter() {
        let mut ph = decode(idx);
        let sweeps = red.refine(&mut ph);
        let v = red.objective(&red.point(&ph));
        if winner.as_ref().is_none_or(|w| v < w.0) {
            winner = Some((v, ph, sweeps));
        }
    }
    let (v, phases, sweeps) = winner.expect("grid is non-empty");
    let x = CVector::from_vec(red.point(&phases));
    let gamma = dft_matrix(n)? * x;
    let geometry_residual = geometry_residual(&gamma).max_abs;
    Ok(OracleResult {
        p_star: v + red.const_term,
        phases: phases.iter().map(|p| p.rem_euclid(TAU)).collect(),
        gamma: gamma.iter().copied().collect(),
        grid_resolution: grid,
        refinement_sweeps: sweeps,
        geometry_residual,
    })
}

fn push_best(acc: &mut Vec<(f64, usize)>, e: (f64, usize)) {
    acc.push(e);
    if acc.len() > 4 * REFINE_STARTS {
        acc.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        acc.truncate(REFINE_STARTS);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub p_star: f64,
    pub d_star: f64,
    pub gap: f64,
    /// `|p* - d*| / (1 + |p*|)`.
    pub relative_gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl GapReport {
    pub fn strong(&self, tol: f64) -> bool {
        self.status == SolveStatus::Optimal && self.relative_gap < tol
    }

    pub fn weak_ok(&self, slack: f64) -> bool {
        self.status == SolveStatus::Optimal && self.gap >= -slack
    }
}

/// `p* - d*` for the geometry-constrained problem, oracle against dual.
pub fn duality_gap(m: &CMatrix, b: &CVector, const_term: f64) -> Result<GapReport> {
    let inst = SdpInstance::new(m.clone(), b.clone(), const_term)?;
    duality_gap_for(&inst)
}

/// As [`duality_gap`] but with the instance's own constraint matrices on the
/// dual side; the oracle always uses the true constant-modulus set.
pub fn duality_gap_for(inst: &SdpInstance) -> Result<GapReport> {
    let n = inst.dim();
    let oracle = primal_oracle(&inst.m, &inst.b, inst.const_term, default_grid(n))?;
    let sol = solve_dual(inst, DEFAULT_TOL)?;
    let d_star = sol.dual_value(inst);
    let gap = oracle.p_star - d_star;
    Ok(GapReport {
        n,
        p_star: oracle.p_star,
        d_star,
        gap,
        relative_gap: gap.abs() / (1.0 + oracle.p_star.abs()),
        status: sol.status,
        iterations: sol.iterations,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random instance with the structure of the pilot LS problem:
/// `A` is `2N x N` complex Gaussian, the truth `g0` is feasible and
/// `w = A g0 + noise` with per-row noise variance `noise_var`.
pub fn ls_instance(n: usize, noise_var: f64, rng: &mut ChaCha8Rng) -> Result<SdpInstance> {
    let rows = 2 * n;
    let a = CMatrix::from_fn(rows, n, |_, _| gaussian(rng));
    let f = dft_matrix(n)?;
    let amp = 1.0 / (n as f64).sqrt();
    let x = CVector::from_fn(n, |_, _| Complex64::from_polar(amp, rng.random::<f64>() * TAU));
    let g0 = f * x;
    let sigma = noise_var.sqrt();
    let w = &a * g0 + CVector::from_fn(rows, |_, _| gaussian(rng) * sigma);
    SdpInstance::new(a.adjoint() * &a, a.adjoint() * &w, w.norm_squared())
}

/// Unstructured instance: `M = B^H B` with Gaussian `B` and Gaussian `b`.
pub fn arbitrary_instance(n: usize, rng: &mut ChaCha8Rng) -> Result<SdpInstance> {
    let bm = CMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let b = CVector::from_fn(n, |_, _| gaussian(rng));
    SdpInstance::new(bm.adjoint() * &bm, b, 0.0)
}

/// Copy of `inst` whose first real constraint is shifted by `0.5 I`, so the
/// dual no longer describes the constant-modulus set. Negative control.
pub fn corrupt_constraints(inst: &SdpInstance) -> Result<SdpInstance> {
    let n = inst.dim();
    let mut re = inst.real_constraints.clone();
    if let Some(first) = re.first_mut() {
        *first += CMatrix::identity(n, n) * Complex64::new(0.5, 0.0);
    }
    SdpInstance::with_constraints(inst.m.clone(), inst.b.clone(), inst.const_term, re, inst.imag_constraints.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct S2S1Report {
    pub lmi_min_eig: f64,
    /// Whether the LMI hypothesis held (min eigenvalue >= -1e-12).
    pub hypothesis_holds: bool,
    pub samples: usize,
    pub violations: usize,
    pub min_q0: f64,
    /// Largest `|q_l(x)|`, `l >= 1`, over the samples.
    pub max_constraint: f64,
}

/// Samples `x = [F~ u; z] / sqrt(2)` with `|u_i| = 1/sqrt(N)` and `|z| = 1`,
/// on which every constraint form vanishes, and counts points with
/// `q_0(x) < -1e-9`.
pub fn s2_implies_s1_check(qset: &QuadraticFormSet, rho: &[f64], samples: usize, seed: u64) -> Result<S2S1Report> {
    let lmi = qset.lmi(rho)?;
    let lmi_min_eig = min_eigenvalue(&lmi);
    let n = qset.size() - 1;
    let f = dft_matrix(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 1.0 / (n as f64).sqrt();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut violations = 0;
    let mut min_q0 = f64::INFINITY;
    let mut max_constraint: f64 = 0.0;
    for _ in 0..samples {
        let u = CVector::from_fn(n, |_, _| Complex64::from_polar(amp, rng.random::<f64>() * TAU));
        let xt = &f * u;
        let mut x = CVector::from_element(n + 1, ZERO);
        x.rows_mut(0, n).copy_from(&(xt * Complex64::new(half, 0.0)));
        x[n] = Complex64::from_polar(half, rng.random::<f64>() * TAU);
        for l in 1..qset.len() {
            max_constraint = max_constraint.max(qset.eval(l, &x).abs());
        }
        let q0 = qset.eval(0, &x);
        min_q0 = min_q0.min(q0);
        if q0 < -1e-9 {
            violations += 1;
        }
    }
    Ok(S2S1Report { lmi_min_eig, hypothesis_holds: lmi_min_eig >= -1e-12, samples, violations, min_q0, max_constraint })
}

/// Multipliers `(lambda, alpha.., beta..)` of a dual solution in form order.
pub fn dual_multipliers(sol: &crate::sdp::SdpSolution) -> Vec<f64> {
    let mut rho = vec![sol.lambda];
    rho.extend_from_slice(&sol.alpha);
    rho.extend_from_slice(&sol.beta);
    rho
}

/// Geometry constraint count check shared with the estimators.
pub fn constraint_count(n: usize) -> Result<usize> {
    let (re, im) = geometry_constraints(n)?;
    Ok(1 + re.len() + im.len())
}
