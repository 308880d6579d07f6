//! Self-check suites behind `pnest verify`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dimred::{pc_ppt, validate_ppt};
use crate::error::Result;
use crate::estimators::{error_decomposition, total_error};
use crate::phase_noise::{spectral_vector, time_samples};
use crate::spectral::{geometry_residual, UnitaryDft};
use crate::sproc::{check_regularity, corrupt_constraints, duality_gap_for, ls_instance, qmatnew_nullspace};

pub const GAP_TOL: f64 = 1e-3;
pub const WEAK_SLACK: f64 = 1e-6;
pub const PPT_TOL: f64 = 1e-12;
pub const LIFT_TOL: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub quick: bool,
    /// Feed the corrupted-constraint fixture into the duality-gap suite.
    pub inject_fault: bool,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { quick: false, inject_fault: false, seed: 2024 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.suites {
            writeln!(f, "[{}] {}", if s.passed { "PASS" } else { "FAIL" }, s.name)?;
            for i in &s.items {
                writeln!(f, "    {i}")?;
            }
        }
        Ok(())
    }
}

pub fn regularity_suite(ns: &[usize]) -> Result<SuiteResult> {
    let mut items = Vec::new();
    let mut passed = true;
    for &n in ns {
        let r = check_regularity(n)?;
        let q = qmatnew_nullspace(n)?;
        let ok = r.passes() && q.passes();
        passed &= ok;
        items.push(format!(
            "N={n}: rank(Q)={} row-sum residual={:.1e}; reduced-Q rank={} null-direction error={:.1e} {}",
            r.rank,
            r.row_sum_residual,
            q.rank,
            q.direction_error,
            if ok { "ok" } else { "FAILED" }
        ));
    }
    Ok(SuiteResult { name: "regularity".into(), passed, items })
}

pub fn ppt_suite(cases: &[(usize, usize)], samples: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut passed = true;
    for &(nc, n) in cases {
        let model = pc_ppt(nc, n)?;
        let report = validate_ppt(model.t_tilde.as_ref().expect("ppt keeps its interpolator"));
        let dft_n = UnitaryDft::new(n)?;
        let mut worst_lift: f64 = 0.0;
        for _ in 0..samples {
            let phases: Vec<f64> = (0..n).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
            let x: Vec<Complex64> = phases.iter().map(|&p| Complex64::from_polar(1.0 / (n as f64).sqrt(), p)).collect();
            let gamma = DVector::from_vec(dft_n.forward(&x));
            let delta = model.lift(&gamma)?;
            worst_lift = worst_lift.max(geometry_residual(&delta.values).max_abs);
        }
        let ok = report.passes(PPT_TOL) && worst_lift < LIFT_TOL;
        passed &= ok;
        items.push(format!(
            "(N_c,N)=({nc},{n}): orthonormality={:.1e} cross={:.1e} diagonal-sum={:.1e} lift residual={:.1e} {}",
            report.orthonormality,
            report.cross_terms,
            report.diagonal_sum,
            worst_lift,
            if ok { "ok" } else { "FAILED" }
        ));
    }
    Ok(SuiteResult { name: "ppt-validation".into(), passed, items })
}

/// Duality gap on LS-structured instances. With `inject_fault` every instance
/// has its first constraint corrupted.
pub fn gap_suite(plan: &[(usize, usize)], seed: u64, inject_fault: bool) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut passed = true;
    for &(n, count) in plan {
        let (mut worst_rel, mut worst_weak, mut fails) = (0.0f64, 0.0f64, 0usize);
        for _ in 0..count {
            let mut inst = ls_instance(n, 0.01, &mut rng)?;
            if inject_fault {
                inst = corrupt_constraints(&inst)?;
            }
            let g = duality_gap_for(&inst)?;
            worst_rel = worst_rel.max(g.relative_gap);
            worst_weak = worst_weak.max(g.d_star - g.p_star);
            if !(g.strong(GAP_TOL) && g.weak_ok(WEAK_SLACK)) {
                fails += 1;
            }
        }
        passed &= fails == 0;
        items.push(format!(
            "N={n}: {count} instances, worst relative gap={worst_rel:.2e}, worst d*-p*={worst_weak:.2e}, failures={fails}"
        ));
    }
    let name = if inject_fault { "duality-gap (injected fault)" } else { "duality-gap" };
    Ok(SuiteResult { name: name.into(), passed, items })
}

/// The corrupted fixture must be caught: passes when the gap check fails.
pub fn negative_control(seed: u64) -> Result<SuiteResult> {
    let inner = gap_suite(&[(3, 2)], seed, true)?;
    let caught = !inner.passed;
    let mut items = inner.items;
    items.push(if caught { "corrupted constraints detected".into() } else { "corrupted constraints NOT detected".into() });
    Ok(SuiteResult { name: "negative-control".into(), passed: caught, items })
}

/// Closed-form error decomposition against the direct sum.
pub fn identity_suite(pairs: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..pairs {
        let nc = [8usize, 16, 64][i % 3];
        let dft = UnitaryDft::new(nc)?;
        let theta: Vec<f64> = (0..nc).map(|_| rng.random_range(-3.0..3.0)).collect();
        let delta = spectral_vector(&theta);
        let dh: Vec<Complex64> = delta
            .as_slice()
            .iter()
            .map(|z| z + Complex64::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)))
            .collect();
        let d = error_decomposition(&dft, &dh, &theta)?;
        let x = time_samples(&dft, &dh);
        let direct: f64 = x
            .iter()
            .zip(&theta)
            .map(|(xi, t)| (xi - Complex64::from_polar(1.0 / nc as f64, -t)).norm_sqr())
            .sum();
        worst = worst.max((d.total - direct).abs());
    }
    let anchor = total_error(&[1.0; 64], &[0.2; 64]) * 64.0;
    let expected = 2.0 * (1.0 - 0.2f64.cos());
    let anchor_ok = (anchor - expected).abs() < 1e-10;
    let passed = worst < IDENTITY_TOL && anchor_ok;
    Ok(SuiteResult {
        name: "error-identity".into(),
        passed,
        items: vec![
            format!("{pairs} random pairs, worst |closed form - direct| = {worst:.2e}"),
            format!("kappa=1, omega=0.2: relative error {:.6}% (2(1-cos 0.2) = {:.6}%)", 100.0 * anchor, 100.0 * expected),
        ],
    })
}

pub fn verify(opts: VerifyOptions) -> Result<VerifyReport> {
    let (gap_plan, lift_samples, pairs): (Vec<(usize, usize)>, usize, usize) =
        if opts.quick { (vec![(3, 5), (5, 2)], 20, 200) } else { (vec![(3, 20), (5, 10)], 100, 1000) };
    let suites = vec![
        regularity_suite(&[3, 5, 7, 9])?,
        ppt_suite(&[(16, 4), (64, 8), (128, 8)], lift_samples, opts.seed)?,
        identity_suite(pairs, opts.seed)?,
        gap_suite(&gap_plan, opts.seed, opts.inject_fault)?,
        negative_control(opts.seed)?,
    ];
    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        assert!(regularity_suite(&[3, 5, 7, 9]).unwrap().passed);
        assert!(ppt_suite(&[(16, 4), (64, 8)], 10, 1).unwrap().passed);
        assert!(identity_suite(30, 1).unwrap().passed);
    }

    #[test]
    fn injected_fault_fails_the_gap_suite() {
        assert!(!gap_suite(&[(3, 2)], 5, true).unwrap().passed);
        assert!(negative_control(5).unwrap().passed);
    }
}
