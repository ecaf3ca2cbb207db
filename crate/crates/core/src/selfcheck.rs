//! Small-scale run of the structural invariants of every module.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bands::small_eigenvalue_census;
use crate::error::Result;
use crate::modes::{degree_constants, enumerate_channels, gamma_pm, Channel, ChannelKind, ConePotential};
use crate::oracle::{assemble, dense::dense_hermitian_eigenpairs, oracle_eigenvalues, DEFAULT_N};
use crate::radial::{
    cone_propagator_scalar, monodromy, segment_propagator, ConeBasis, FloquetSolver,
    MatchingOptions, Monodromy, Profile,
};
use crate::transversal::{flat_torus, parse_spectrum, spectrum_to_json, Mu2, TransversalSpectrum};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed defect; compared against `tol`.
    pub value: f64,
    pub tol: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Matching used by the transfer-matrix side of the oracle comparison.
    pub matching: MatchingOptions,
    pub oracle_n: usize,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions { seed: 20_240_917, matching: MatchingOptions::default(), oracle_n: DEFAULT_N }
    }
}

fn result(name: &str, value: f64, tol: f64, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed: value.is_finite() && value <= tol, value, tol, detail }
}

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Result<SelfcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let circle = flat_torus(&[2.0 * PI], 40.0)?;
    let torus = flat_torus(&[2.0 * PI, 2.0 * PI], 40.0)?;
    let checks = vec![
        gamma_identities(&mut rng, 200)?,
        monodromy_structure(&mut rng, &circle, &torus)?,
        wronskian_constancy(&mut rng)?,
        flow_property(&mut rng)?,
        hermitian_residuals(&torus)?,
        spectrum_round_trip(&mut rng)?,
        zero_modes(&circle)?,
        oracle_agreement(&circle, opts)?,
    ];
    Ok(SelfcheckReport { seed: opts.seed, checks })
}

/// Largest relative defect of γ±(γ±+1) against the quadratic in λ and the
/// dense eigenvalues of the H5 cone block, over random (n, p, μ²).
pub fn gamma_identities<R: Rng>(rng: &mut R, cases: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for _ in 0..cases {
        let n = rng.gen_range(1..=6usize);
        let p = rng.gen_range(0..=(n as i64 + 1));
        let mu2 = 25.0 * (1.0 - rng.gen::<f64>());
        let e = h5_defect(n, p, mu2)?;
        if e > worst {
            worst = e;
            at = format!("n={n} p={p} mu2={mu2}");
        }
    }
    Ok(result("gamma identities", worst, 1e-12, format!("{cases} cases, worst at {at}")))
}

fn h5_defect(n: usize, p: i64, mu2: f64) -> Result<f64> {
    let ch = Channel::new(ChannelKind::H5, n, p, Mu2::Real(mu2), 1)?;
    let dc = degree_constants(n, p)?;
    let a = mu2 + num_traits::ToPrimitive::to_f64(&dc.f_pm2).unwrap_or(f64::NAN);
    let d = mu2 + num_traits::ToPrimitive::to_f64(&dc.f_p).unwrap_or(f64::NAN);
    let (gm, gp) = gamma_pm(mu2, num_traits::ToPrimitive::to_f64(&dc.a_p).unwrap_or(f64::NAN))?;
    let closed = [gm * (gm + 1.0), gp * (gp + 1.0)];
    // roots of (a − λ)(d − λ) = 4μ²
    let half = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + 4.0 * mu2).sqrt();
    let top = half + r;
    let quad = [(a * d - 4.0 * mu2) / top, top];
    let ConePotential::Pair(v) = ch.potential else { unreachable!("H5 channels carry a pair potential") };
    let eig = SymmetricEigen::new(Matrix2::new(v[0][0], v[0][1], v[1][0], v[1][1])).eigenvalues;
    let (e0, e1) = if eig[0] <= eig[1] { (eig[0], eig[1]) } else { (eig[1], eig[0]) };
    let scale = a.abs().max(d.abs()) + 2.0 * mu2.sqrt();
    let mut worst = 0.0f64;
    for (c, (q, e)) in closed.iter().zip(quad.iter().zip([e0, e1])) {
        worst = worst.max((c - q).abs() / scale).max((c - e).abs() / scale);
    }
    Ok(worst)
}

/// det M = 1 for scalar channels and MᵀJM = J for H5, relative to ‖M‖².
fn monodromy_structure<R: Rng>(rng: &mut R, circle: &TransversalSpectrum, torus: &TransversalSpectrum) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut j = SMatrix::<f64, 4, 4>::zeros();
    j.fixed_view_mut::<2, 2>(0, 2).copy_from(&Matrix2::identity());
    j.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-Matrix2::identity()));
    for (ts, p) in [(circle, 0), (circle, 1), (torus, 1)] {
        for ch in enumerate_channels(ts, p, 4.0)? {
            for &eps in &[0.5, 0.2, 0.05] {
                let profile = Profile::new(eps, PI, 1.0)?;
                let lambda = 10.0 * rng.gen::<f64>();
                let defect = match monodromy(&ch, lambda, &profile, &MatchingOptions::default())? {
                    Monodromy::Scalar(t) => {
                        (t.mat.determinant() - (-2.0 * t.log_scale).exp()).abs() / t.mat.norm_squared()
                    }
                    Monodromy::Pair(t) => {
                        let m = t.mat;
                        (m.transpose() * j * m - j * (-2.0 * t.log_scale).exp()).norm() / m.norm_squared()
                    }
                };
                worst = worst.max(defect);
                count += 1;
            }
        }
    }
    Ok(result("monodromy det/symplecticity", worst, 1e-10, format!("{count} monodromies")))
}

/// f g′ − f′ g of the Frobenius basis is constant in t.
fn wronskian_constancy<R: Rng>(rng: &mut R) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let gamma = -0.5 + 3.5 * rng.gen::<f64>();
        let lambda = -5.0 + 35.0 * rng.gen::<f64>();
        let b = ConeBasis::new(gamma, lambda, 1.0)?;
        let w = b.wronskian();
        for &t in &[0.02, 0.1, 0.4, 1.0] {
            worst = worst.max((b.fundamental(t).determinant() - w).abs() / (1.0 + w.abs()));
        }
    }
    Ok(result("wronskian constancy", worst, 1e-10, "40 random cone bases".into()))
}

/// Propagators over [a, c] equal the composition over [a, b] and [b, c].
fn flow_property<R: Rng>(rng: &mut R) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let mass2 = 20.0 * rng.gen::<f64>();
        let lambda = 30.0 * rng.gen::<f64>();
        let (l1, l2) = (0.1 + 2.0 * rng.gen::<f64>(), 0.1 + 2.0 * rng.gen::<f64>());
        let whole = segment_propagator(mass2, lambda, l1 + l2);
        let comp = segment_propagator(mass2, lambda, l2).then_after(&segment_propagator(mass2, lambda, l1));
        let diff = (comp.mat * (comp.log_scale - whole.log_scale).exp() - whole.mat).norm() / whole.mat.norm();
        worst = worst.max(diff);
        let gamma = -0.5 + 3.0 * rng.gen::<f64>();
        let (t0, t2) = (0.02 + 0.3 * rng.gen::<f64>(), 0.6 + 0.4 * rng.gen::<f64>());
        let t1 = 0.5 * (t0 + t2);
        let whole = cone_propagator_scalar(gamma, lambda, t0, t2)?;
        let comp = cone_propagator_scalar(gamma, lambda, t1, t2)?.then_after(&cone_propagator_scalar(gamma, lambda, t0, t1)?);
        let diff = (comp.mat * (comp.log_scale - whole.log_scale).exp() - whole.mat).norm() / whole.mat.norm();
        worst = worst.max(diff);
    }
    Ok(result("propagator flow property", worst, 1e-12, "40 random segment and cone splits".into()))
}

/// The assembled oracle matrix is Hermitian and its dense eigenpairs solve the pencil.
fn hermitian_residuals(torus: &TransversalSpectrum) -> Result<CheckResult> {
    let profile = Profile::new(0.2, PI, 1.0)?;
    let mut worst = 0.0f64;
    for ch in enumerate_channels(torus, 1, 2.5)? {
        let form = assemble(&ch, PI / 3.0, &profile, 60)?;
        let (k, w) = form.to_dense();
        let knorm = k.norm();
        worst = worst.max((&k - k.adjoint()).norm() / knorm);
        for (lambda, v) in dense_hermitian_eigenpairs(&k, &w)?.into_iter().take(8) {
            let wv = v.component_mul(&w.map(|x| num_complex::Complex64::new(x, 0.0)));
            let r = (&k * &v - wv * num_complex::Complex64::new(lambda, 0.0)).norm() / (knorm * v.norm());
            worst = worst.max(r);
        }
    }
    Ok(result("hermitian residuals", worst, 1e-10, "oracle blocks on the square torus, p=1".into()))
}

/// A spectrum written and parsed back serializes to the same text with bit-equal levels.
fn spectrum_round_trip<R: Rng>(rng: &mut R) -> Result<CheckResult> {
    let sides = [2.0 * PI * (0.5 + rng.gen::<f64>()), 2.0 * PI * (0.5 + rng.gen::<f64>())];
    let cases = [flat_torus(&[4.0 * PI], 20.0)?, flat_torus(&[2.0 * PI, 2.0 * PI], 10.0)?, flat_torus(&sides, 10.0)?];
    let mut mismatches = 0usize;
    for ts in &cases {
        let text = spectrum_to_json(ts);
        let back = parse_spectrum(&text)?;
        if spectrum_to_json(&back) != text || !same_spectrum(ts, &back) {
            mismatches += 1;
        }
    }
    Ok(result("spectrum round-trip", mismatches as f64, 0.0, format!("{} spectra", cases.len())))
}

fn same_spectrum(a: &TransversalSpectrum, b: &TransversalSpectrum) -> bool {
    a.n == b.n
        && a.label == b.label
        && a.cutoff.to_bits() == b.cutoff.to_bits()
        && a.betti == b.betti
        && a.coexact.len() == b.coexact.len()
        && a.coexact.iter().zip(&b.coexact).all(|(x, y)| {
            x.len() == y.len()
                && x.iter().zip(y).all(|(l, m)| {
                    l.mult == m.mult && l.mu2.value().to_bits() == m.mu2.value().to_bits() && l.mu2.is_exact() == m.mu2.is_exact()
                })
        })
}

/// θ = 0 kernel equals b_p + b_{p−1}, and no band reaches 0 at θ = π.
fn zero_modes(circle: &TransversalSpectrum) -> Result<CheckResult> {
    let profile = Profile::new(0.1, PI, 1.0)?;
    let mut bad = 0usize;
    let mut detail = Vec::new();
    for p in 0..=2 {
        let c = small_eigenvalue_census(circle, p, &profile, 0.5)?;
        if c.zero_modes != c.kunneth {
            bad += 1;
        }
        let mut at_pi = f64::INFINITY;
        for ch in enumerate_channels(circle, p, 1.0)? {
            let mut s = FloquetSolver::new(&ch, &profile, 1.0, MatchingOptions::default())?;
            if let Some(&x) = s.eigenvalues(PI, 1.0, 1e-12)?.first() {
                at_pi = at_pi.min(x);
            }
        }
        if !(at_pi > 1e-8) {
            bad += 1;
        }
        detail.push(format!("p={p}: {} zero modes, min at pi {at_pi:.3e}", c.zero_modes));
    }
    Ok(result("zero modes", bad as f64, 0.0, detail.join("; ")))
}

/// Transfer-matrix eigenvalues against the Richardson-extrapolated oracle.
fn oracle_agreement(circle: &TransversalSpectrum, opts: &SelfcheckOptions) -> Result<CheckResult> {
    let profile = Profile::new(0.2, PI, 1.0)?;
    let theta = PI / 3.0;
    let lambda_max = 6.0;
    let mut worst = 0.0f64;
    let mut count_mismatch = 0usize;
    for p in [0, 1] {
        for ch in enumerate_channels(circle, p, lambda_max)? {
            let mut s = FloquetSolver::new(&ch, &profile, lambda_max, opts.matching)?;
            let tm = s.eigenvalues(theta, lambda_max, 1e-12)?;
            let or = oracle_eigenvalues(&ch, theta, &profile, lambda_max, opts.oracle_n, true)?;
            let tm: Vec<f64> = tm.into_iter().filter(|x| *x < lambda_max - 1e-3).collect();
            let or: Vec<f64> = or.into_iter().filter(|x| *x < lambda_max - 1e-3).collect();
            if tm.len() != or.len() {
                count_mismatch += 1;
            }
            for (a, b) in tm.iter().zip(&or) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let value = if count_mismatch > 0 { f64::INFINITY } else { worst };
    Ok(result("oracle agreement", value, 1e-5, format!("{count_mismatch} channels with count mismatch")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_on_the_default_seed() {
        let report = run_selfcheck(&SelfcheckOptions::default()).unwrap();
        for c in &report.checks {
            eprintln!("{} {} {:.3e} ({})", c.name, c.passed, c.value, c.detail);
        }
        assert!(report.passed());
    }

    #[test]
    fn flipped_interface_weights_fail_the_oracle_check() {
        let circle = flat_torus(&[2.0 * PI], 40.0).unwrap();
        let mut opts = SelfcheckOptions::default();
        opts.matching.flip_interface_weights = true;
        assert!(!oracle_agreement(&circle, &opts).unwrap().passed);
    }
}
