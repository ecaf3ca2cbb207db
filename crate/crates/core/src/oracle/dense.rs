//! Dense eigenvalues of a Hermitian pencil (K, W) with diagonal W > 0.
//!
//! The pencil is reduced to W^{−1/2} K W^{−1/2}. A complex Hermitian matrix
//! H = X + iY is replaced by the real symmetric [[X, −Y], [Y, X]], whose
//! spectrum is that of H with every eigenvalue doubled. The real problem is
//! solved by Householder tridiagonalization and implicit-shift QR iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;

fn check(k: &DMatrix<Complex64>, w: &DVector<f64>) -> Result<()> {
    if k.nrows() != k.ncols() || k.nrows() != w.len() {
        return Err(Error::invalid(format!(
            "pencil dimensions {}x{} and {} do not match",
            k.nrows(),
            k.ncols(),
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::invalid(format!("mass weight at index {i} is not positive")));
    }
    Ok(())
}

fn is_real(k: &DMatrix<Complex64>) -> bool {
    k.iter().all(|z| z.im == 0.0)
}

fn scaled(k: &DMatrix<Complex64>, w: &DVector<f64>) -> DMatrix<Complex64> {
    let s: Vec<f64> = w.iter().map(|x| 1.0 / x.sqrt()).collect();
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * (s[i] * s[j]))
}

fn realify(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn solve(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = m.nrows();
    SymmetricEigen::try_new(m, f64::EPSILON, MAX_ITERATIONS).ok_or(Error::NoConvergence { index: n, iterations: MAX_ITERATIONS })
}

/// All eigenvalues of the pencil, ascending. For a complex K the realified
/// eigenvalues come in pairs; each pair is reported once.
pub fn dense_hermitian_eigenvalues(k: &DMatrix<Complex64>, w: &DVector<f64>) -> Result<Vec<f64>> {
    check(k, w)?;
    let h = scaled(k, w);
    if is_real(&h) {
        let mut ev: Vec<f64> = solve(h.map(|z| z.re))?.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        return Ok(ev);
    }
    let mut ev: Vec<f64> = solve(realify(&h))?.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

/// Eigenvalues and W-orthonormal eigenvectors of the pencil, ascending.
pub fn dense_hermitian_eigenpairs(k: &DMatrix<Complex64>, w: &DVector<f64>) -> Result<Vec<(f64, DVector<Complex64>)>> {
    check(k, w)?;
    let n = k.nrows();
    let h = scaled(k, w);
    let eig = solve(realify(&h))?;
    let mut idx: Vec<usize> = (0..2 * n).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let mut out = Vec::with_capacity(n);
    for pair in idx.chunks(2) {
        let j = pair[0];
        let col = eig.eigenvectors.column(j);
        // (x, y) ↦ x + iy maps realified eigenvectors to complex ones
        let v = DVector::from_fn(n, |i, _| Complex64::new(col[i], col[n + i]) / w[i].sqrt());
        let norm = v.iter().zip(w.iter()).map(|(z, wi)| z.norm_sqr() * wi).sum::<f64>().sqrt();
        out.push((eig.eigenvalues[j], v / Complex64::new(norm, 0.0)));
    }
    Ok(out)
}
