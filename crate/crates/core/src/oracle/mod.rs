//! Finite-difference reference solver built from the first-order form.
//!
//! Each channel's quadratic form over one period is
//!
//! ```text
//! q(σ) = ∫ |σ′ + B(τ)σ|² + |C(τ)σ|² dτ,     σ(τ + T) = e^{iθ} σ(τ),
//! ```
//!
//! with `B = (ρ′/ρ)·W + A₀/ρ` and `C = μ/ρ` on the scalar exact/coexact
//! channels. `W` is the diagonal of interface weights and `A₀` the
//! off-diagonal H5 coupling `−μ` between β and α. On a cone (ρ = t) this
//! reproduces the `c/t²` potentials, on a flat piece the mass `μ²/ρ²`, and
//! the natural boundary conditions of the form are the junction maps of the
//! transfer-matrix solver. Smoothed profiles are handled the same way.
//!
//! The form is discretized element by element with midpoint values of B
//! and C and the average of the two end values of σ; the mass matrix uses
//! trapezoid weights. Eigenvalues come from inertia counts of `K − λW`:
//! the nodes other than node 0 form a block-tridiagonal chain, factored by a
//! block Sturm recursion, and node 0 enters through its Schur complement.

mod chain;
pub mod dense;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::modes::{Channel, ChannelKind};
use crate::radial::Profile;

pub use chain::Inertia;
pub use dense::{dense_hermitian_eigenvalues, dense_hermitian_eigenpairs};

/// Highest grid refinement relative to the unit cylinder.
pub const MAX_DENSITY: f64 = 8.0;
/// Default number of base elements per period.
pub const DEFAULT_N: usize = 2000;

/// First-order coefficients of the form at one point of the period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpCoefficient {
    /// Number of components (1 or 2).
    pub dim: usize,
    /// B in component order (β, α) for H5.
    pub b: [[f64; 2]; 2],
    /// Coefficient of the zeroth-order term, μ/ρ on H3/H4 and 0 otherwise.
    pub c: f64,
}

/// B(τ) and C(τ) for `channel` at `tau`.
pub fn warp_coefficient(channel: &Channel, profile: &Profile, tau: f64) -> Result<WarpCoefficient> {
    let (rho, drho) = profile.rho(tau);
    if !(rho > 0.0) {
        return Err(Error::numerical(format!("warp radius vanishes at tau = {tau}")));
    }
    let log_slope = drho / rho;
    let w = channel.weights();
    let mu = channel.mu();
    let mut b = [[0.0; 2]; 2];
    let mut c = 0.0;
    match channel.kind {
        ChannelKind::H1 | ChannelKind::H2 => b[0][0] = w[0] * log_slope,
        ChannelKind::H3 | ChannelKind::H4 => {
            b[0][0] = w[0] * log_slope;
            c = mu / rho;
        }
        ChannelKind::H5 => {
            b[0][0] = w[0] * log_slope;
            b[1][1] = w[1] * log_slope;
            b[0][1] = -mu / rho;
            b[1][0] = -mu / rho;
        }
    }
    Ok(WarpCoefficient { dim: channel.dim(), b, c })
}

/// Nodes of a periodic grid on [0, T[; element j joins node j to node j+1
/// and the last element wraps around to node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub period: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self, j: usize) -> f64 {
        let next = if j + 1 == self.nodes.len() { self.period } else { self.nodes[j + 1] };
        next - self.nodes[j]
    }
}

/// Element counts per piece of the period for base size `n`.
///
/// Pieces are delimited by the segment ends, the smoothing zones and a
/// geometric subdivision of each cone at ρ = 2ᵏε. The element density of a
/// piece is `n/T · min(8, 1/ρ_min)`.
pub fn piece_counts(profile: &Profile, n: usize) -> Result<Vec<(f64, f64, usize)>> {
    if n < 8 {
        return Err(Error::invalid(format!("grid size {n} is too small")));
    }
    let period = profile.period();
    let mut pts = profile.breakpoints();
    if profile.eps < 1.0 {
        let segs = profile.segments();
        let (rc, lc) = (segs[1], segs[3]);
        let mut r = 2.0 * profile.eps;
        while r < 1.0 {
            let d = r - profile.eps;
            pts.push(rc.start + d);
            pts.push(lc.end - d);
            r *= 2.0;
        }
    }
    pts.retain(|t| *t >= 0.0 && *t <= period);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let h0 = period / n as f64;
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1e-12 {
            continue;
        }
        let rho_min = profile.piecewise(a + 1e-13).0.min(profile.piecewise(b - 1e-13).0);
        let density = (1.0 / rho_min).min(MAX_DENSITY).max(1.0);
        let count = ((b - a) * density / h0).ceil().max(1.0) as usize;
        out.push((a, b, count));
    }
    Ok(out)
}

/// Grid with `refine` times the element count of [`piece_counts`].
pub fn make_grid(profile: &Profile, n: usize, refine: usize) -> Result<Grid> {
    let mut nodes = Vec::new();
    for (a, b, count) in piece_counts(profile, n)? {
        let m = count * refine.max(1);
        for i in 0..m {
            nodes.push(a + (b - a) * i as f64 / m as f64);
        }
    }
    Ok(Grid { nodes, period: profile.period() })
}

/// Discretized form of one channel: the Hermitian stiffness matrix K in
/// block form and the diagonal mass W.
#[derive(Clone, Debug)]
pub struct FormMatrix {
    pub dim: usize,
    pub grid: Grid,
    pub theta: f64,
    /// Diagonal blocks K_{jj}, row-major c×c.
    pub diag: Vec<[[Complex64; 2]; 2]>,
    /// Coupling blocks K_{j,j+1} (node j+1 taken modulo the grid size).
    pub upper: Vec<[[Complex64; 2]; 2]>,
    /// Trapezoid weight per node.
    pub weight: Vec<f64>,
    chain: chain::Chain,
}

type Block = [[Complex64; 2]; 2];

fn zero_block() -> Block {
    [[Complex64::new(0.0, 0.0); 2]; 2]
}

/// Assembles the form of `channel` at quasi-momentum θ on the grid of size n.
pub fn assemble(channel: &Channel, theta: f64, profile: &Profile, n: usize) -> Result<FormMatrix> {
    assemble_on(channel, theta, profile, make_grid(profile, n, 1)?)
}

/// Assembles the form on a given grid.
pub fn assemble_on(channel: &Channel, theta: f64, profile: &Profile, grid: Grid) -> Result<FormMatrix> {
    let nn = grid.len();
    if nn < 3 {
        return Err(Error::invalid("the oracle grid needs at least three nodes"));
    }
    let c = channel.dim();
    let phase = Complex64::from_polar(1.0, theta);
    let mut diag = vec![zero_block(); nn];
    let mut upper = vec![zero_block(); nn];
    let mut weight = vec![0.0; nn];
    for j in 0..nn {
        let h = grid.step(j);
        if !(h > 0.0) {
            return Err(Error::invalid(format!("non-positive grid step at node {j}")));
        }
        let mid = grid.nodes[j] + 0.5 * h;
        let wc = warp_coefficient(channel, profile, mid)?;
        let wrap = j + 1 == nn;
        let ph = if wrap { phase } else { Complex64::new(1.0, 0.0) };
        // element residual: P σ_{j+1} + Q σ_j with P = I/h + B/2, Q = −I/h + B/2
        let mut pm = [[0.0; 2]; 2];
        let mut qm = [[0.0; 2]; 2];
        for a in 0..c {
            for b in 0..c {
                let id = if a == b { 1.0 / h } else { 0.0 };
                pm[a][b] = id + 0.5 * wc.b[a][b];
                qm[a][b] = -id + 0.5 * wc.b[a][b];
            }
        }
        let k = (j + 1) % nn;
        let c2 = 0.25 * wc.c * wc.c;
        for a in 0..c {
            for b in 0..c {
                let mut qq = 0.0;
                let mut pp = 0.0;
                let mut qp = 0.0;
                for r in 0..c {
                    qq += qm[r][a] * qm[r][b];
                    pp += pm[r][a] * pm[r][b];
                    qp += qm[r][a] * pm[r][b];
                }
                if a == b {
                    qq += c2;
                    pp += c2;
                    qp += c2;
                }
                diag[j][a][b] += Complex64::new(h * qq, 0.0);
                diag[k][a][b] += Complex64::new(h * pp, 0.0);
                upper[j][a][b] += ph * (h * qp);
            }
        }
        weight[j] += 0.5 * h;
        weight[k] += 0.5 * h;
    }
    let chain = chain::Chain::new(c, &diag, &upper, &weight);
    Ok(FormMatrix { dim: c, grid, theta, diag, upper, weight, chain })
}

impl FormMatrix {
    /// Number of unknowns.
    pub fn size(&self) -> usize {
        self.dim * self.grid.len()
    }

    /// Dense K and the diagonal of W, in node-major order.
    pub fn to_dense(&self) -> (DMatrix<Complex64>, DVector<f64>) {
        let nn = self.grid.len();
        let c = self.dim;
        let mut k = DMatrix::<Complex64>::zeros(nn * c, nn * c);
        let mut w = DVector::<f64>::zeros(nn * c);
        for j in 0..nn {
            let next = (j + 1) % nn;
            for a in 0..c {
                w[j * c + a] = self.weight[j];
                for b in 0..c {
                    k[(j * c + a, j * c + b)] += self.diag[j][a][b];
                    k[(j * c + a, next * c + b)] += self.upper[j][a][b];
                    k[(next * c + b, j * c + a)] += self.upper[j][a][b].conj();
                }
            }
        }
        (k, w)
    }

    /// q(σ) = σ* K σ for a node-major coefficient vector.
    pub fn quadratic_form(&self, sigma: &[Complex64]) -> f64 {
        let nn = self.grid.len();
        let c = self.dim;
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..nn {
            let next = (j + 1) % nn;
            for a in 0..c {
                for b in 0..c {
                    let u = sigma[j * c + a].conj();
                    s += u * self.diag[j][a][b] * sigma[j * c + b];
                    s += u * self.upper[j][a][b] * sigma[next * c + b];
                    s += sigma[next * c + b].conj() * self.upper[j][a][b].conj() * sigma[j * c + a];
                }
            }
        }
        s.re
    }

    /// Inertia and log|det| of K − λW.
    pub fn inertia(&self, lambda: f64) -> Inertia {
        self.chain.factor(lambda)
    }

    /// Number of eigenvalues of the pencil (K, W) strictly below λ.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.inertia(lambda).negatives
    }

    /// Eigenvalues not exceeding `lambda_max`, ascending, to absolute
    /// tolerance `tol`. Inertia bisection isolates each eigenvalue, then the
    /// sign change of det(K − λW) is refined by the Illinois method.
    pub fn eigenvalues_below(&self, lambda_max: f64, tol: f64) -> Vec<f64> {
        let lo = -1.0;
        let ia = self.inertia(lo);
        let ib = self.inertia(lambda_max);
        let mut out = Vec::new();
        self.split((lo, ia), (lambda_max, ib), tol.max(1e-14), &mut out);
        out
    }

    fn split(&self, a: (f64, Inertia), b: (f64, Inertia), tol: f64, out: &mut Vec<f64>) {
        let (ca, cb) = (a.1.negatives, b.1.negatives);
        if cb <= ca {
            return;
        }
        if b.0 - a.0 <= tol * b.0.abs().max(1.0) {
            out.extend(std::iter::repeat_n(0.5 * (a.0 + b.0), cb - ca));
            return;
        }
        if cb - ca == 1 {
            if let Some(root) = self.illinois(a, b, tol) {
                out.push(root);
                return;
            }
        }
        let m = 0.5 * (a.0 + b.0);
        let mut im = (m, self.inertia(m));
        // rounding can perturb the count right at a near-multiple eigenvalue
        im.1.negatives = im.1.negatives.clamp(ca, cb);
        self.split(a, im, tol, out);
        self.split(im, b, tol, out);
    }

    fn illinois(&self, a: (f64, Inertia), b: (f64, Inertia), tol: f64) -> Option<f64> {
        let reference = a.1.log_abs_det.max(b.1.log_abs_det);
        if !reference.is_finite() {
            return None;
        }
        let (mut x0, mut x1) = (a.0, b.0);
        let (mut f0, mut f1) = (a.1.scaled_det(reference), b.1.scaled_det(reference));
        if !(f0 * f1 < 0.0) {
            return None;
        }
        let mut side = 0;
        for _ in 0..100 {
            let x = (x0 * f1 - x1 * f0) / (f1 - f0);
            if !(x > x0 && x < x1) {
                return None;
            }
            let it = self.inertia(x);
            let fx = it.scaled_det(reference);
            if it.negatives == a.1.negatives {
                x0 = x;
                f0 = fx;
                if side == -1 {
                    f1 *= 0.5;
                }
                side = -1;
            } else if it.negatives == b.1.negatives {
                x1 = x;
                f1 = fx;
                if side == 1 {
                    f0 *= 0.5;
                }
                side = 1;
            } else {
                return None;
            }
            if x1 - x0 <= tol * x1.abs().max(1.0) {
                return Some(0.5 * (x0 + x1));
            }
            // bracket shrinks: require the signs to stay consistent with the counts
            if (f0 > 0.0) == (f1 > 0.0) {
                return None;
            }
        }
        None
    }
}

/// Eigenvalues of one channel at θ up to `lambda_max` from the grid of size
/// `n`, optionally Richardson-extrapolated with the nested grid of size 2n.
pub fn oracle_eigenvalues(
    channel: &Channel,
    theta: f64,
    profile: &Profile,
    lambda_max: f64,
    n: usize,
    richardson: bool,
) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0) {
        return Err(Error::invalid("oracle window must be positive"));
    }
    let reach = 1.2 * lambda_max + 1.0;
    let tol = 1e-13;
    let coarse = assemble_on(channel, theta, profile, make_grid(profile, n, 1)?)?.eigenvalues_below(reach, tol);
    if !richardson {
        return Ok(coarse.into_iter().filter(|l| *l <= lambda_max).collect());
    }
    let fine = assemble_on(channel, theta, profile, make_grid(profile, n, 2)?)?.eigenvalues_below(reach, tol);
    let m = coarse.len().min(fine.len());
    Ok((0..m).map(|i| (4.0 * fine[i] - coarse[i]) / 3.0).filter(|l| *l <= lambda_max).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transversal::Mu2;
    use std::f64::consts::PI;

    fn flat_circle() -> Profile {
        Profile::new(1.0, PI, PI).unwrap()
    }

    #[test]
    fn constant_mode_is_in_the_kernel() {
        let ch = Channel::new(ChannelKind::H2, 1, 0, Mu2::zero(), 1).unwrap();
        let f = assemble(&ch, 0.0, &flat_circle(), 200).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); f.size()];
        assert!(f.quadratic_form(&ones).abs() < 1e-12);
        let ev = f.eigenvalues_below(0.5, 1e-13);
        assert_eq!(ev.len(), 1);
        assert!(ev[0].abs() < 1e-12);
    }

    #[test]
    fn free_circle_eigenvalues() {
        let ch = Channel::new(ChannelKind::H2, 1, 0, Mu2::zero(), 1).unwrap();
        let ev = oracle_eigenvalues(&ch, 0.0, &flat_circle(), 4.5, 400, true).unwrap();
        assert_eq!(ev.len(), 5, "{ev:?}");
        for (e, want) in ev.iter().zip([0.0, 1.0, 1.0, 4.0, 4.0]) {
            assert!((e - want).abs() < 1e-8, "{e} vs {want} in {ev:?}");
        }
    }

    #[test]
    fn stiffness_is_hermitian() {
        let ch = Channel::new(ChannelKind::H5, 1, 1, Mu2::Real(1.0), 2).unwrap();
        let prof = Profile::new(0.2, 1.0, 1.0).unwrap();
        let f = assemble(&ch, 0.7, &prof, 100).unwrap();
        let (k, _) = f.to_dense();
        assert_eq!((&k - k.adjoint()).camax(), 0.0);
    }

    #[test]
    fn sturm_count_matches_dense() {
        let ch = Channel::new(ChannelKind::H5, 1, 1, Mu2::Real(1.0), 2).unwrap();
        let prof = Profile::new(0.2, 1.0, 1.0).unwrap();
        let f = assemble(&ch, 1.1, &prof, 60).unwrap();
        let (k, w) = f.to_dense();
        let dense = dense_hermitian_eigenvalues(&k, &w).unwrap();
        let sturm = f.eigenvalues_below(30.0, 1e-12);
        let m = dense.iter().filter(|x| **x <= 30.0).count();
        assert_eq!(m, sturm.len());
        for (a, b) in sturm.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
