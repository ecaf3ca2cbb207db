//! Monodromy of one period and the Floquet eigenvalue problem.
//!
//! The period is cut in the middle of the unit cylinder. The monodromy is
//!
//! ```text
//! M = P_cyl(l/2) · I_R(1) · C(ε→1) · I_R(ε)⁻¹ · P_h(L) · I_L(ε) · C(ε→1)⁻¹ · I_L(1)⁻¹ · P_cyl(l/2)
//! ```
//!
//! where C is the cone propagator in the cone's own radial frame and I_R, I_L
//! are the junction maps of [`interface_map`]. A Floquet eigenvalue at
//! quasi-momentum θ is a root of tr M − 2cos θ for scalar channels and of
//! y² − c₁y + c₂ − 2 at y = 2cos θ for the H5 channel (c₁ = tr M,
//! c₂ = sum of principal 2×2 minors). The H5 polynomial factors as
//! (y − d₊)(y − d₋) with real d± = (c₁ ± √(c₁² − 4c₂ + 8))/2, so each
//! branch d± = 2cos θ is solved like a scalar discriminant. This also
//! resolves the exact double roots of H5 channels whose two branches
//! coincide. All functions are evaluated on the scaled matrix so that narrow
//! bands deep inside the handle mass stay resolvable.

use nalgebra::SMatrix;

use super::profile::Profile;
use super::transfer::{
    cone_propagator_pair, cone_propagator_scalar, expand_pair, interface_map, segment_propagator, MatchingOptions,
    Side, Transfer,
};
use crate::error::{Error, Result};
use crate::modes::Channel;

/// Number of scan intervals over [0, λ_max].
pub const SCAN_INTERVALS: usize = 2000;
/// Default absolute root tolerance.
pub const ROOT_TOL: f64 = 1e-10;
/// θ grid size for the H5 band edges.
pub const PAIR_THETA_POINTS: usize = 65;
/// Bands narrower than this after root finding get a linearized width.
pub const NARROW_BAND: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub enum Monodromy {
    Scalar(Transfer<2>),
    Pair(Transfer<4>),
}

/// Invariants of a monodromy matrix in scaled form: the true trace is
/// c1·e^{s} and the true second invariant c2·e^{2s}.
#[derive(Clone, Copy, Debug)]
pub struct Invariants {
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub log_scale: f64,
    pub pair: bool,
}

impl Invariants {
    /// Number of discriminant branches: 1 for scalar channels, 2 for H5.
    pub fn branches(&self) -> usize {
        if self.pair {
            2
        } else {
            1
        }
    }

    /// Scaled discriminant branches d/e^{s}; for H5 ordered (d₊, d₋).
    pub fn branch_values(&self) -> [f64; 2] {
        if !self.pair {
            return [self.c1, self.c1];
        }
        let e2 = (-2.0 * self.log_scale).exp();
        let disc = (self.c1 * self.c1 - 4.0 * self.c2 + 8.0 * e2).max(0.0);
        let big = 0.5 * (self.c1 + self.c1.signum() * disc.sqrt());
        let small = if big != 0.0 { (self.c2 - 2.0 * e2) / big } else { 0.0 };
        [big.max(small), big.min(small)]
    }

    /// Branch function (d_b − y)/e^{s} whose roots are Floquet eigenvalues.
    pub fn branch_value(&self, branch: usize, y: f64) -> f64 {
        self.branch_values()[branch] - y * (-self.log_scale).exp()
    }

    /// Floquet function at y = 2cos θ, divided by e^{s} (scalar) or e^{2s} (pair).
    pub fn floquet_value(&self, y: f64) -> f64 {
        let e = (-self.log_scale).exp();
        if self.pair {
            self.c2 - self.c1 * y * e + (y * y - 2.0) * e * e
        } else {
            self.c1 - y * e
        }
    }

    /// tr M, possibly infinite.
    pub fn discriminant(&self) -> f64 {
        self.c1 * self.log_scale.exp()
    }

    fn magnitude(&self) -> f64 {
        1.0 + self.c1.abs() + self.c2.abs()
    }
}

impl Monodromy {
    pub fn invariants(&self, lambda: f64) -> Invariants {
        match self {
            Monodromy::Scalar(t) => {
                Invariants { lambda, c1: t.trace_scaled(), c2: 0.0, log_scale: t.log_scale, pair: false }
            }
            Monodromy::Pair(t) => Invariants {
                lambda,
                c1: t.trace_scaled(),
                c2: t.second_invariant_scaled(),
                log_scale: t.log_scale,
                pair: true,
            },
        }
    }

    pub fn log_scale(&self) -> f64 {
        match self {
            Monodromy::Scalar(t) => t.log_scale,
            Monodromy::Pair(t) => t.log_scale,
        }
    }
}

/// Monodromy of `channel` over one period of `profile` at spectral parameter λ.
pub fn monodromy(channel: &Channel, lambda: f64, profile: &Profile, opts: &MatchingOptions) -> Result<Monodromy> {
    if profile.eta != 0.0 {
        return Err(Error::invalid("the transfer-matrix solver needs an unsmoothed profile"));
    }
    let eps = profile.eps;
    let mu2 = channel.mu2.value();
    let cyl = segment_propagator(mu2, lambda, 0.5 * profile.outer_len);
    let handle = segment_propagator(mu2 / (eps * eps), lambda, profile.handle_len);
    if channel.is_pair() {
        let (cone, back) = if eps < 1.0 {
            (cone_propagator_pair(channel, lambda, eps, 1.0)?, cone_propagator_pair(channel, lambda, 1.0, eps)?)
        } else {
            (Transfer::identity(), Transfer::identity())
        };
        let m = assemble::<4>(channel, eps, opts, &expand_pair(&cyl), &expand_pair(&handle), &cone, &back)?;
        Ok(Monodromy::Pair(m))
    } else {
        let gamma = channel.gamma_list()[0];
        let cone = if eps < 1.0 { cone_propagator_scalar(gamma, lambda, eps, 1.0)? } else { Transfer::identity() };
        let m = assemble::<2>(channel, eps, opts, &cyl, &handle, &cone, &cone.unimodular_inverse())?;
        Ok(Monodromy::Scalar(m))
    }
}

fn assemble<const D: usize>(
    channel: &Channel,
    eps: f64,
    opts: &MatchingOptions,
    cyl: &Transfer<D>,
    handle: &Transfer<D>,
    cone: &Transfer<D>,
    cone_back: &Transfer<D>,
) -> Result<Transfer<D>> {
    let lift = |m: SMatrix<f64, D, D>| Transfer { mat: m, log_scale: 0.0 };
    let ir1 = lift(interface_map::<D>(Side::Right, channel, 1.0, opts)?);
    let ire = lift(interface_map::<D>(Side::Right, channel, eps, opts)?);
    let il1 = lift(interface_map::<D>(Side::Left, channel, 1.0, opts)?);
    let ile = lift(interface_map::<D>(Side::Left, channel, eps, opts)?);
    let chain = [
        *cyl,
        ir1,
        *cone,
        ire.inverse()?,
        *handle,
        ile,
        *cone_back,
        il1.inverse()?,
        *cyl,
    ];
    Ok(chain.iter().fold(Transfer::identity(), |acc, t| acc.then_after(t)))
}

/// Band of one channel with its index among the channel's bands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEdge {
    pub index: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// The width comes from linearizing the Floquet function at the band centre.
    pub linearized: bool,
}

impl BandEdge {
    pub fn width(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }
}

/// Floquet eigenvalue solver of one channel with cached monodromy samples.
pub struct FloquetSolver<'a> {
    channel: &'a Channel,
    profile: Profile,
    opts: MatchingOptions,
    step: f64,
    samples: Vec<Invariants>,
    theta_points: usize,
}

impl<'a> FloquetSolver<'a> {
    pub fn new(channel: &'a Channel, profile: &Profile, lambda_max: f64, opts: MatchingOptions) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::invalid(format!("lambda_max = {lambda_max} must be positive")));
        }
        let step = lambda_max.max(1.0) / SCAN_INTERVALS as f64;
        let mut solver =
            FloquetSolver { channel, profile: *profile, opts, step, samples: Vec::new(), theta_points: PAIR_THETA_POINTS };
        solver.cover(lambda_max)?;
        Ok(solver)
    }

    /// Number of points of the uniform θ grid on [0, π] used for pair
    /// channels (at least 2). Scalar channels always use {0, π}.
    pub fn set_theta_points(&mut self, points: usize) {
        self.theta_points = points.max(2);
    }

    pub fn channel(&self) -> &Channel {
        self.channel
    }

    pub fn evaluate(&self, lambda: f64) -> Result<Invariants> {
        Ok(monodromy(self.channel, lambda, &self.profile, &self.opts)?.invariants(lambda))
    }

    /// Largest λ covered by the sample grid.
    pub fn covered(&self) -> f64 {
        self.samples.last().map(|s| s.lambda).unwrap_or(f64::NEG_INFINITY)
    }

    /// Extends the sample grid to at least `lambda_max`.
    pub fn cover(&mut self, lambda_max: f64) -> Result<()> {
        let start = -self.step;
        let needed = ((lambda_max - start) / self.step).ceil() as usize + 1;
        let have = self.samples.len();
        if needed <= have {
            return Ok(());
        }
        let step = self.step;
        let fresh: Vec<Result<Invariants>> = {
            use rayon::prelude::*;
            (have..needed).into_par_iter().map(|i| self.evaluate(start + i as f64 * step)).collect()
        };
        for s in fresh {
            self.samples.push(s?);
        }
        Ok(())
    }

    fn value(&self, lambda: f64, branch: usize, y: f64) -> Result<f64> {
        Ok(self.evaluate(lambda)?.branch_value(branch, y))
    }

    fn bisect(&self, mut a: f64, mut b: f64, fa: f64, branch: usize, y: f64, tol: f64) -> Result<f64> {
        let sa = fa.signum();
        for _ in 0..200 {
            if b - a <= tol * a.abs().max(1.0) {
                break;
            }
            let m = 0.5 * (a + b);
            let fm = self.value(m, branch, y)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Minimizes sign·F on [a, b] by golden-section search.
    fn golden_min(&self, mut a: f64, mut b: f64, branch: usize, y: f64, sign: f64) -> Result<(f64, f64)> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = sign * self.value(x1, branch, y)?;
        let mut f2 = sign * self.value(x2, branch, y)?;
        for _ in 0..80 {
            if f1 < 0.0 || f2 < 0.0 || b - a < 1e-13 * a.abs().max(1.0) {
                break;
            }
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = sign * self.value(x1, branch, y)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = sign * self.value(x2, branch, y)?;
            }
        }
        Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
    }

    /// Eigenvalues at quasi-momentum θ in [−step, lambda_max], ascending,
    /// repeated according to multiplicity.
    pub fn eigenvalues(&mut self, theta: f64, lambda_max: f64, tol: f64) -> Result<Vec<f64>> {
        self.cover(lambda_max)?;
        self.roots(theta, lambda_max, tol)
    }

    /// Same as [`FloquetSolver::eigenvalues`] but restricted to the sampled range.
    pub fn roots(&self, theta: f64, lambda_max: f64, tol: f64) -> Result<Vec<f64>> {
        let y = 2.0 * theta.cos();
        let tol = tol.max(1e-15);
        let mut roots = Vec::new();
        let branches = if self.channel.is_pair() { 2 } else { 1 };
        for branch in 0..branches {
            self.branch_roots(branch, y, lambda_max, tol, &mut roots)?;
        }
        roots.sort_by(|a, b| a.total_cmp(b));
        Ok(roots)
    }

    fn branch_roots(&self, branch: usize, y: f64, lambda_max: f64, tol: f64, roots: &mut Vec<f64>) -> Result<()> {
        let vals: Vec<f64> = self.samples.iter().map(|s| s.branch_value(branch, y)).collect();
        let n = self.samples.len();
        for i in 0..n - 1 {
            let (a, b) = (self.samples[i].lambda, self.samples[i + 1].lambda);
            if a > lambda_max {
                break;
            }
            if vals[i] == 0.0 {
                roots.push(a);
                continue;
            }
            if vals[i] * vals[i + 1] < 0.0 {
                let r = self.bisect(a, b, vals[i], branch, y, tol)?;
                if r <= lambda_max {
                    roots.push(r);
                }
                continue;
            }
            // tangency: a local minimum of |F| without a sign change
            if i == 0 || vals[i + 1] == 0.0 {
                continue;
            }
            let (vp, v, vn) = (vals[i - 1], vals[i], vals[i + 1]);
            let unscaled = self.samples[i - 1..=i + 1].iter().all(|s| s.log_scale == 0.0);
            if !(unscaled && vp * v > 0.0 && v.abs() <= vp.abs() && v.abs() < vn.abs()) {
                continue;
            }
            let lo = self.samples[i - 1].lambda;
            let sign = v.signum();
            let (x, fx) = self.golden_min(lo, b, branch, y, sign)?;
            let tang_tol = 1e-10 * self.samples[i].magnitude();
            if fx < 0.0 {
                let r1 = self.bisect(lo, x, v, branch, y, tol)?;
                let r2 = self.bisect(x, b, -v, branch, y, tol)?;
                for r in [r1, r2] {
                    if r <= lambda_max {
                        roots.push(r);
                    }
                }
            } else if fx <= tang_tol && x <= lambda_max {
                roots.push(x);
                roots.push(x);
            }
        }
        Ok(())
    }

    /// Linearized band around the root of a branch at y = 0 inside [a, b]:
    /// centre c and width 4e^{−s}/|d̂′(c)|.
    fn linearized(&self, a: f64, b: f64) -> Result<Option<(f64, f64)>> {
        let pad = 1e-7 * a.abs().max(1.0);
        let (a, b) = (a - pad, b + pad);
        let centre = 0.5 * (a + b);
        let mut best: Option<(f64, f64)> = None;
        let branches = if self.channel.is_pair() { 2 } else { 1 };
        for branch in 0..branches {
            let fa = self.value(a, branch, 0.0)?;
            let fb = self.value(b, branch, 0.0)?;
            if fa * fb > 0.0 {
                continue;
            }
            let c = self.bisect(a, b, fa, branch, 0.0, 1e-15)?;
            let h = 1e-5 * c.abs().max(1.0);
            let (m0, mp, mm) = (self.evaluate(c)?, self.evaluate(c + h)?, self.evaluate(c - h)?);
            let s0 = m0.log_scale;
            let rescale = |inv: &Invariants| inv.branch_values()[branch] * (inv.log_scale - s0).exp();
            let d = (rescale(&mp) - rescale(&mm)) / (2.0 * h);
            let width = 4.0 * (-s0).exp() / d.abs();
            if width.is_finite() && best.is_none_or(|(bc, _)| (c - centre).abs() < (bc - centre).abs()) {
                best = Some((c, width));
            }
        }
        Ok(best)
    }

    fn finish_band(&self, index: usize, lo: f64, hi: f64) -> Result<BandEdge> {
        if hi - lo < NARROW_BAND {
            if let Some((c, w)) = self.linearized(lo, hi)? {
                if w < NARROW_BAND {
                    return Ok(BandEdge { index, lambda_min: c - 0.5 * w, lambda_max: c + 0.5 * w, linearized: true });
                }
            }
        }
        Ok(BandEdge { index, lambda_min: lo, lambda_max: hi, linearized: false })
    }

    /// Bands whose lower edge lies below `lambda_max`.
    pub fn bands(&mut self, lambda_max: f64, tol: f64) -> Result<Vec<BandEdge>> {
        let mut reach = 1.25 * lambda_max + 1.0;
        for _ in 0..6 {
            let lists = self.theta_lists(reach, tol)?;
            let k = lists.iter().map(|l| l.len()).min().unwrap_or(0);
            let kmax = lists.iter().map(|l| l.len()).max().unwrap_or(0);
            let straddles = kmax > k && lists.iter().any(|l| l.len() > k && l[k] <= lambda_max);
            if straddles {
                reach *= 1.6;
                continue;
            }
            let mut out = Vec::new();
            for idx in 0..k {
                let lo = lists.iter().map(|l| l[idx]).fold(f64::INFINITY, f64::min);
                let hi = lists.iter().map(|l| l[idx]).fold(f64::NEG_INFINITY, f64::max);
                if lo > lambda_max {
                    break;
                }
                let (lo, hi) = if self.channel.is_pair() { self.refine_extrema(idx, lo, hi, &lists, tol)? } else { (lo, hi) };
                out.push(self.finish_band(idx, lo, hi)?);
            }
            return Ok(out);
        }
        Err(Error::numerical(format!("band straddling the scan edge kept growing for {}", self.channel.label())))
    }

    fn theta_grid(&self) -> Vec<f64> {
        if self.channel.is_pair() {
            (0..self.theta_points)
                .map(|j| std::f64::consts::PI * j as f64 / (self.theta_points - 1) as f64)
                .collect()
        } else {
            vec![0.0, std::f64::consts::PI]
        }
    }

    fn theta_lists(&mut self, reach: f64, tol: f64) -> Result<Vec<Vec<f64>>> {
        self.cover(reach)?;
        let grid = self.theta_grid();
        let this: &FloquetSolver = self;
        use rayon::prelude::*;
        grid.par_iter().map(|&th| this.roots(th, reach, tol)).collect()
    }

    /// Golden-section refinement of interior extrema of λ_k(θ) on the θ grid.
    fn refine_extrema(&self, idx: usize, lo: f64, hi: f64, lists: &[Vec<f64>], tol: f64) -> Result<(f64, f64)> {
        let grid = self.theta_grid();
        let vals: Vec<f64> = lists.iter().map(|l| l[idx]).collect();
        let (jmin, _) = vals.iter().enumerate().fold((0, f64::INFINITY), |b, (j, &v)| if v < b.1 { (j, v) } else { b });
        let (jmax, _) =
            vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b });
        let mut lo = lo;
        let mut hi = hi;
        let last = grid.len() - 1;
        if jmin > 0 && jmin < last {
            if let Some(v) = self.golden_theta(idx, grid[jmin - 1], grid[jmin + 1], 1.0, tol, vals[jmin])? {
                lo = lo.min(v);
            }
        }
        if jmax > 0 && jmax < last {
            if let Some(v) = self.golden_theta(idx, grid[jmax - 1], grid[jmax + 1], -1.0, tol, vals[jmax])? {
                hi = hi.max(v);
            }
        }
        Ok((lo, hi))
    }

    fn kth_root(&self, theta: f64, idx: usize, near: f64, tol: f64) -> Result<Option<f64>> {
        let window = 0.05 * near.abs().max(1.0);
        let roots = self.roots(theta, self.covered(), tol)?;
        Ok(roots.get(idx).copied().filter(|r| (r - near).abs() < window))
    }

    fn golden_theta(&self, idx: usize, a: f64, b: f64, sign: f64, tol: f64, start: f64) -> Result<Option<f64>> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (a, b);
        let eval = |th: f64| -> Result<Option<f64>> { self.kth_root(th, idx, start, tol) };
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (Some(mut f1), Some(mut f2)) = (eval(x1)?, eval(x2)?) else { return Ok(None) };
        for _ in 0..40 {
            if b - a < 1e-9 {
                break;
            }
            if sign * f1 < sign * f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                match eval(x1)? {
                    Some(v) => f1 = v,
                    None => break,
                }
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                match eval(x2)? {
                    Some(v) => f2 = v,
                    None => break,
                }
            }
        }
        Ok(Some(if sign * f1 < sign * f2 { f1 } else { f2 }))
    }
}

/// Floquet eigenvalues of one channel at θ up to `lambda_max`.
pub fn floquet_eigenvalues(
    channel: &Channel,
    theta: f64,
    profile: &Profile,
    lambda_max: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut solver = FloquetSolver::new(channel, profile, lambda_max, MatchingOptions::default())?;
    solver.eigenvalues(theta, lambda_max, tol)
}

/// Bands of one channel whose lower edge lies below `lambda_max`.
pub fn band_edges(channel: &Channel, profile: &Profile, lambda_max: f64, tol: f64) -> Result<Vec<BandEdge>> {
    let mut solver = FloquetSolver::new(channel, profile, lambda_max, MatchingOptions::default())?;
    solver.bands(lambda_max, tol)
}
