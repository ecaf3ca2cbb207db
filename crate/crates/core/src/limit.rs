//! Limit spectrum as ε → 0.
//!
//! The handle decouples into the interval [0, L] carrying Dirichlet or
//! Neumann spectra for the harmonic channels, and the two cones together
//! with the outer cylinder form the spindle, whose channels are solved by
//! shooting from one tip to the other. In the coupled middle case the
//! harmonic channel with vanishing interface weight runs through handle and
//! spindle as one metric graph.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::error::{Error, Result};
use crate::modes::{enumerate_channels, extension_regime, h5_rotation, CaseTag, Channel, ChannelKind};
use crate::radial::transfer::expand_pair;
use crate::radial::{cone_propagator_scalar, interface_map, segment_propagator, ConeBasis, MatchingOptions, Side};
use crate::transversal::{Mu2, TransversalSpectrum};

/// Root tolerance used by [`assemble_limit_spectrum`].
pub const LIMIT_TOL: f64 = 1e-12;

/// Two limit eigenvalues closer than this (relative) are merged.
const MERGE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Spindle,
    Dirichlet,
    Neumann,
    Coupled,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Spindle => "spindle",
            Source::Dirichlet => "dirichlet",
            Source::Neumann => "neumann",
            Source::Coupled => "coupled",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitEntry {
    pub lambda: f64,
    pub mult: u64,
    pub source: Source,
}

#[derive(Clone, Debug)]
pub struct LimitSpectrum {
    pub p: i64,
    pub case_tag: CaseTag,
    /// Sorted by λ, then by source.
    pub entries: Vec<LimitEntry>,
    pub lambda_max: f64,
}

impl LimitSpectrum {
    /// Total multiplicity at λ = 0.
    pub fn kernel_multiplicity(&self) -> u64 {
        self.entries.iter().filter(|e| e.lambda.abs() < 1e-8).map(|e| e.mult).sum()
    }

    /// Distinct eigenvalues with total multiplicity over all sources.
    pub fn points(&self) -> Vec<(f64, u64)> {
        let mut pts: Vec<(f64, u64)> = Vec::new();
        for e in &self.entries {
            match pts.last_mut() {
                Some((x, m)) if close(*x, e.lambda) => *m += e.mult,
                _ => pts.push((e.lambda, e.mult)),
            }
        }
        pts
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Dirichlet and Neumann spectra of −d²/dt² on [0, L] up to a window.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSpectra {
    pub dirichlet: Vec<f64>,
    pub neumann: Vec<f64>,
    /// False when L = 0, in which case both lists are empty.
    pub has_handle: bool,
}

pub fn interval_spectra(handle_len: f64, lambda_max: f64) -> Result<IntervalSpectra> {
    if !(handle_len >= 0.0 && handle_len.is_finite()) {
        return Err(Error::invalid(format!("handle length {handle_len} must be non-negative")));
    }
    if handle_len == 0.0 {
        return Ok(IntervalSpectra { dirichlet: Vec::new(), neumann: Vec::new(), has_handle: false });
    }
    let limit = lambda_max * (1.0 + 1e-12);
    let dirichlet: Vec<f64> = (1..)
        .map(|k| (std::f64::consts::PI * k as f64 / handle_len).powi(2))
        .take_while(|&x| x <= limit)
        .collect();
    let mut neumann = Vec::with_capacity(dirichlet.len() + 1);
    if lambda_max >= 0.0 {
        neumann.push(0.0);
    }
    neumann.extend_from_slice(&dirichlet);
    Ok(IntervalSpectra { dirichlet, neumann, has_handle: true })
}

/// Which solutions of a cone branch are admitted at the tip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TipAdmissible {
    /// Only the regular solution f_γ ~ t^{γ+1}.
    RegularOnly,
    /// The singular solution g_γ ~ t^{−γ} takes the place of f_γ.
    SingularAllowed,
}

/// Tip condition of one channel, one entry per exponent in
/// [`Channel::gamma_list`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct TipCondition {
    pub branches: Vec<(f64, TipAdmissible)>,
}

impl TipCondition {
    pub fn friedrichs(channel: &Channel) -> TipCondition {
        TipCondition { branches: channel.gamma_list().into_iter().map(|g| (g, TipAdmissible::RegularOnly)).collect() }
    }

    /// Tip condition selected by a case tag: the D_min∘D_max extension admits
    /// the singular branch exactly for exponents in ]−1/2, 1/2[.
    pub fn for_case(channel: &Channel, case_tag: CaseTag) -> TipCondition {
        let in_gap = |g: f64| g > -0.5 + 1e-12 && g < 0.5 - 1e-12;
        let branches = channel
            .gamma_list()
            .into_iter()
            .map(|g| {
                let adm = if case_tag == CaseTag::DminDmax && in_gap(g) {
                    TipAdmissible::SingularAllowed
                } else {
                    TipAdmissible::RegularOnly
                };
                (g, adm)
            })
            .collect();
        TipCondition { branches }
    }

    fn check(&self, channel: &Channel) -> Result<()> {
        let gammas = channel.gamma_list();
        if gammas.len() != self.branches.len() {
            return Err(Error::invalid(format!(
                "tip condition has {} branches, channel {} has {}",
                self.branches.len(),
                channel.label(),
                gammas.len()
            )));
        }
        for (g, (h, adm)) in gammas.iter().zip(&self.branches) {
            if (g - h).abs() > 1e-10 * (1.0 + g.abs()) {
                return Err(Error::InadmissibleExponent { gamma: *h });
            }
            if *adm == TipAdmissible::SingularAllowed && !(*g < 0.5) {
                return Err(Error::invalid(format!(
                    "the singular branch of exponent {g} is not square integrable at the tip"
                )));
            }
        }
        Ok(())
    }
}

/// Shooting parameters of [`spindle_eigenvalues_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpindleOptions {
    /// Radius at which the tip data is taken from the Frobenius series.
    pub delta_tip: f64,
    /// Shoot from the left tip instead of the right one.
    pub from_left: bool,
    /// Number of scan cells over the λ window.
    pub intervals: usize,
}

impl Default for SpindleOptions {
    fn default() -> Self {
        SpindleOptions { delta_tip: 1e-3, from_left: false, intervals: 4000 }
    }
}

/// Eigenvalues of one channel on the spindle (two cones joined through the
/// outer cylinder) in [0, Λ], repeated by multiplicity within the channel.
pub fn spindle_eigenvalues(
    channel: &Channel,
    tip: &TipCondition,
    l_out: f64,
    lambda_max: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    spindle_eigenvalues_with(channel, tip, l_out, lambda_max, tol, &SpindleOptions::default())
}

pub fn spindle_eigenvalues_with(
    channel: &Channel,
    tip: &TipCondition,
    l_out: f64,
    lambda_max: f64,
    tol: f64,
    opts: &SpindleOptions,
) -> Result<Vec<f64>> {
    tip.check(channel)?;
    if !(l_out >= 0.0 && lambda_max > 0.0 && tol > 0.0) {
        return Err(Error::invalid("spindle shooting needs l_out >= 0, lambda_max > 0 and tol > 0"));
    }
    if !(opts.delta_tip > 0.0 && opts.delta_tip < 1.0) {
        return Err(Error::invalid("delta_tip must lie in ]0, 1["));
    }
    let lo = -1e-3 * lambda_max.max(1.0);
    // T* has a kernel at λ = 0 when N is singular; both column blocks then lose
    // one rank there and the determinant carries a factor λ².
    let degenerate = channel.is_pair()
        && tip.branches.iter().any(|b| b.1 == TipAdmissible::SingularAllowed)
        && {
            let sv = first_order_columns(channel, 0.0, opts.delta_tip)?.singular_values();
            sv.min() <= 1e-8 * sv.max()
        };
    let f = |lambda: f64| -> Result<f64> {
        let det = if channel.is_pair() {
            matching_determinant::<4>(channel, tip, l_out, lambda, opts)?
        } else {
            matching_determinant::<2>(channel, tip, l_out, lambda, opts)?
        };
        if degenerate {
            let l = if lambda == 0.0 { 1e-150 } else { lambda };
            Ok(det / (l * l))
        } else {
            Ok(det)
        }
    };
    let roots = crate::roots::scan_roots(f, lo, lambda_max, opts.intervals, tol, 1e-9)?;
    Ok(roots.into_iter().map(|r| r.max(0.0)).filter(|&r| r <= lambda_max).collect())
}

/// Admissible own-frame cone data (u, u′) at t = 1, one column per branch.
fn tip_columns(channel: &Channel, tip: &TipCondition, lambda: f64, delta: f64) -> Result<DMatrix<f64>> {
    if channel.is_pair() && tip.branches.iter().any(|b| b.1 == TipAdmissible::SingularAllowed) {
        return first_order_columns(channel, lambda, delta);
    }
    let c = channel.dim();
    let rot = if channel.is_pair() {
        h5_rotation(channel.mu(), channel.p, channel.n)?
    } else {
        nalgebra::Matrix2::identity()
    };
    let mut cols = DMatrix::<f64>::zeros(2 * c, c);
    for (i, &(gamma, adm)) in tip.branches.iter().enumerate() {
        let basis = ConeBasis::new(gamma, lambda, delta)?;
        let (u, du) = match adm {
            TipAdmissible::RegularOnly => basis.regular(delta),
            TipAdmissible::SingularAllowed => basis.singular(delta),
        };
        let prop = cone_propagator_scalar(basis.gamma, lambda, delta, 1.0)?;
        let v = prop.mat * nalgebra::Vector2::new(u, du);
        let v = v / v.norm();
        for r in 0..c {
            let w = if channel.is_pair() { rot[(r, i)] } else { 1.0 };
            cols[(r, i)] = w * v[0];
            cols[(c + r, i)] = w * v[1];
        }
    }
    Ok(cols)
}

/// Pair data T*ψ at t = 1 for the regular solutions ψ of the two decoupled
/// scalar problems TT*ψ = λψ, where T = ∂_t + K/t, K = [[ν, −μ], [−μ, w]].
/// The leading term of T*ψ at the tip is the singular branch t^{−γ₋}; its
/// regular admixture is fixed by T*.
fn first_order_columns(channel: &Channel, lambda: f64, delta: f64) -> Result<DMatrix<f64>> {
    let mu = channel.mu();
    let wts = channel.weights();
    let k = nalgebra::Matrix2::new(wts[0], -mu, -mu, wts[1]);
    let mut cols = DMatrix::<f64>::zeros(4, 2);
    for i in 0..2 {
        let c = mu * mu + wts[i] * (wts[i] - 1.0);
        let gamma = -0.5 + (0.25 + c).sqrt();
        let basis = ConeBasis::new(gamma, lambda, delta)?;
        let (u, du) = basis.regular(delta);
        let prop = cone_propagator_scalar(basis.gamma, lambda, delta, 1.0)?;
        let v = prop.mat * nalgebra::Vector2::new(u, du);
        let (psi, dpsi) = (v[0] / v.norm(), v[1] / v.norm());
        let ddpsi = (c - lambda) * psi;
        let e = k.column(i);
        for r in 0..2 {
            cols[(r, i)] = -dpsi * if r == i { 1.0 } else { 0.0 } + e[r] * psi;
            cols[(2 + r, i)] = -ddpsi * if r == i { 1.0 } else { 0.0 } + e[r] * (dpsi - psi);
        }
    }
    Ok(cols)
}

/// Determinant of the shot data against the admissible data of the far tip,
/// with unit columns.
fn matching_determinant<const D: usize>(
    channel: &Channel,
    tip: &TipCondition,
    l_out: f64,
    lambda: f64,
    opts: &SpindleOptions,
) -> Result<f64> {
    let c = D / 2;
    let mo = MatchingOptions::default();
    let ir: SMatrix<f64, D, D> = interface_map::<D>(Side::Right, channel, 1.0, &mo)?;
    let il: SMatrix<f64, D, D> = interface_map::<D>(Side::Left, channel, 1.0, &mo)?;
    let seg = segment_propagator(channel.mu2.value(), lambda, l_out);
    let cyl = if D == 4 {
        DMatrix::from_iterator(D, D, expand_pair(&seg).mat.iter().copied())
    } else {
        DMatrix::from_iterator(D, D, seg.mat.iter().copied())
    };
    let cyl_inv = if D == 4 {
        DMatrix::from_iterator(D, D, expand_pair(&seg.unimodular_inverse()).mat.iter().copied())
    } else {
        DMatrix::from_iterator(D, D, seg.unimodular_inverse().mat.iter().copied())
    };
    let ir = DMatrix::from_iterator(D, D, ir.iter().copied());
    let il = DMatrix::from_iterator(D, D, il.iter().copied());
    let inv = |m: &DMatrix<f64>| m.clone().try_inverse().ok_or_else(|| Error::numerical("singular interface map"));
    let tips = tip_columns(channel, tip, lambda, opts.delta_tip)?;
    let shot = if opts.from_left { inv(&ir)? * cyl_inv * &il * &tips } else { inv(&il)? * cyl * &ir * &tips };
    let mut m = DMatrix::<f64>::zeros(D, D);
    for j in 0..c {
        let (a, b): (DVector<f64>, DVector<f64>) = if opts.from_left {
            (tips.column(j).into(), shot.column(j).into())
        } else {
            (shot.column(j).into(), tips.column(j).into())
        };
        m.set_column(j, &(&a / a.norm()));
        m.set_column(c + j, &(&b / b.norm()));
    }
    Ok(m.determinant())
}

/// Eigenvalues of the coupled middle-degree problem: the harmonic channel with
/// zero interface weight on the graph formed by the handle, both cones and the
/// outer cylinder, plus the Neumann spectrum of the decoupled harmonic component.
pub fn coupled_graph_eigenvalues(
    ts: &TransversalSpectrum,
    p: i64,
    handle_len: f64,
    l_out: f64,
    lambda_max: f64,
    tol: f64,
) -> Result<Vec<LimitEntry>> {
    let n = ts.n as i64;
    let b_mid = ts.betti(n / 2);
    if n % 2 != 0 || !(p == n / 2 || p == n / 2 + 1) || b_mid == 0 {
        return Err(Error::invalid(format!(
            "the coupled graph problem needs n even, p in {{n/2, n/2+1}} and b_(n/2) > 0 (n = {n}, p = {p})"
        )));
    }
    let channel = coupling_channel(ts, p)?;
    let opts = MatchingOptions::default();
    let lift = |m: SMatrix<f64, 2, 2>| crate::radial::Transfer { mat: m, log_scale: 0.0 };
    let f = |lambda: f64| -> Result<f64> {
        let ir = lift(interface_map::<2>(Side::Right, &channel, 1.0, &opts)?);
        let il = lift(interface_map::<2>(Side::Left, &channel, 1.0, &opts)?);
        let cyl = segment_propagator(0.0, lambda, 0.5 * l_out);
        let cone = segment_propagator(0.0, lambda, 1.0);
        let handle = segment_propagator(0.0, lambda, handle_len);
        let chain = [cyl, ir, cone, ir.inverse()?, handle, il, cone.unimodular_inverse(), il.inverse()?, cyl];
        let m = chain.iter().fold(crate::radial::Transfer::identity(), |acc, t| acc.then_after(t));
        Ok(m.unscaled().trace() - 2.0)
    };
    let lo = -1e-3 * lambda_max.max(1.0);
    let total = handle_len + 2.0 + l_out;
    let intervals = (40.0 * total * lambda_max.max(1.0).sqrt()).ceil() as usize + 200;
    let roots = crate::roots::scan_roots(f, lo, lambda_max, intervals, tol, 1e-9)?;
    let mut out: Vec<LimitEntry> = roots
        .into_iter()
        .map(|r| LimitEntry { lambda: r.max(0.0), mult: b_mid, source: Source::Coupled })
        .filter(|e| e.lambda <= lambda_max)
        .collect();
    let b_free = if p == n / 2 { ts.betti(p - 1) } else { ts.betti(p) };
    if b_free > 0 {
        for x in interval_spectra(handle_len, lambda_max)?.neumann {
            out.push(LimitEntry { lambda: x, mult: b_free, source: Source::Neumann });
        }
    }
    Ok(merge(out))
}

/// The harmonic channel whose interface weight vanishes in the coupled case.
fn coupling_channel(ts: &TransversalSpectrum, p: i64) -> Result<Channel> {
    let n = ts.n as i64;
    let b = ts.betti(n / 2);
    if p == n / 2 {
        Channel::new(ChannelKind::H2, ts.n, p, Mu2::zero(), b)
    } else {
        Channel::new(ChannelKind::H1, ts.n, p, Mu2::zero(), b)
    }
}

fn is_coupling_channel(channel: &Channel, n: i64) -> bool {
    (channel.kind == ChannelKind::H2 && channel.p == n / 2) || (channel.kind == ChannelKind::H1 && channel.p == n / 2 + 1)
}

fn merge(mut entries: Vec<LimitEntry>) -> Vec<LimitEntry> {
    entries.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.source.cmp(&b.source)));
    let mut out: Vec<LimitEntry> = Vec::new();
    for e in entries {
        if let Some(last) = out.iter_mut().rev().take_while(|l| close(l.lambda, e.lambda)).find(|l| l.source == e.source) {
            last.mult += e.mult;
        } else {
            out.push(e);
        }
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.source.cmp(&b.source)));
    out
}

/// Limit spectrum of degree p with the case tag of the extension regime.
pub fn assemble_limit_spectrum(
    ts: &TransversalSpectrum,
    p: i64,
    handle_len: f64,
    l_out: f64,
    lambda_max: f64,
) -> Result<LimitSpectrum> {
    let case_tag = extension_regime(ts, p)?.case_tag;
    assemble_with_extension(ts, p, handle_len, l_out, lambda_max, case_tag)
}

/// Limit spectrum with the spindle tips imposed by `tip_case` instead of the
/// case tag of degree p. The interval and coupled parts follow the true case.
pub fn assemble_with_extension(
    ts: &TransversalSpectrum,
    p: i64,
    handle_len: f64,
    l_out: f64,
    lambda_max: f64,
    tip_case: CaseTag,
) -> Result<LimitSpectrum> {
    let case_tag = extension_regime(ts, p)?.case_tag;
    let n = ts.n as i64;
    let coupled = case_tag == CaseTag::CoupledMiddle;
    let channels = enumerate_channels(ts, p, lambda_max)?;
    let spindle: Vec<Result<Vec<LimitEntry>>> = {
        use rayon::prelude::*;
        channels
            .par_iter()
            .filter(|ch| !(coupled && is_coupling_channel(ch, n)))
            .map(|ch| {
                let tip = TipCondition::for_case(ch, tip_case);
                let roots = spindle_eigenvalues(ch, &tip, l_out, lambda_max, LIMIT_TOL)?;
                Ok(roots.into_iter().map(|r| LimitEntry { lambda: r, mult: ch.mult, source: Source::Spindle }).collect())
            })
            .collect()
    };
    let mut entries = Vec::new();
    for s in spindle {
        entries.extend(s?);
    }
    if coupled {
        entries.extend(coupled_graph_eigenvalues(ts, p, handle_len, l_out, lambda_max, LIMIT_TOL)?);
    } else {
        let (dir, neu) = match (2 * p).cmp(&(n + 1)) {
            std::cmp::Ordering::Less => (ts.betti(p), ts.betti(p - 1)),
            std::cmp::Ordering::Greater => (ts.betti(p - 1), ts.betti(p)),
            std::cmp::Ordering::Equal => (0, ts.betti(p) + ts.betti(p - 1)),
        };
        let iv = interval_spectra(handle_len, lambda_max)?;
        if dir > 0 {
            entries.extend(iv.dirichlet.iter().map(|&x| LimitEntry { lambda: x, mult: dir, source: Source::Dirichlet }));
        }
        if neu > 0 {
            entries.extend(iv.neumann.iter().map(|&x| LimitEntry { lambda: x, mult: neu, source: Source::Neumann }));
        }
    }
    Ok(LimitSpectrum { p, case_tag, entries: merge(entries), lambda_max })
}

/// Writes limit spectra as CSV with header p,lambda,mult,source,case_tag.
pub fn write_limit_csv<W: Write>(spectra: &[LimitSpectrum], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "lambda", "mult", "source", "case_tag"])?;
    for s in spectra {
        for e in &s.entries {
            w.write_record([
                s.p.to_string(),
                format!("{:.12e}", e.lambda),
                e.mult.to_string(),
                e.source.to_string(),
                s.case_tag.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
