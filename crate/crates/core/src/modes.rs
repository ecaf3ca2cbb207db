//! Separation of p-forms on the warped product into one-dimensional channels.
//!
//! A p-form on ]ε,1[ × Σ is written `dt ∧ β + α` with β a (p−1)-form and α a
//! p-form on Σ. Expanding in eigenforms of Δ_Σ splits the cone operator into:
//!
//! | kind | content                                   | cone potential c            |
//! |------|-------------------------------------------|-----------------------------|
//! | H1   | β harmonic (p−1)-form, α = 0              | f(p−2)                      |
//! | H2   | α harmonic p-form, β = 0                  | f(p)                        |
//! | H3   | β exact (p−1)-form, α = 0                 | μ² + f(p−2)                 |
//! | H4   | α coexact p-form, β = 0                   | μ² + f(p)                   |
//! | H5   | β coexact (p−1)-form, α = dβ/μ            | 2×2 block, see below        |
//!
//! with f(x) = (n/2 − x)(n/2 − x − 1). On H5 the potential is
//! `[[μ² + f(p−2), −2μ], [−2μ, μ² + f(p)]] / t²`, whose eigenvalues are
//! γ±(γ± + 1) with γ± = −1/2 + |√(μ² + a_p²) ± 1| and a_p = (n+1)/2 − p.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::transversal::{Mu2, TransversalSpectrum, LEVEL_REL_TOL};

fn half(k: i64) -> Rational64 {
    Rational64::new(k, 2)
}

fn rf(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// f(x) = (n/2 − x)(n/2 − x − 1), exact.
pub fn f_value(n: usize, x: i64) -> Rational64 {
    let h = half(n as i64) - Rational64::from_integer(x);
    h * (h - Rational64::from_integer(1))
}

/// a_x = (n+1)/2 − x, exact.
pub fn a_value(n: usize, x: i64) -> Rational64 {
    half(n as i64 + 1) - Rational64::from_integer(x)
}

/// Degree-dependent constants for p-forms on Σⁿ, all exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeConstants {
    pub n: usize,
    pub p: i64,
    pub a_p: Rational64,
    pub f_p: Rational64,
    pub f_pm2: Rational64,
    /// ν = n/2 − p + 1, the interface weight of the β component.
    pub nu: Rational64,
    /// p − n/2, the interface weight of the α component.
    pub w_alpha: Rational64,
}

pub fn degree_constants(n: usize, p: i64) -> Result<DegreeConstants> {
    if n == 0 {
        return Err(Error::invalid("the transversal dimension n must be at least 1"));
    }
    if p < 0 || p > n as i64 + 1 {
        return Err(Error::invalid(format!("degree p = {p} is outside 0..={}", n + 1)));
    }
    Ok(DegreeConstants {
        n,
        p,
        a_p: a_value(n, p),
        f_p: f_value(n, p),
        f_pm2: f_value(n, p - 2),
        nu: half(n as i64) - Rational64::from_integer(p - 1),
        w_alpha: Rational64::from_integer(p) - half(n as i64),
    })
}

/// γ± = −1/2 + |√(μ² + a²) ± 1|.
pub fn gamma_pm(mu2: f64, a: f64) -> Result<(f64, f64)> {
    if !(mu2 >= 0.0) {
        return Err(Error::invalid(format!("mu^2 = {mu2} must be non-negative")));
    }
    let s = (mu2 + a * a).sqrt();
    Ok((-0.5 + (s - 1.0).abs(), -0.5 + s + 1.0))
}

/// Scalar exponent γ = −1/2 + √(μ² + a²), the non-negative-side root of γ(γ+1) = μ² + a² − 1/4.
pub fn gamma_scalar(mu2: f64, a: f64) -> f64 {
    -0.5 + (mu2 + a * a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelKind {
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl ChannelKind {
    pub fn is_harmonic(self) -> bool {
        matches!(self, ChannelKind::H1 | ChannelKind::H2)
    }

    pub fn components(self) -> &'static [Component] {
        match self {
            ChannelKind::H1 | ChannelKind::H3 => &[Component::Beta],
            ChannelKind::H2 | ChannelKind::H4 => &[Component::Alpha],
            ChannelKind::H5 => &[Component::Beta, Component::Alpha],
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelKind::H1 => "H1",
            ChannelKind::H2 => "H2",
            ChannelKind::H3 => "H3",
            ChannelKind::H4 => "H4",
            ChannelKind::H5 => "H5",
        };
        f.write_str(s)
    }
}

/// The `dt ∧ β` part or the `α` part of a form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Beta,
    Alpha,
}

impl Component {
    /// Sign relating the left cone's own radial frame to the global frame.
    pub fn left_sign(self) -> f64 {
        match self {
            Component::Beta => -1.0,
            Component::Alpha => 1.0,
        }
    }

    pub fn weight(self, dc: &DegreeConstants) -> f64 {
        match self {
            Component::Beta => rf(dc.nu),
            Component::Alpha => rf(dc.w_alpha),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConePotential {
    Scalar(f64),
    Pair([[f64; 2]; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gammas {
    Scalar(f64),
    Pair { minus: f64, plus: f64 },
}

/// One separated channel of the p-form problem.
#[derive(Clone, Debug)]
pub struct Channel {
    pub kind: ChannelKind,
    pub n: usize,
    pub p: i64,
    pub mu2: Mu2,
    pub mult: u64,
    pub potential: ConePotential,
    pub gammas: Gammas,
}

impl Channel {
    /// Builds a channel directly. `mu2` must be zero for H1 and H2 and
    /// positive otherwise.
    pub fn new(kind: ChannelKind, n: usize, p: i64, mu2: Mu2, mult: u64) -> Result<Channel> {
        let dc = degree_constants(n, p)?;
        let m2 = mu2.value();
        if kind.is_harmonic() && m2 != 0.0 {
            return Err(Error::invalid(format!("{kind} channels carry mu^2 = 0, got {m2}")));
        }
        if !kind.is_harmonic() && !(m2 > 0.0) {
            return Err(Error::invalid(format!("{kind} channels need mu^2 > 0, got {m2}")));
        }
        let (potential, gammas) = match kind {
            ChannelKind::H1 => {
                let a = rf(a_value(n, p - 1));
                (ConePotential::Scalar(rf(dc.f_pm2)), Gammas::Scalar(-0.5 + a.abs()))
            }
            ChannelKind::H2 => {
                let a = rf(a_value(n, p + 1));
                (ConePotential::Scalar(rf(dc.f_p)), Gammas::Scalar(-0.5 + a.abs()))
            }
            ChannelKind::H3 => {
                let a = rf(a_value(n, p - 1));
                (ConePotential::Scalar(m2 + rf(dc.f_pm2)), Gammas::Scalar(gamma_scalar(m2, a)))
            }
            ChannelKind::H4 => {
                let a = rf(a_value(n, p + 1));
                (ConePotential::Scalar(m2 + rf(dc.f_p)), Gammas::Scalar(gamma_scalar(m2, a)))
            }
            ChannelKind::H5 => {
                let mu = m2.sqrt();
                let v = [[m2 + rf(dc.f_pm2), -2.0 * mu], [-2.0 * mu, m2 + rf(dc.f_p)]];
                let (minus, plus) = gamma_pm(m2, rf(dc.a_p))?;
                (ConePotential::Pair(v), Gammas::Pair { minus, plus })
            }
        };
        Ok(Channel { kind, n, p, mu2, mult, potential, gammas })
    }

    pub fn constants(&self) -> DegreeConstants {
        degree_constants(self.n, self.p).expect("channel degree was validated on construction")
    }

    pub fn mu(&self) -> f64 {
        self.mu2.value().sqrt()
    }

    pub fn is_pair(&self) -> bool {
        self.kind == ChannelKind::H5
    }

    pub fn dim(&self) -> usize {
        self.kind.components().len()
    }

    /// Interface weights (ν for β, p − n/2 for α) in component order.
    pub fn weights(&self) -> Vec<f64> {
        let dc = self.constants();
        self.kind.components().iter().map(|c| c.weight(&dc)).collect()
    }

    pub fn left_signs(&self) -> Vec<f64> {
        self.kind.components().iter().map(|c| c.left_sign()).collect()
    }

    /// Whether the first-order form has the extra (μ/ρ)u output (H3, H4).
    pub fn scalar_mass_term(&self) -> bool {
        matches!(self.kind, ChannelKind::H3 | ChannelKind::H4)
    }

    /// Squared mass μ²/ρ² on a flat segment of radius ρ.
    pub fn flat_mass2(&self, rho: f64) -> f64 {
        self.mu2.value() / (rho * rho)
    }

    /// Exponents γ of the cone potential in the order of [`h5_rotation`] columns.
    pub fn gamma_list(&self) -> Vec<f64> {
        match self.gammas {
            Gammas::Scalar(g) => vec![g],
            Gammas::Pair { minus, plus } => vec![minus, plus],
        }
    }

    pub fn label(&self) -> String {
        format!("{}[p={},mu2={}]", self.kind, self.p, self.mu2)
    }
}

/// Unit eigenvector of the H5 cone block for eigenvalue `lambda_s`,
/// proportional to (2μ / (μ² + f(p−2) − λ_s), 1).
pub fn h5_eigenvector(mu: f64, p: i64, n: usize, lambda_s: f64) -> Result<Vector2<f64>> {
    let dc = degree_constants(n, p)?;
    let denom = mu * mu + rf(dc.f_pm2) - lambda_s;
    if denom == 0.0 || !(mu > 0.0) {
        return Err(Error::invalid(format!("no H5 eigenvector for mu = {mu}, lambda = {lambda_s}")));
    }
    Ok(Vector2::new(2.0 * mu / denom, 1.0).normalize())
}

/// Rotation whose columns are the H5 eigenvectors for γ₋ then γ₊.
pub fn h5_rotation(mu: f64, p: i64, n: usize) -> Result<Matrix2<f64>> {
    let dc = degree_constants(n, p)?;
    let (gm, gp) = gamma_pm(mu * mu, rf(dc.a_p))?;
    let c0 = h5_eigenvector(mu, p, n, gm * (gm + 1.0))?;
    let c1 = h5_eigenvector(mu, p, n, gp * (gp + 1.0))?;
    Ok(Matrix2::from_columns(&[c0, c1]))
}

/// Lists the channels of degree p whose spectrum can reach below `lambda_max`.
///
/// Every eigenvalue of a channel with transversal eigenvalue μ² > 0 is at
/// least μ², so channels with μ² > `lambda_max` are omitted.
pub fn enumerate_channels(ts: &TransversalSpectrum, p: i64, lambda_max: f64) -> Result<Vec<Channel>> {
    let n = ts.n;
    degree_constants(n, p)?;
    if lambda_max > ts.cutoff * (1.0 + LEVEL_REL_TOL) {
        return Err(Error::IncompleteSpectrum(format!(
            "window {lambda_max} exceeds the transversal cutoff {}",
            ts.cutoff
        )));
    }
    let mut out = Vec::new();
    if ts.betti(p - 1) > 0 {
        out.push(Channel::new(ChannelKind::H1, n, p, Mu2::zero(), ts.betti(p - 1))?);
    }
    if p <= n as i64 && ts.betti(p) > 0 {
        out.push(Channel::new(ChannelKind::H2, n, p, Mu2::zero(), ts.betti(p))?);
    }
    let sources = [
        (ChannelKind::H3, ts.coexact(p - 2)),
        (ChannelKind::H4, ts.coexact(p)),
        (ChannelKind::H5, ts.coexact(p - 1)),
    ];
    for (kind, levels) in sources {
        for level in levels.iter().filter(|l| l.mu2.value() <= lambda_max) {
            out.push(Channel::new(kind, n, p, level.mu2, level.mult)?);
        }
    }
    Ok(out)
}

/// Which closed extension of the spindle operator the limit selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseTag {
    Friedrichs,
    DminDmax,
    CoupledMiddle,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseTag::Friedrichs => "friedrichs",
            CaseTag::DminDmax => "dmin_dmax",
            CaseTag::CoupledMiddle => "coupled-middle",
        })
    }
}

/// An eigenvalue of the cone operator A lying in ]−1/2, 1/2[.
#[derive(Clone, Debug)]
pub struct GapEigenvalue {
    pub degree: i64,
    pub kind: ChannelKind,
    /// The eigenvalue of A. On H5 this is √(a_p² + μ²) − 1/2.
    pub a_eigenvalue: f64,
    /// The cone exponent of the channel branch carrying it (γ₋ on H5).
    pub channel_gamma: f64,
    pub mu2: Mu2,
    pub mult: u64,
}

#[derive(Clone, Debug)]
pub struct ExtensionRegime {
    pub degree: i64,
    pub gamma_in_gap: Vec<GapEigenvalue>,
    pub essentially_selfadjoint: bool,
    pub case_tag: CaseTag,
}

/// Extension regime of degree p: eigenvalues of A in the gap and the case tag.
pub fn extension_regime(ts: &TransversalSpectrum, p: i64) -> Result<ExtensionRegime> {
    let n = ts.n;
    let dc = degree_constants(n, p)?;
    let one = Rational64::from_integer(1);
    // H5 eigenvalues in the gap need μ² < 1 − a_p².
    let needed = one - dc.a_p * dc.a_p;
    if needed.is_positive() && (ts.cutoff < rf(needed)) {
        return Err(Error::IncompleteSpectrum(format!(
            "degree {p} needs the transversal spectrum up to {}",
            rf(needed)
        )));
    }
    let mut gap = Vec::new();
    if dc.nu == Rational64::from_integer(0) && ts.betti(p - 1) > 0 {
        gap.push(GapEigenvalue {
            degree: p,
            kind: ChannelKind::H1,
            a_eigenvalue: 0.0,
            channel_gamma: 0.0,
            mu2: Mu2::zero(),
            mult: ts.betti(p - 1),
        });
    }
    if dc.w_alpha == Rational64::from_integer(0) && ts.betti(p) > 0 {
        gap.push(GapEigenvalue {
            degree: p,
            kind: ChannelKind::H2,
            a_eigenvalue: 0.0,
            channel_gamma: 0.0,
            mu2: Mu2::zero(),
            mult: ts.betti(p),
        });
    }
    for level in ts.exact(p) {
        if level.mu2.lt_exact(needed) {
            let s = (level.mu2.value() + rf(dc.a_p * dc.a_p)).sqrt();
            gap.push(GapEigenvalue {
                degree: p,
                kind: ChannelKind::H5,
                a_eigenvalue: s - 0.5,
                channel_gamma: 0.5 - s,
                mu2: level.mu2,
                mult: level.mult,
            });
        }
    }
    let case_tag = case_tag(ts, p, &gap);
    Ok(ExtensionRegime { degree: p, essentially_selfadjoint: gap.is_empty(), gamma_in_gap: gap, case_tag })
}

fn case_tag(ts: &TransversalSpectrum, p: i64, gap: &[GapEigenvalue]) -> CaseTag {
    let n = ts.n as i64;
    if n % 2 == 0 && (p == n / 2 || p == n / 2 + 1) && ts.betti(n / 2) > 0 {
        return CaseTag::CoupledMiddle;
    }
    if n % 2 == 1 && p == (n + 1) / 2 && gap.iter().any(|g| g.kind == ChannelKind::H5) {
        return CaseTag::DminDmax;
    }
    CaseTag::Friedrichs
}

/// Spectrum of the cone operator A summed over all degrees.
#[derive(Clone, Debug)]
pub struct ASpectrum {
    /// (eigenvalue, multiplicity) in ascending order, restricted to |γ| ≤ window.
    pub eigenvalues: Vec<(f64, u64)>,
    /// One regime per degree 0..=n+1.
    pub regimes: Vec<ExtensionRegime>,
}

impl ASpectrum {
    pub fn essentially_selfadjoint(&self) -> bool {
        self.regimes.iter().all(|r| r.essentially_selfadjoint)
    }
}

/// Eigenvalues of A with |γ| ≤ `window`: ±(n/2 − q) with multiplicity b_q
/// and ±1/2 ± √(μ² + a_p²) for every exact p-form eigenvalue μ².
pub fn spectrum_of_a(ts: &TransversalSpectrum, window: f64) -> Result<ASpectrum> {
    let n = ts.n;
    let needed = (window + 0.5).powi(2);
    if needed > ts.cutoff * (1.0 + LEVEL_REL_TOL) {
        return Err(Error::IncompleteSpectrum(format!(
            "an A-window of {window} needs the transversal spectrum up to {needed}"
        )));
    }
    let mut values: Vec<(f64, u64)> = Vec::new();
    for q in 0..=n as i64 {
        let b = ts.betti(q);
        if b > 0 {
            let g = rf(half(n as i64) - Rational64::from_integer(q));
            values.push((g, b));
            values.push((-g, b));
        }
    }
    for p in 0..=n as i64 + 1 {
        let a = rf(a_value(n, p));
        for level in ts.exact(p) {
            let s = (level.mu2.value() + a * a).sqrt();
            for g in [0.5 + s, 0.5 - s, -0.5 + s, -0.5 - s] {
                values.push((g, level.mult));
            }
        }
    }
    values.retain(|(g, _)| g.abs() <= window + 1e-12);
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, u64)> = Vec::new();
    for (g, m) in values {
        match merged.last_mut() {
            Some((h, k)) if (g - *h).abs() <= 1e-12 * (1.0 + g.abs()) => *k += m,
            _ => merged.push((g, m)),
        }
    }
    let regimes = (0..=n as i64 + 1).map(|p| extension_regime(ts, p)).collect::<Result<Vec<_>>>()?;
    Ok(ASpectrum { eigenvalues: merged, regimes })
}

/// Whether the indicial operator N = γ + μ − diag(ν, p − n/2) is singular on
/// the branch of exponent γ of a channel with transversal eigenvalue μ² > 0.
///
/// `gamma` must be one of the exponents of `kind` at (μ, p, n).
pub fn n_operator_singular(kind: ChannelKind, gamma: f64, mu: f64, p: i64, n: usize) -> Result<bool> {
    if kind.is_harmonic() {
        return Err(Error::invalid("the indicial operator is defined for mu > 0 channels only"));
    }
    let channel = Channel::new(kind, n, p, Mu2::Real(mu * mu), 1)?;
    let gammas = channel.gamma_list();
    let branch = gammas
        .iter()
        .position(|g| (g - gamma).abs() <= 1e-10 * (1.0 + g.abs()))
        .ok_or(Error::InadmissibleExponent { gamma })?;
    let dc = channel.constants();
    let (nu, wa) = (rf(dc.nu), rf(dc.w_alpha));
    let tol = 1e-10 * (1.0 + mu + gamma.abs());
    Ok(match kind {
        ChannelKind::H3 => (gamma + mu - nu).abs() <= tol,
        ChannelKind::H4 => (gamma + mu - wa).abs() <= tol,
        ChannelKind::H5 => {
            let g = gammas[branch];
            let v = h5_eigenvector(mu, p, n, g * (g + 1.0))?;
            let nv = Vector2::new((gamma + mu - nu) * v[0], (gamma + mu - wa) * v[1]);
            nv.norm() <= tol
        }
        ChannelKind::H1 | ChannelKind::H2 => unreachable!(),
    })
}

/// Writes channels as CSV with columns
/// kind,p,mu2,mult,gamma_minus,gamma_plus,v11,v12,v21,v22.
pub fn write_channels_csv<W: Write>(channels: &[Channel], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "p", "mu2", "mult", "gamma_minus", "gamma_plus", "v11", "v12", "v21", "v22"])?;
    for c in channels {
        let (gm, gp) = match c.gammas {
            Gammas::Scalar(g) => (g.to_string(), String::new()),
            Gammas::Pair { minus, plus } => (minus.to_string(), plus.to_string()),
        };
        let v = match c.potential {
            ConePotential::Scalar(x) => [x.to_string(), String::new(), String::new(), String::new()],
            ConePotential::Pair(m) => [m[0][0], m[0][1], m[1][0], m[1][1]].map(|x| x.to_string()),
        };
        w.write_record([
            c.kind.to_string(),
            c.p.to_string(),
            c.mu2.to_string(),
            c.mult.to_string(),
            gm,
            gp,
            v[0].clone(),
            v[1].clone(),
            v[2].clone(),
            v[3].clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
