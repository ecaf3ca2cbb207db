//! Transfer matrices for (u, u′) across the pieces of one period.
//!
//! Scalar channels use 2×2 matrices acting on (u, u′). The H5 channel uses
//! 4×4 matrices acting on (u_β, u_α, u_β′, u_α′). Products can reach e^{500}
//! and more when the handle mass μ²/ε² is large, so a [`Transfer`] keeps a
//! separate logarithmic scale: the represented matrix is `mat · e^{log_scale}`.

use nalgebra::{Matrix2, SMatrix};

use super::cone::ConeBasis;
use super::rk;
use crate::error::{Error, Result};
use crate::modes::{Channel, ConePotential};

/// Largest |λ|t² for which cone solutions are taken from the series alone.
pub const SERIES_Y_MAX: f64 = 64.0;
const RENORM_ABOVE: f64 = 1e16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transfer<const D: usize> {
    pub mat: SMatrix<f64, D, D>,
    pub log_scale: f64,
}

impl<const D: usize> Transfer<D> {
    pub fn identity() -> Self {
        Transfer { mat: SMatrix::identity(), log_scale: 0.0 }
    }

    pub fn from_mat(mat: SMatrix<f64, D, D>) -> Self {
        Transfer { mat, log_scale: 0.0 }.normalized()
    }

    fn normalized(mut self) -> Self {
        let m = self.mat.amax();
        if m > RENORM_ABOVE && m.is_finite() {
            self.mat /= m;
            self.log_scale += m.ln();
        }
        self
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn then_after(&self, other: &Transfer<D>) -> Transfer<D> {
        Transfer { mat: self.mat * other.mat, log_scale: self.log_scale + other.log_scale }.normalized()
    }

    pub fn inverse(&self) -> Result<Transfer<D>> {
        let inv = self.mat.try_inverse().ok_or_else(|| Error::numerical("singular transfer matrix"))?;
        Ok(Transfer { mat: inv, log_scale: -self.log_scale }.normalized())
    }

    /// The represented matrix; overflows to ±inf when the scale is huge.
    pub fn unscaled(&self) -> SMatrix<f64, D, D> {
        self.mat * self.log_scale.exp()
    }

    pub fn trace_scaled(&self) -> f64 {
        self.mat.trace()
    }

    /// Sum of principal 2×2 minors of the scaled matrix (second invariant).
    pub fn second_invariant_scaled(&self) -> f64 {
        let m = &self.mat;
        let mut s = 0.0;
        for i in 0..D {
            for j in i + 1..D {
                s += m[(i, i)] * m[(j, j)] - m[(i, j)] * m[(j, i)];
            }
        }
        s
    }
}

impl Transfer<2> {
    /// Inverse of a matrix with unit determinant, via the adjugate.
    pub fn unimodular_inverse(&self) -> Transfer<2> {
        let m = &self.mat;
        Transfer { mat: Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]), log_scale: self.log_scale }
    }
}

/// Propagator of −u″ + m²u = λu over length ℓ (scaled for evanescent segments).
pub fn segment_propagator(mass2: f64, lambda: f64, len: f64) -> Transfer<2> {
    let k2 = lambda - mass2;
    let x = k2 * len * len;
    if x.abs() < 1e-6 {
        // Taylor expansion of cos(kℓ), sin(kℓ)/k and k·sin(kℓ) in k²
        let c = 1.0 - x / 2.0 + x * x / 24.0 - x * x * x / 720.0;
        let s = len * (1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0);
        let ks = k2 * len * (1.0 - x / 6.0 + x * x / 120.0);
        return Transfer { mat: Matrix2::new(c, s, -ks, c), log_scale: 0.0 };
    }
    if k2 > 0.0 {
        let k = k2.sqrt();
        let (s, c) = (k * len).sin_cos();
        Transfer { mat: Matrix2::new(c, s / k, -k * s, c), log_scale: 0.0 }
    } else {
        let kappa = (-k2).sqrt();
        let z = kappa * len;
        if z < 20.0 {
            let (c, s) = (z.cosh(), z.sinh());
            Transfer { mat: Matrix2::new(c, s / kappa, kappa * s, c), log_scale: 0.0 }
        } else {
            let e = (-2.0 * z).exp();
            let (c, s) = (0.5 * (1.0 + e), 0.5 * (1.0 - e));
            Transfer { mat: Matrix2::new(c, s / kappa, kappa * s, c), log_scale: z }
        }
    }
}

/// Embeds a scalar propagator acting identically on both H5 components.
pub fn expand_pair(t: &Transfer<2>) -> Transfer<4> {
    let m = &t.mat;
    let mut out = SMatrix::<f64, 4, 4>::zeros();
    for c in 0..2 {
        out[(c, c)] = m[(0, 0)];
        out[(c, 2 + c)] = m[(0, 1)];
        out[(2 + c, c)] = m[(1, 0)];
        out[(2 + c, 2 + c)] = m[(1, 1)];
    }
    Transfer { mat: out, log_scale: t.log_scale }
}

/// Scalar cone propagator Φ(t₁)Φ(t₀)⁻¹ for exponent γ.
pub fn cone_propagator_scalar(gamma: f64, lambda: f64, t0: f64, t1: f64) -> Result<Transfer<2>> {
    if !(t0 > 0.0 && t1 > 0.0) {
        return Err(Error::invalid("cone propagation needs t > 0 at both ends"));
    }
    if t0 == t1 {
        return Ok(Transfer::identity());
    }
    if t1 < t0 {
        return Ok(cone_propagator_scalar(gamma, lambda, t1, t0)?.unimodular_inverse());
    }
    let c = gamma * (gamma + 1.0);
    let t_series = if lambda == 0.0 { f64::INFINITY } else { (SERIES_Y_MAX / lambda.abs()).sqrt() };
    if t1 <= t_series {
        let basis = ConeBasis::new(gamma, lambda, t1)?;
        return Ok(Transfer::from_mat(basis.fundamental(t1) * inverse2(&basis.fundamental(t0))?));
    }
    let mut out = Transfer::identity();
    let mut start = t0;
    if t0 < t_series {
        let basis = ConeBasis::new(gamma, lambda, t_series)?;
        out = Transfer::from_mat(basis.fundamental(t_series) * inverse2(&basis.fundamental(t0))?);
        start = t_series;
    }
    let tail = rk::propagate_scalar(c, lambda, start, t1)?;
    Ok(Transfer::from_mat(tail).then_after(&out))
}

fn inverse2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let det = m.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::numerical("degenerate cone fundamental matrix"));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Cone propagator in the cone's own radial frame from t₀ to t₁.
pub fn cone_propagator_pair(channel: &Channel, lambda: f64, t0: f64, t1: f64) -> Result<Transfer<4>> {
    let ConePotential::Pair(_) = channel.potential else {
        return Err(Error::invalid("pair propagator requested for a scalar channel"));
    };
    let r = crate::modes::h5_rotation(channel.mu(), channel.p, channel.n)?;
    let gammas = channel.gamma_list();
    let parts = [
        cone_propagator_scalar(gammas[0], lambda, t0, t1)?,
        cone_propagator_scalar(gammas[1], lambda, t0, t1)?,
    ];
    let scale = parts[0].log_scale.max(parts[1].log_scale);
    let mut z = SMatrix::<f64, 4, 4>::zeros();
    for (i, part) in parts.iter().enumerate() {
        let f = (part.log_scale - scale).exp();
        z[(i, i)] = part.mat[(0, 0)] * f;
        z[(i, 2 + i)] = part.mat[(0, 1)] * f;
        z[(2 + i, i)] = part.mat[(1, 0)] * f;
        z[(2 + i, 2 + i)] = part.mat[(1, 1)] * f;
    }
    let rot = block_diag(&r);
    Ok(Transfer::from_mat(rot * z * rot.transpose()).then_after(&Transfer { mat: SMatrix::identity(), log_scale: scale }))
}

fn block_diag(r: &Matrix2<f64>) -> SMatrix<f64, 4, 4> {
    let mut out = SMatrix::<f64, 4, 4>::zeros();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(r);
    out.fixed_view_mut::<2, 2>(2, 2).copy_from(r);
    out
}

/// Which cone meets a flat piece at a junction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// The cone on which ρ increases along τ.
    Right,
    /// The cone on which ρ decreases along τ.
    Left,
}

/// Options altering the matching at junctions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MatchingOptions {
    /// Reverses the sign of the interface weights. Only meant to verify that
    /// the cross-solver checks detect a wrong matching convention.
    pub flip_interface_weights: bool,
}

/// Map from the cone's own-frame data (u, u′) at a junction of radius ρ to
/// the data of the adjacent flat piece.
///
/// Right cone: (u, u′) ↦ (u, u′ + (w/ρ)u). Left cone:
/// (u, u′) ↦ (s·u, −s·(u′ + (w/ρ)u)) with s = −1 on β and +1 on α.
/// The weight w is ν on β and p − n/2 on α.
pub fn interface_map<const D: usize>(
    side: Side,
    channel: &Channel,
    rho: f64,
    opts: &MatchingOptions,
) -> Result<SMatrix<f64, D, D>> {
    let c = channel.dim();
    if 2 * c != D {
        return Err(Error::invalid(format!("channel {} has {c} components, matrix size {D}", channel.label())));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("interface radius must be positive"));
    }
    let flip = if opts.flip_interface_weights { -1.0 } else { 1.0 };
    let weights = channel.weights();
    let signs = channel.left_signs();
    let mut m = SMatrix::<f64, D, D>::zeros();
    for i in 0..c {
        let w = flip * weights[i] / rho;
        let s = match side {
            Side::Right => 1.0,
            Side::Left => signs[i],
        };
        let d = match side {
            Side::Right => 1.0,
            Side::Left => -signs[i],
        };
        m[(i, i)] = s;
        m[(c + i, i)] = d * w;
        m[(c + i, c + i)] = d;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::ChannelKind;
    use crate::transversal::Mu2;

    #[test]
    fn segment_propagator_is_unimodular() {
        for &(m2, lam, l) in &[(0.0, 2.0, 1.0), (5.0, 1.0, 2.0), (1.0, 1.0 + 1e-9, 3.0)] {
            let t = segment_propagator(m2, lam, l);
            let det = t.mat.determinant() * (2.0 * t.log_scale).exp();
            assert!((det - 1.0).abs() < 1e-12, "det = {det}");
        }
    }

    #[test]
    fn scaled_hyperbolic_branch() {
        let t = segment_propagator(400.0, 1.0, 3.0);
        let kappa = 399.0f64.sqrt();
        let z = kappa * 3.0;
        assert!((t.log_scale - z).abs() < 1e-12);
        assert!((t.mat[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((t.mat[(0, 1)] - 0.5 / kappa).abs() < 1e-14);
        assert!((t.mat[(1, 0)] - 0.5 * kappa).abs() < 1e-12);
    }

    #[test]
    fn massless_circle_trace() {
        let t = segment_propagator(0.0, 1.0, std::f64::consts::PI);
        assert!((t.trace_scaled() + 2.0).abs() < 1e-14);
    }

    #[test]
    fn right_interface_example() {
        let ch = Channel::new(ChannelKind::H1, 2, 1, Mu2::zero(), 1).unwrap();
        let m: Matrix2<f64> = interface_map(Side::Right, &ch, 0.25, &MatchingOptions::default()).unwrap();
        assert_eq!(m, Matrix2::new(1.0, 0.0, 4.0, 1.0));
    }

    #[test]
    fn cone_propagator_composes() {
        for &(g, lam) in &[(0.0, 3.0), (1.5, 30.0), (-0.5, 2.0), (0.8, 90.0)] {
            let a = cone_propagator_scalar(g, lam, 0.1, 0.5).unwrap();
            let b = cone_propagator_scalar(g, lam, 0.5, 1.0).unwrap();
            let full = cone_propagator_scalar(g, lam, 0.1, 1.0).unwrap();
            let comp = b.then_after(&a);
            let diff = (comp.unscaled() - full.unscaled()).norm() / full.unscaled().norm();
            assert!(diff < 1e-9, "gamma={g} lambda={lam} diff={diff}");
        }
    }

    #[test]
    fn pair_propagator_is_symplectic() {
        let ch = Channel::new(ChannelKind::H5, 1, 1, Mu2::Real(4.0), 2).unwrap();
        let t = cone_propagator_pair(&ch, 5.0, 0.05, 1.0).unwrap().unscaled();
        let mut j = SMatrix::<f64, 4, 4>::zeros();
        j.fixed_view_mut::<2, 2>(0, 2).copy_from(&Matrix2::identity());
        j.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-Matrix2::identity()));
        let defect = (t.transpose() * j * t - j).norm() / t.norm().powi(2);
        assert!(defect < 1e-12, "defect {defect}");
    }
}
