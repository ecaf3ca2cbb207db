//! Frobenius basis of −u″ + γ(γ+1)u/t² = λu on a cone.
//!
//! The regular solution is f(t) = t^{γ+1} F(λt²) and the singular one is
//! g(t) = t^{−γ} G(λt²) + a·log(t)·f(t), where the logarithmic term appears
//! only when m = γ + 1/2 is a non-negative integer. In that case the
//! coefficient of (λt²)^m in G is set to zero. The Wronskian f g′ − f′ g
//! equals −(2γ+1), or 1 when γ = −1/2.

use nalgebra::Matrix2;

use crate::error::{Error, Result};

const SERIES_EPS: f64 = 1e-18;
const MAX_TERMS: usize = 400;

#[derive(Clone, Debug)]
pub struct ConeBasis {
    pub gamma: f64,
    pub lambda: f64,
    /// Coefficients of F in powers of y = λt².
    regular: Vec<f64>,
    /// Coefficients of G in powers of y.
    singular: Vec<f64>,
    /// Coefficient a of the logarithmic term.
    log_coeff: f64,
    resonance: Option<usize>,
}

impl ConeBasis {
    /// Series valid for t ∈ ]0, t_max].
    pub fn new(gamma: f64, lambda: f64, t_max: f64) -> Result<ConeBasis> {
        if !(gamma >= -0.5 - 1e-12) {
            return Err(Error::invalid(format!("cone exponent gamma = {gamma} must be at least -1/2")));
        }
        if !(lambda.is_finite() && t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::invalid("cone basis needs finite lambda and positive t_max"));
        }
        let gamma = gamma.max(-0.5);
        let ymax = (lambda * t_max * t_max).abs();
        let m_real = gamma + 0.5;
        let resonance = {
            let m = m_real.round();
            ((m_real - m).abs() < 1e-12).then_some(m as usize)
        };
        let gamma = match resonance {
            Some(m) => m as f64 - 0.5,
            None => gamma,
        };

        let mut regular = vec![1.0];
        extend_until_small(&mut regular, ymax, |k, prev| -prev / (4.0 * k as f64 * (k as f64 + gamma + 0.5)));

        let mut singular = vec![1.0];
        let log_coeff;
        match resonance {
            None => {
                log_coeff = 0.0;
                extend_until_small(&mut singular, ymax, |k, prev| {
                    -prev / (4.0 * k as f64 * (k as f64 - gamma - 0.5))
                });
            }
            Some(0) => {
                // Double indicial root: g = log(t) f + t^{1/2} Σ_{k≥1} d_k y^k.
                singular[0] = 0.0;
                log_coeff = 1.0;
                let reg = regular.clone();
                let mut k = 1;
                loop {
                    let ck = coeff(&reg, k);
                    let dk = -(singular[k - 1] + 4.0 * k as f64 * ck) / (4.0 * (k * k) as f64);
                    singular.push(dk);
                    if series_done(&singular, ymax, k) || k >= MAX_TERMS {
                        break;
                    }
                    k += 1;
                }
            }
            Some(m) => {
                for k in 1..m {
                    let prev = singular[k - 1];
                    singular.push(-prev / (4.0 * k as f64 * (k as f64 - m as f64)));
                }
                let alpha = -singular[m - 1] / (2.0 * gamma + 1.0);
                singular.push(0.0);
                let reg = regular.clone();
                let mut k = m + 1;
                loop {
                    let j = k - m;
                    let dk = -(singular[k - 1] + alpha * coeff(&reg, j) * (2.0 * gamma + 1.0 + 4.0 * j as f64))
                        / (4.0 * k as f64 * j as f64);
                    singular.push(dk);
                    if (k > 2 * m && series_done(&singular, ymax, k)) || k >= MAX_TERMS {
                        break;
                    }
                    k += 1;
                }
                log_coeff = alpha * lambda.powi(m as i32);
            }
        }
        if resonance.is_some() {
            // the log-case recursions reference regular coefficients beyond the original truncation
            extend_until_small(&mut regular, ymax, |k, prev| -prev / (4.0 * k as f64 * (k as f64 + gamma + 0.5)));
        }
        Ok(ConeBasis { gamma, lambda, regular, singular, log_coeff, resonance })
    }

    pub fn is_logarithmic(&self) -> bool {
        self.resonance.is_some()
    }

    pub fn log_coefficient(&self) -> f64 {
        self.log_coeff
    }

    /// (f, f′) at t.
    pub fn regular(&self, t: f64) -> (f64, f64) {
        let y = self.lambda * t * t;
        let g = self.gamma;
        let (s, ds) = series_pair(&self.regular, y, g + 1.0);
        (t.powf(g + 1.0) * s, t.powf(g) * ds)
    }

    /// (g, g′) at t.
    pub fn singular(&self, t: f64) -> (f64, f64) {
        let y = self.lambda * t * t;
        let g = self.gamma;
        let (s, ds) = series_pair(&self.singular, y, -g);
        let mut val = t.powf(-g) * s;
        let mut der = t.powf(-g - 1.0) * ds;
        if self.log_coeff != 0.0 {
            let (f, fp) = self.regular(t);
            let lt = t.ln();
            val += self.log_coeff * lt * f;
            der += self.log_coeff * (f / t + lt * fp);
        }
        (val, der)
    }

    /// Fundamental matrix [[f, g], [f′, g′]].
    pub fn fundamental(&self, t: f64) -> Matrix2<f64> {
        let (f, fp) = self.regular(t);
        let (g, gp) = self.singular(t);
        Matrix2::new(f, g, fp, gp)
    }

    pub fn wronskian(&self) -> f64 {
        if self.resonance == Some(0) {
            1.0
        } else {
            -(2.0 * self.gamma + 1.0)
        }
    }
}

fn coeff(c: &[f64], k: usize) -> f64 {
    c.get(k).copied().unwrap_or(0.0)
}

/// Σ c_k y^k and Σ c_k (e + 2k) y^k.
fn series_pair(c: &[f64], y: f64, e: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for (k, &ck) in c.iter().enumerate().rev() {
        s = s * y + ck;
        ds = ds * y + ck * (e + 2.0 * k as f64);
    }
    (s, ds)
}

fn series_done(c: &[f64], ymax: f64, k: usize) -> bool {
    let term = c[k].abs() * ymax.powi(k as i32);
    let peak = c.iter().enumerate().map(|(j, x)| x.abs() * ymax.powi(j as i32)).fold(0.0, f64::max);
    k as f64 > 0.5 * ymax.sqrt() + 2.0 && term <= SERIES_EPS * peak.max(1e-300)
}

fn extend_until_small(c: &mut Vec<f64>, ymax: f64, next: impl Fn(usize, f64) -> f64) {
    if ymax == 0.0 {
        return;
    }
    let mut k = c.len();
    loop {
        let v = next(k, c[k - 1]);
        c.push(v);
        if series_done(c, ymax, k) || k >= MAX_TERMS {
            break;
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(basis: &ConeBasis, t: f64, singular: bool) -> f64 {
        let h = 2e-3 * t;
        let pair = |s: f64| if singular { basis.singular(s) } else { basis.regular(s) };
        let u = |s: f64| pair(s).0;
        let upp = (-u(t + 2.0 * h) + 16.0 * u(t + h) - 30.0 * u(t) + 16.0 * u(t - h) - u(t - 2.0 * h)) / (12.0 * h * h);
        let c = basis.gamma * (basis.gamma + 1.0);
        let scale = (u(t).abs() + t * pair(t).1.abs()) * (1.0 / (t * t) + basis.lambda.abs());
        (-upp + c * u(t) / (t * t) - basis.lambda * u(t)).abs() / scale
    }

    #[test]
    fn solves_the_equation() {
        for &gamma in &[-0.5, -0.2, 0.0, 0.5, 1.0, 1.5, 2.3] {
            for &lambda in &[-3.0, 0.0, 2.0, 9.5] {
                let b = ConeBasis::new(gamma, lambda, 1.0).unwrap();
                for &t in &[0.05, 0.3, 0.9] {
                    assert!(residual(&b, t, false) < 1e-5, "regular gamma={gamma} lambda={lambda} t={t}");
                    assert!(residual(&b, t, true) < 1e-5, "singular gamma={gamma} lambda={lambda} t={t}");
                }
            }
        }
    }

    #[test]
    fn wronskian_is_constant() {
        for &gamma in &[-0.5, 0.0, 0.5, 1.5, 0.7] {
            let b = ConeBasis::new(gamma, 7.0, 1.0).unwrap();
            for &t in &[0.01, 0.2, 1.0] {
                let w = b.fundamental(t).determinant();
                assert!((w - b.wronskian()).abs() < 1e-10 * (1.0 + w.abs()), "gamma={gamma} t={t} w={w}");
            }
        }
    }

    #[test]
    fn elementary_cases() {
        // γ = 0: f = sin(kt)/k, g = cos(kt).
        let b = ConeBasis::new(0.0, 4.0, 1.0).unwrap();
        let t = 0.7;
        assert!((b.regular(t).0 - (2.0 * t).sin() / 2.0).abs() < 1e-14);
        assert!((b.singular(t).0 - (2.0 * t).cos()).abs() < 1e-14);
        // λ = 0 gives pure powers.
        let b = ConeBasis::new(1.5, 0.0, 1.0).unwrap();
        assert!((b.regular(0.5).0 - 0.5f64.powf(2.5)).abs() < 1e-15);
        assert!((b.singular(0.5).0 - 0.5f64.powf(-1.5)).abs() < 1e-12);
        assert_eq!(b.log_coefficient(), 0.0);
        assert!(b.is_logarithmic());
    }

    #[test]
    fn rejects_small_exponent() {
        assert!(ConeBasis::new(-0.7, 1.0, 1.0).is_err());
    }
}
