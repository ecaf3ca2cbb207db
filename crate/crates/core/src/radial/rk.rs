//! Adaptive Dormand–Prince 5(4) integration of u″ = (V/t² − λ)u.
//!
//! Used for cone propagation at large |λ|t², where the Frobenius series loses
//! accuracy to cancellation, and as an independent cross-check of the series.

use nalgebra::{Matrix2, SMatrix};

use crate::error::{Error, Result};

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const RTOL: f64 = 1e-13;
const MAX_STEPS: usize = 200_000;

/// Fundamental matrix of Y′ = F(t)Y, Y(t0) = I, integrated to t1 for a
/// first-order system of size `D`.
pub fn propagate<const D: usize>(
    rhs: impl Fn(f64) -> SMatrix<f64, D, D>,
    t0: f64,
    t1: f64,
) -> Result<SMatrix<f64, D, D>> {
    let mut y = SMatrix::<f64, D, D>::identity();
    let mut t = t0;
    let total = t1 - t0;
    if total == 0.0 {
        return Ok(y);
    }
    let dir = total.signum();
    let mut h = total / 64.0;
    let mut k: [SMatrix<f64, D, D>; 7] = [SMatrix::zeros(); 7];
    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        k[0] = rhs(t) * y;
        for s in 1..7 {
            let mut acc = y;
            for j in 0..s {
                if A[s - 1][j] != 0.0 {
                    acc += k[j] * (h * A[s - 1][j]);
                }
            }
            k[s] = rhs(t + C[s] * h) * acc;
        }
        let mut y5 = y;
        let mut err = SMatrix::<f64, D, D>::zeros();
        for s in 0..7 {
            y5 += k[s] * (h * B5[s]);
            err += k[s] * (h * (B5[s] - B4[s]));
        }
        let scale = y5.amax().max(y.amax()).max(1e-300);
        let e = err.amax() / (RTOL * scale);
        if e <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if e == 0.0 { 4.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 4.0) };
        h *= factor;
        if h.abs() < 1e-15 * t.abs().max(1e-300) {
            return Err(Error::numerical("step size underflow in cone integration"));
        }
    }
    Err(Error::numerical("too many steps in cone integration"))
}

/// Propagator of −u″ + c u/t² = λu acting on (u, u′) from t0 to t1.
pub fn propagate_scalar(c: f64, lambda: f64, t0: f64, t1: f64) -> Result<Matrix2<f64>> {
    propagate::<2>(|t| Matrix2::new(0.0, 1.0, if c == 0.0 { -lambda } else { c / (t * t) - lambda }, 0.0), t0, t1)
}

/// Propagator of −u″ + V u/t² = λu for a 2×2 potential acting on
/// (u₁, u₂, u₁′, u₂′).
pub fn propagate_pair(v: [[f64; 2]; 2], lambda: f64, t0: f64, t1: f64) -> Result<SMatrix<f64, 4, 4>> {
    propagate::<4>(
        |t| {
            let mut f = SMatrix::<f64, 4, 4>::zeros();
            f[(0, 2)] = 1.0;
            f[(1, 3)] = 1.0;
            let inv = 1.0 / (t * t);
            f[(2, 0)] = v[0][0] * inv - lambda;
            f[(2, 1)] = v[0][1] * inv;
            f[(3, 0)] = v[1][0] * inv;
            f[(3, 1)] = v[1][1] * inv - lambda;
            f
        },
        t0,
        t1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_oscillator() {
        let m = propagate_scalar(0.0, 4.0, 0.5, 1.5).unwrap();
        assert!((m[(0, 0)] - 2.0f64.cos()).abs() < 1e-11);
        assert!((m[(0, 1)] - 2.0f64.sin() / 2.0).abs() < 1e-11);
    }
}
