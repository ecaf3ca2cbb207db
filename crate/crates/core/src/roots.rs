//! Bracketing root search on a sampled real function, with detection of
//! double roots where the function touches zero without changing sign.

use crate::error::Result;

/// Roots of `f` in [lo, hi] found on a uniform grid of `intervals` cells.
///
/// Simple roots are bisected to `tol`. A local minimum of |f| without a sign
/// change is refined by golden-section search; it is reported as two roots
/// if the refined value changes sign and as a double root if it lies within
/// `touch_tol` of zero.
pub fn scan_roots<F>(f: F, lo: f64, hi: f64, intervals: usize, tol: f64, touch_tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = intervals.max(2);
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    // an exact zero on the grid is replaced by the values just beside it
    let delta = 1e-6 * h;
    let mut left = vals.clone();
    let mut right = vals.clone();
    let mut roots = Vec::new();
    for i in 0..=n {
        if vals[i] != 0.0 {
            continue;
        }
        if i > 0 {
            left[i] = f(xs[i] - delta)?;
        }
        if i < n {
            right[i] = f(xs[i] + delta)?;
        }
        let touching = i > 0 && i < n && left[i] * right[i] > 0.0;
        roots.push(xs[i]);
        if touching {
            roots.push(xs[i]);
        }
    }
    for i in 0..n {
        let (va, vb) = (right[i], left[i + 1]);
        let a = if vals[i] == 0.0 { xs[i] + delta } else { xs[i] };
        let b = if vals[i + 1] == 0.0 { xs[i + 1] - delta } else { xs[i + 1] };
        if va * vb < 0.0 {
            roots.push(bisect(&f, a, b, va, tol)?);
            continue;
        }
        if i == 0 || vals[i] == 0.0 || vals[i + 1] == 0.0 || vals[i - 1] == 0.0 {
            continue;
        }
        let vp = vals[i - 1];
        let va = vals[i];
        let vb = vals[i + 1];
        if !(vp * va > 0.0 && va.abs() <= vp.abs() && va.abs() < vb.abs()) {
            continue;
        }
        let sign = va.signum();
        let (x, fx) = golden_min(&f, xs[i - 1], xs[i + 1], sign)?;
        if fx < 0.0 {
            roots.push(bisect(&f, xs[i - 1], x, va, tol)?);
            roots.push(bisect(&f, x, xs[i + 1], -va, tol)?);
        } else if fx <= touch_tol {
            roots.push(x);
            roots.push(x);
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(roots)
}

fn bisect<F>(f: &F, mut a: f64, mut b: f64, fa: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let sa = fa.signum();
    for _ in 0..200 {
        if b - a <= tol * a.abs().max(1.0) {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m)?;
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

/// Minimizes sign·f on [a, b], stopping early once the value turns negative.
fn golden_min<F>(f: &F, mut a: f64, mut b: f64, sign: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = sign * f(x1)?;
    let mut f2 = sign * f(x2)?;
    for _ in 0..100 {
        if f1 < 0.0 || f2 < 0.0 || b - a < 1e-14 * a.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sign * f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sign * f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_and_double_roots() {
        let f = |x: f64| Ok((x - 0.3) * (x - 1.7).powi(2) * (x - 2.2));
        let r = scan_roots(f, 0.0, 3.0, 300, 1e-14, 1e-12).unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[0] - 0.3).abs() < 1e-12);
        assert!((r[1] - 1.7).abs() < 1e-6 && (r[2] - 1.7).abs() < 1e-6);
        assert!((r[3] - 2.2).abs() < 1e-12);
    }

    #[test]
    fn close_pair_inside_one_cell() {
        let f = |x: f64| Ok((x - 1.0) * (x - 1.001) + 0.0);
        let r = scan_roots(f, 0.0, 2.0, 20, 1e-14, 0.0).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 1.001).abs() < 1e-12);
    }
}
