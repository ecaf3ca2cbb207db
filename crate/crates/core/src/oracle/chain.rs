//! Inertia of K − λW for the periodic block-tridiagonal stiffness matrix.
//!
//! Node k and node N−1−k are grouped into super-node k, which turns the
//! cyclic coupling into a plain block-tridiagonal chain. The block Sturm
//! recursion `D_k = A_k − λW_k − E*_{k−1} D⁻¹_{k−1} E_{k−1}` then gives the
//! inertia as the sum of the inertias of the pivots D_k, each obtained by a
//! Bunch–Parlett factorization.

use num_complex::Complex64;

type Big = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct Chain {
    /// Super-node size 2c.
    size: usize,
    a: Vec<Big>,
    w: Vec<[f64; 4]>,
    e: Vec<Big>,
}

/// Number of negative eigenvalues and log|det| of a shifted matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inertia {
    pub negatives: usize,
    pub log_abs_det: f64,
}

impl Inertia {
    /// det(K − λW) / e^{reference}, with its sign.
    pub fn scaled_det(&self, reference: f64) -> f64 {
        let s = if self.negatives % 2 == 0 { 1.0 } else { -1.0 };
        s * (self.log_abs_det - reference).exp()
    }
}

impl Chain {
    pub fn new(dim: usize, diag: &[[[Complex64; 2]; 2]], upper: &[[[Complex64; 2]; 2]], weight: &[f64]) -> Chain {
        let nn = diag.len();
        let m = nn.div_ceil(2);
        let size = 2 * dim;
        let locate = |j: usize| if j <= nn - 1 - j { (j, 0) } else { (nn - 1 - j, dim) };
        let mut a = vec![[[ZERO; 4]; 4]; m];
        let mut w = vec![[0.0; 4]; m];
        let mut e = vec![[[ZERO; 4]; 4]; m];
        if nn % 2 == 1 {
            // the middle node is alone in its super-node; pad with an identity block
            for i in dim..size {
                a[m - 1][i][i] = Complex64::new(1.0, 0.0);
            }
        }
        for j in 0..nn {
            let (k, o) = locate(j);
            for r in 0..dim {
                w[k][o + r] = weight[j];
                for s in 0..dim {
                    a[k][o + r][o + s] += diag[j][r][s];
                }
            }
            let next = (j + 1) % nn;
            let (kn, on) = locate(next);
            for r in 0..dim {
                for s in 0..dim {
                    let u = upper[j][r][s];
                    if kn == k {
                        a[k][o + r][on + s] += u;
                        a[k][on + s][o + r] += u.conj();
                    } else if kn == k + 1 {
                        e[k][o + r][on + s] += u;
                    } else if k == kn + 1 {
                        e[kn][on + s][o + r] += u.conj();
                    } else {
                        unreachable!("grid edge ({j}, {next}) skips a super-node");
                    }
                }
            }
        }
        Chain { size, a, w, e }
    }

    pub fn factor(&self, lambda: f64) -> Inertia {
        let n = self.size;
        let mut negatives = 0;
        let mut log_abs_det = 0.0;
        let mut carry = [[ZERO; 4]; 4];
        for k in 0..self.a.len() {
            let mut d = self.a[k];
            for i in 0..n {
                for j in 0..n {
                    d[i][j] -= carry[i][j];
                }
                d[i][i] -= lambda * self.w[k][i];
            }
            let (neg, logdet) = bunch_parlett(&d, n);
            negatives += neg;
            log_abs_det += logdet;
            if k + 1 < self.a.len() {
                let e = &self.e[k];
                let x = solve(&d, e, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut v = ZERO;
                        for r in 0..n {
                            v += e[r][i].conj() * x[r][j];
                        }
                        carry[i][j] = v;
                    }
                }
            }
        }
        Inertia { negatives, log_abs_det }
    }
}

/// Solves D X = E by Gaussian elimination with partial pivoting; a singular
/// pivot is replaced by a tiny value.
fn solve(d: &Big, e: &Big, n: usize) -> Big {
    let mut a = *d;
    let mut b = *e;
    let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| d[i][j].norm()).fold(0.0, f64::max);
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm())).unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        if a[col][col].norm() == 0.0 {
            a[col][col] = Complex64::new(tiny, 0.0);
        }
        let inv = a[col][col].inv();
        for r in col + 1..n {
            let f = a[r][col] * inv;
            if f == ZERO {
                continue;
            }
            for c in col..n {
                let v = f * a[col][c];
                a[r][c] -= v;
            }
            for c in 0..n {
                let v = f * b[col][c];
                b[r][c] -= v;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = a[col][col].inv();
        for c in 0..n {
            let mut v = b[col][c];
            for k in col + 1..n {
                v -= a[col][k] * b[k][c];
            }
            b[col][c] = v * inv;
        }
    }
    b
}

/// Inertia count and log|det| of a small Hermitian matrix by symmetric
/// Bunch–Parlett pivoting. Zero eigenvalues are counted as non-negative.
fn bunch_parlett(m: &Big, n: usize) -> (usize, f64) {
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let mut a = *m;
    let mut active: Vec<usize> = (0..n).collect();
    let mut negatives = 0;
    let mut logdet = 0.0;
    while !active.is_empty() {
        let mut mu0 = 0.0;
        let mut off = (active[0], active[0]);
        let mut mu1 = -1.0;
        let mut piv = active[0];
        for (x, &i) in active.iter().enumerate() {
            let d = a[i][i].re.abs();
            if d > mu1 {
                mu1 = d;
                piv = i;
            }
            for &j in &active[x + 1..] {
                let v = a[i][j].norm();
                if v > mu0 {
                    mu0 = v;
                    off = (i, j);
                }
            }
        }
        if mu1 == 0.0 && mu0 == 0.0 {
            logdet = f64::NEG_INFINITY;
            break;
        }
        if mu1 >= alpha * mu0 || active.len() == 1 {
            let p = a[piv][piv].re;
            if p < 0.0 {
                negatives += 1;
            }
            logdet += p.abs().ln();
            active.retain(|&i| i != piv);
            for &i in &active {
                let f = a[i][piv] / p;
                for &j in &active {
                    let v = f * a[piv][j];
                    a[i][j] -= v;
                }
            }
        } else {
            let (i0, j0) = off;
            let (p, q, r) = (a[i0][i0].re, a[i0][j0], a[j0][j0].re);
            let det = p * r - q.norm_sqr();
            negatives += if det < 0.0 {
                1
            } else if p + r < 0.0 {
                2
            } else {
                0
            };
            logdet += det.abs().ln();
            active.retain(|&i| i != i0 && i != j0);
            // inverse of the 2×2 pivot [[p, q], [q̄, r]]
            let inv = [
                [Complex64::new(r / det, 0.0), -q / det],
                [-q.conj() / det, Complex64::new(p / det, 0.0)],
            ];
            for &i in &active {
                let (ci, cj) = (a[i][i0], a[i][j0]);
                let f0 = ci * inv[0][0] + cj * inv[1][0];
                let f1 = ci * inv[0][1] + cj * inv[1][1];
                for &j in &active {
                    let v = f0 * a[i0][j] + f1 * a[j0][j];
                    a[i][j] -= v;
                }
            }
        }
    }
    (negatives, logdet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: &[&[f64]]) -> Big {
        let mut m = [[ZERO; 4]; 4];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                m[i][j] = Complex64::new(*v, 0.0);
            }
        }
        m
    }

    #[test]
    fn small_inertia() {
        let m = real(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, -2.0, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.0], &[0.0, 0.0, 0.0, -3.0]]);
        let (neg, ld) = bunch_parlett(&m, 4);
        assert_eq!(neg, 2);
        assert!((ld - 3.0f64.ln()).abs() < 1e-14);
        // [[0, 1], [1, 0]] needs a 2×2 pivot
        assert_eq!(bunch_parlett(&real(&[&[0.0, 1.0], &[1.0, 0.0]]), 2).0, 1);
    }

    #[test]
    fn small_solve() {
        let d = real(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let e = real(&[&[2.0, 0.0], &[2.0, 1.0]]);
        let x = solve(&d, &e, 2);
        // D X = E
        for i in 0..2 {
            for j in 0..2 {
                let v: Complex64 = (0..2).map(|k| d[i][k] * x[k][j]).sum();
                assert!((v - e[i][j]).norm() < 1e-14);
            }
        }
    }
}
