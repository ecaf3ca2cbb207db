use std::f64::consts::PI;

use hodge_bands::modes::{enumerate_channels, spectrum_of_a};
use hodge_bands::transversal::flat_torus;

fn lattice_count(sides: &[f64], mu2: f64) -> u64 {
    let r = 12i64;
    let mut count = 0;
    let mut k = vec![-r; sides.len()];
    loop {
        let v: f64 = k.iter().zip(sides).map(|(&ki, l)| (2.0 * PI * ki as f64 / l).powi(2)).sum();
        if (v - mu2).abs() <= 1e-9 * mu2.max(1.0) {
            count += 1;
        }
        let mut i = 0;
        while i < k.len() {
            k[i] += 1;
            if k[i] <= r {
                break;
            }
            k[i] = -r;
            i += 1;
        }
        if i == k.len() {
            return count;
        }
    }
}

#[test]
fn form_eigenspaces_match_lattice_enumeration() {
    for sides in [vec![2.0 * PI], vec![4.0 * PI], vec![2.0 * PI, 3.0 * PI], vec![2.0 * PI, 2.0 * PI, 4.0 * PI]] {
        let ts = flat_torus(&sides, 9.0).unwrap();
        let n = ts.n as i64;
        let mut levels: Vec<f64> = (0..=n).flat_map(|q| ts.coexact(q).iter().map(|l| l.mu2.value())).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        for mu2 in levels {
            let mult = |list: &[hodge_bands::transversal::Level]| -> u64 {
                list.iter().filter(|l| (l.mu2.value() - mu2).abs() < 1e-12).map(|l| l.mult).sum()
            };
            let total: u64 = (0..=n).map(|q| mult(ts.coexact(q)) + mult(ts.exact(q))).sum();
            assert_eq!(total, (1u64 << n) * lattice_count(&sides, mu2), "{sides:?} mu2 {mu2}");
        }
        let harmonic: u64 = ts.betti.iter().sum();
        assert_eq!(harmonic, 1u64 << n);
    }
}

#[test]
fn channel_exponents_are_cone_operator_eigenvalues() {
    let window = 2.0;
    for sides in [vec![2.0 * PI], vec![4.0 * PI], vec![2.0 * PI, 2.0 * PI]] {
        let ts = flat_torus(&sides, 30.0).unwrap();
        let a = spectrum_of_a(&ts, window).unwrap();
        let products: Vec<f64> = a.eigenvalues.iter().map(|(g, _)| g * (g + 1.0)).collect();
        for p in 0..=ts.n as i64 + 1 {
            for ch in enumerate_channels(&ts, p, 30.0).unwrap() {
                for g in ch.gamma_list().into_iter().filter(|g| g.abs() <= window - 1.0) {
                    let x = g * (g + 1.0);
                    assert!(
                        products.iter().any(|y| (x - y).abs() < 1e-9 * (1.0 + x.abs())),
                        "{sides:?} {}: gamma {g}",
                        ch.label()
                    );
                }
            }
        }
        assert_eq!(a.essentially_selfadjoint(), a.regimes.iter().all(|r| r.gamma_in_gap.is_empty()));
    }
}
