use std::collections::HashMap;
use std::f64::consts::PI;

use hodge_bands::bands::{
    compute_bands, compute_bands_with, detect_gaps, small_eigenvalue_census, write_bands_csv, BandOptions, ZERO_MODE_TOL,
};
use hodge_bands::modes::enumerate_channels;
use hodge_bands::radial::{FloquetSolver, MatchingOptions, Profile};
use hodge_bands::transversal::{flat_torus, TransversalSpectrum};

fn circle() -> TransversalSpectrum {
    flat_torus(&[2.0 * PI], 40.0).unwrap()
}

#[test]
fn degree_zero_has_the_constant_band() {
    let profile = Profile::new(0.1, PI, 1.0).unwrap();
    let bands = compute_bands(&circle(), 0, &profile, 65, 5.0).unwrap();
    assert!(!bands.is_empty());
    let zero: Vec<_> = bands.iter().filter(|b| b.lambda_min.abs() < ZERO_MODE_TOL).collect();
    assert_eq!(zero.len(), 1);
    assert_eq!(zero[0].mult, 1);
    assert_eq!(zero[0].k, 0);
    for (i, b) in bands.iter().enumerate() {
        assert!(b.lambda_min <= b.lambda_max);
        assert_eq!(b.k, i);
        assert!(!b.provenance.is_empty());
    }
    assert!(bands.windows(2).all(|w| w[0].lambda_min <= w[1].lambda_min));
}

#[test]
fn zero_eigenvalues_only_at_periodic_quasimomentum() {
    let ts = circle();
    let profile = Profile::new(0.1, PI, 1.0).unwrap();
    for p in 0..=2 {
        for ch in enumerate_channels(&ts, p, 3.0).unwrap() {
            let mut solver = FloquetSolver::new(&ch, &profile, 3.0, MatchingOptions::default()).unwrap();
            let anti = solver.eigenvalues(PI, 3.0, 1e-10).unwrap();
            assert!(anti.first().is_none_or(|x| *x > 1e-8), "p={p} {}", ch.label());
        }
        let census = small_eigenvalue_census(&ts, p, &profile, 0.3).unwrap();
        assert_eq!(census.zero_modes, ts.betti(p) + ts.betti(p - 1), "p={p}");
    }
}

#[test]
fn census_is_consistent_and_degree_zero_has_no_small_eigenvalues() {
    let ts = circle();
    for eps in [0.2, 0.05] {
        let profile = Profile::new(eps, PI, 1.0).unwrap();
        let c0 = small_eigenvalue_census(&ts, 0, &profile, 0.3).unwrap();
        assert_eq!(c0.small, 0);
        let c1 = small_eigenvalue_census(&ts, 1, &profile, 0.3).unwrap();
        assert!(c1.predicted_small >= 0);
        assert!(c1.consistent(), "{c1:?}");
    }
    let profile = Profile::new(0.1, PI, 1.0).unwrap();
    assert!(small_eigenvalue_census(&ts, 0, &profile, 2.0).is_err());
}

#[test]
fn gaps_and_bands_cover_the_window() {
    let profile = Profile::new(0.1, PI, 1.0).unwrap();
    let lambda_max = 10.0;
    let bands = compute_bands(&circle(), 1, &profile, 33, lambda_max).unwrap();
    let report = detect_gaps(&bands, lambda_max).unwrap();
    let mut probes = (0..=2000).map(|i| lambda_max * i as f64 / 2000.0);
    assert!(probes.all(|x| {
        bands.iter().any(|b| b.lambda_min <= x && x <= b.lambda_max) || report.gaps.iter().any(|g| g.0 <= x && x <= g.1)
    }));
    assert!(report.count() >= 1);
}

#[test]
fn smoothing_keeps_bands_within_the_metric_bound() {
    let ts = circle();
    let (eps, eta, lambda_max) = (0.2, 0.01, 4.0);
    let opts = BandOptions { theta_points: 9, oracle_n: 800, ..BandOptions::default() };
    for p in 0..=1 {
        let plain = compute_bands(&ts, p, &Profile::new(eps, PI, 1.0).unwrap(), 65, lambda_max).unwrap();
        let smooth = compute_bands_with(&ts, p, &Profile::smoothed(eps, PI, 1.0, eta).unwrap(), lambda_max, &opts).unwrap();
        let factor = ((ts.n as f64 + 2.0 * p as f64) * eta).exp();
        let by_key: HashMap<_, _> = smooth.iter().map(|b| (b.key(), b)).collect();
        for b in plain.iter().filter(|b| b.lambda_max < 0.9 * lambda_max) {
            let s = by_key.get(&b.key()).unwrap_or_else(|| panic!("p={p} no smoothed band for {:?}", b.key()));
            let (lo, hi) = (b.lambda_min / factor - 1e-6, b.lambda_max * factor + 1e-6);
            assert!(s.lambda_max >= lo && s.lambda_min <= hi, "p={p} {:?}: [{lo}, {hi}] vs {s:?}", b.key());
        }
    }
}

#[test]
fn bands_csv_has_the_documented_header() {
    let profile = Profile::new(0.2, PI, 1.0).unwrap();
    let bands = compute_bands(&circle(), 0, &profile, 17, 3.0).unwrap();
    let mut out = Vec::new();
    write_bands_csv(&bands, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,eps,k,lambda_min,lambda_max,mult,provenance"));
    assert_eq!(lines.count(), bands.len());
}
