//! Spectral data of the closed transversal manifold Σⁿ.
//!
//! The data attached to Σ is a [`TransversalSpectrum`]: the Betti numbers and,
//! per degree q, the eigenvalues μ² of the Hodge Laplacian on coexact q-forms
//! together with their multiplicities. Eigenvalues on exact q-forms are those
//! of coexact (q−1)-forms, because d is an isomorphism between the two spaces.
//!
//! Eigenvalues are stored as exact rationals whenever that is possible, so
//! that boundary tests such as μ² < 1 are decided symbolically.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Relative tolerance used to identify two floating-point eigenvalues.
pub const LEVEL_REL_TOL: f64 = 1e-12;

/// An eigenvalue μ² of the transversal Laplacian.
#[derive(Clone, Copy, Debug)]
pub enum Mu2 {
    Exact(Rational64),
    Real(f64),
}

impl Mu2 {
    pub fn zero() -> Self {
        Mu2::Exact(Rational64::zero())
    }

    pub fn value(&self) -> f64 {
        match self {
            Mu2::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Mu2::Real(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Mu2::Exact(_))
    }

    /// Equality of levels: exact comparison for two rationals, a relative
    /// tolerance of [`LEVEL_REL_TOL`] otherwise.
    pub fn same_level(&self, other: &Mu2) -> bool {
        match (self, other) {
            (Mu2::Exact(a), Mu2::Exact(b)) => a == b,
            _ => {
                let (a, b) = (self.value(), other.value());
                (a - b).abs() <= LEVEL_REL_TOL * a.abs().max(b.abs()).max(1e-300)
            }
        }
    }

    /// Strict comparison `self < bound`, decided exactly when both sides are rational.
    pub fn lt_exact(&self, bound: Rational64) -> bool {
        match self {
            Mu2::Exact(r) => *r < bound,
            Mu2::Real(x) => *x < bound.to_f64().unwrap_or(f64::NAN),
        }
    }
}

impl fmt::Display for Mu2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mu2::Exact(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Mu2::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Mu2::Real(x) => write!(f, "{x}"),
        }
    }
}

/// One eigenvalue of the transversal Laplacian with its multiplicity.
#[derive(Clone, Copy, Debug)]
pub struct Level {
    pub mu2: Mu2,
    pub mult: u64,
}

#[derive(Clone, Debug)]
pub struct TransversalSpectrum {
    pub n: usize,
    pub label: String,
    /// All coexact eigenvalues with μ² ≤ cutoff are listed.
    pub cutoff: f64,
    /// Betti numbers b_0, ..., b_n.
    pub betti: Vec<u64>,
    /// `coexact[q]` lists the coexact q-form eigenvalues in ascending order.
    pub coexact: Vec<Vec<Level>>,
}

impl TransversalSpectrum {
    /// Betti number b_q, zero outside 0..=n.
    pub fn betti(&self, q: i64) -> u64 {
        if q < 0 {
            return 0;
        }
        self.betti.get(q as usize).copied().unwrap_or(0)
    }

    /// Coexact q-form eigenvalues, empty outside 0..=n.
    pub fn coexact(&self, q: i64) -> &[Level] {
        if q < 0 {
            return &[];
        }
        self.coexact.get(q as usize).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Exact q-form eigenvalues, identical to the coexact (q−1)-form ones.
    pub fn exact(&self, q: i64) -> &[Level] {
        self.coexact(q - 1)
    }
}

/// Flat torus ℝⁿ / (ℓ₁ℤ × ... × ℓₙℤ) with all coexact eigenvalues up to `cutoff`.
///
/// The scalar eigenvalues are Σ (2π kᵢ/ℓᵢ)² for k ∈ ℤⁿ. A nonzero lattice
/// vector contributes C(n−1, q) coexact q-forms. When every (2π/ℓᵢ)² is a
/// rational with denominator at most 10⁴ the eigenvalues are stored exactly.
pub fn flat_torus(sides: &[f64], cutoff: f64) -> Result<TransversalSpectrum> {
    let n = sides.len();
    if n == 0 {
        return Err(Error::invalid("a torus needs at least one side length"));
    }
    if let Some(bad) = sides.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!("side length {bad} is not positive")));
    }
    if !(cutoff.is_finite() && cutoff >= 0.0) {
        return Err(Error::invalid(format!("cutoff {cutoff} must be a finite non-negative number")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let unit: Vec<f64> = sides.iter().map(|l| (two_pi / l).powi(2)).collect();
    let exact_unit: Option<Vec<Rational64>> = unit.iter().map(|&q| rational_approx(q)).collect();
    let bounds: Vec<i64> = unit.iter().map(|q| (cutoff / q).sqrt().floor() as i64).collect();

    let mut exact_levels: BTreeMap<Rational64, u64> = BTreeMap::new();
    let mut real_levels: Vec<f64> = Vec::new();
    let mut k = vec![0i64; n];
    lattice_walk(&bounds, 0, &mut k, &mut |k| {
        if k.iter().all(|&x| x == 0) {
            return;
        }
        let value: f64 = k.iter().zip(&unit).map(|(&ki, q)| (ki * ki) as f64 * q).sum();
        if value > cutoff * (1.0 + LEVEL_REL_TOL) {
            return;
        }
        match &exact_unit {
            Some(units) => {
                let r = k
                    .iter()
                    .zip(units)
                    .fold(Rational64::zero(), |acc, (&ki, q)| acc + *q * Rational64::from_integer(ki * ki));
                *exact_levels.entry(r).or_insert(0) += 1;
            }
            None => real_levels.push(value),
        }
    });

    let lattice: Vec<(Mu2, u64)> = match exact_unit {
        Some(_) => exact_levels.into_iter().map(|(r, m)| (Mu2::Exact(r), m)).collect(),
        None => merge_reals(real_levels),
    };

    let mut coexact = vec![Vec::new(); n + 1];
    for (q, slot) in coexact.iter_mut().enumerate().take(n) {
        let c = binomial(n as u64 - 1, q as u64);
        *slot = lattice.iter().map(|&(mu2, m)| Level { mu2, mult: m * c }).collect();
    }
    let betti = (0..=n as u64).map(|q| binomial(n as u64, q)).collect();
    let label = format!(
        "T^{n}({})",
        sides.iter().map(|s| format!("{s}")).collect::<Vec<_>>().join(",")
    );
    Ok(TransversalSpectrum { n, label, cutoff, betti, coexact })
}

fn lattice_walk(bounds: &[i64], i: usize, k: &mut Vec<i64>, visit: &mut dyn FnMut(&[i64])) {
    if i == bounds.len() {
        visit(k);
        return;
    }
    for x in -bounds[i]..=bounds[i] {
        k[i] = x;
        lattice_walk(bounds, i + 1, k, visit);
    }
}

fn merge_reals(mut values: Vec<f64>) -> Vec<(Mu2, u64)> {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, u64)> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some((w, m)) if (v - *w).abs() <= LEVEL_REL_TOL * v.abs() => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out.into_iter().map(|(v, m)| (Mu2::Real(v), m)).collect()
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Continued-fraction search for a rational with denominator ≤ 10⁴ that
/// reproduces `x` to within a few ulps.
fn rational_approx(x: f64) -> Option<Rational64> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut y = x;
    for _ in 0..40 {
        let a = y.floor();
        if a > 1e12 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > 10_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= 4.0 * f64::EPSILON * x {
            return Some(Rational64::new(h1, k1));
        }
        let frac = y - a as f64;
        if frac < 1e-15 {
            break;
        }
        y = 1.0 / frac;
    }
    None
}

/// A broken structural invariant of a transversal spectrum.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Dimension { field: &'static str, expected: usize, found: usize },
    PoincareDuality { q: usize, b_q: u64, b_dual: u64 },
    /// Coexact q-forms and coexact (n−q−1)-forms must carry the same spectrum.
    CoexactPairing { q: usize, detail: String },
    TopDegreeCoexact { count: usize },
    NonPositive { q: usize, mu2: String },
    ZeroMultiplicity { q: usize, mu2: String },
    AboveCutoff { q: usize, mu2: String },
    NotIncreasing { q: usize, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { field, expected, found } => {
                write!(f, "`{field}` has length {found}, expected {expected}")
            }
            Violation::PoincareDuality { q, b_q, b_dual } => {
                write!(f, "b_{q} = {b_q} differs from its dual {b_dual}")
            }
            Violation::CoexactPairing { q, detail } => {
                write!(f, "coexact degree {q} does not match its dual degree: {detail}")
            }
            Violation::TopDegreeCoexact { count } => {
                write!(f, "top degree lists {count} coexact eigenvalues, expected none")
            }
            Violation::NonPositive { q, mu2 } => write!(f, "coexact[{q}] has non-positive eigenvalue {mu2}"),
            Violation::ZeroMultiplicity { q, mu2 } => write!(f, "coexact[{q}] level {mu2} has multiplicity 0"),
            Violation::AboveCutoff { q, mu2 } => write!(f, "coexact[{q}] level {mu2} exceeds the cutoff"),
            Violation::NotIncreasing { q, index } => {
                write!(f, "coexact[{q}] is not strictly increasing at index {index}")
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks duality of Betti numbers, the pairing of coexact spectra in degrees
/// q and n−q−1, positivity, ordering and the cutoff.
pub fn validate(ts: &TransversalSpectrum) -> ValidationReport {
    let n = ts.n;
    let mut violations = Vec::new();
    if ts.betti.len() != n + 1 {
        violations.push(Violation::Dimension { field: "betti", expected: n + 1, found: ts.betti.len() });
    }
    if ts.coexact.len() != n + 1 {
        violations.push(Violation::Dimension { field: "coexact", expected: n + 1, found: ts.coexact.len() });
    }
    for q in 0..=n {
        let (a, b) = (ts.betti(q as i64), ts.betti((n - q) as i64));
        if q <= n - q && a != b {
            violations.push(Violation::PoincareDuality { q, b_q: a, b_dual: b });
        }
    }
    let top = ts.coexact(n as i64).len();
    if top > 0 {
        violations.push(Violation::TopDegreeCoexact { count: top });
    }
    let cutoff_bound = ts.cutoff * (1.0 + LEVEL_REL_TOL);
    for (q, levels) in ts.coexact.iter().enumerate() {
        for (i, level) in levels.iter().enumerate() {
            let v = level.mu2.value();
            if !(v > 0.0) {
                violations.push(Violation::NonPositive { q, mu2: level.mu2.to_string() });
            }
            if level.mult == 0 {
                violations.push(Violation::ZeroMultiplicity { q, mu2: level.mu2.to_string() });
            }
            if v > cutoff_bound {
                violations.push(Violation::AboveCutoff { q, mu2: level.mu2.to_string() });
            }
            if i > 0 {
                let prev = &levels[i - 1].mu2;
                if prev.same_level(&level.mu2) || prev.value() > v {
                    violations.push(Violation::NotIncreasing { q, index: i });
                }
            }
        }
    }
    for q in 0..n {
        let dual = n - 1 - q;
        if q > dual {
            continue;
        }
        let (a, b) = (ts.coexact(q as i64), ts.coexact(dual as i64));
        let detail = if a.len() != b.len() {
            Some(format!("{} levels against {}", a.len(), b.len()))
        } else {
            a.iter().zip(b).find_map(|(x, y)| {
                (!x.mu2.same_level(&y.mu2) || x.mult != y.mult)
                    .then(|| format!("level {} (mult {}) against {} (mult {})", x.mu2, x.mult, y.mu2, y.mult))
            })
        };
        if let Some(detail) = detail {
            violations.push(Violation::CoexactPairing { q, detail });
        }
    }
    ValidationReport { violations }
}

#[derive(Deserialize)]
struct RawSpectrum {
    n: i64,
    #[serde(default)]
    label: String,
    cutoff: f64,
    betti: Vec<i64>,
    coexact: Vec<Vec<RawLevel>>,
}

#[derive(Deserialize)]
struct RawLevel {
    mu2: Value,
    mult: i64,
}

/// Parses a spectrum file (JSON with fields n, label, cutoff, betti, coexact).
///
/// Eigenvalues may be JSON integers or `"p/q"` strings (stored exactly) or
/// JSON floats (stored as reals).
pub fn parse_spectrum(text: &str) -> Result<TransversalSpectrum> {
    let raw: RawSpectrum = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if raw.n < 1 {
        return Err(Error::field("n", format!("must be a positive integer, got {}", raw.n)));
    }
    if !(raw.cutoff.is_finite() && raw.cutoff >= 0.0) {
        return Err(Error::field("cutoff", "must be finite and non-negative"));
    }
    let betti = raw
        .betti
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            u64::try_from(b).map_err(|_| Error::field(format!("betti[{i}]"), format!("must be non-negative, got {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut coexact = Vec::with_capacity(raw.coexact.len());
    for (q, levels) in raw.coexact.iter().enumerate() {
        let mut out = Vec::with_capacity(levels.len());
        for (i, level) in levels.iter().enumerate() {
            let path = format!("coexact[{q}][{i}]");
            let mult = u64::try_from(level.mult).map_err(|_| {
                Error::field(format!("{path}.mult"), format!("must be a non-negative integer, got {}", level.mult))
            })?;
            let mu2 = parse_mu2(&level.mu2).map_err(|m| Error::field(format!("{path}.mu2"), m))?;
            out.push(Level { mu2, mult });
        }
        coexact.push(out);
    }
    Ok(TransversalSpectrum { n: raw.n as usize, label: raw.label, cutoff: raw.cutoff, betti, coexact })
}

fn parse_mu2(v: &Value) -> std::result::Result<Mu2, String> {
    match v {
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                Ok(Mu2::Exact(Rational64::from_integer(i)))
            } else {
                num.as_f64().map(Mu2::Real).ok_or_else(|| format!("unrepresentable number {num}"))
            }
        }
        Value::String(s) => parse_rational(s).map(Mu2::Exact),
        other => Err(format!("expected a number or a \"p/q\" string, got {other}")),
    }
}

fn parse_rational(s: &str) -> std::result::Result<Rational64, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let num: i64 = num.parse().map_err(|_| format!("bad rational numerator in {s:?}"))?;
    let den: i64 = den.parse().map_err(|_| format!("bad rational denominator in {s:?}"))?;
    if den == 0 {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Rational64::new(num, den))
}

fn mu2_to_json(mu2: &Mu2) -> Value {
    match mu2 {
        Mu2::Exact(r) if r.is_integer() => Value::from(*r.numer()),
        Mu2::Exact(r) => {
            let sign = if r.is_negative() { "-" } else { "" };
            Value::String(format!("{sign}{}/{}", r.numer().abs(), r.denom()))
        }
        Mu2::Real(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
    }
}

/// Serializes a spectrum in the format read by [`parse_spectrum`].
pub fn spectrum_to_json(ts: &TransversalSpectrum) -> String {
    let coexact: Vec<Value> = ts
        .coexact
        .iter()
        .map(|levels| {
            Value::Array(
                levels
                    .iter()
                    .map(|l| serde_json::json!({ "mu2": mu2_to_json(&l.mu2), "mult": l.mult }))
                    .collect(),
            )
        })
        .collect();
    let doc = serde_json::json!({
        "n": ts.n,
        "label": ts.label,
        "cutoff": ts.cutoff,
        "betti": ts.betti,
        "coexact": coexact,
    });
    serde_json::to_string_pretty(&doc).expect("spectrum serializes")
}

pub fn load_spectrum(path: &std::path::Path) -> Result<TransversalSpectrum> {
    let text = std::fs::read_to_string(path)?;
    parse_spectrum(&text)
}

pub fn save_spectrum(ts: &TransversalSpectrum, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, spectrum_to_json(ts))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn circle_of_length_two_pi() {
        let ts = flat_torus(&[TWO_PI], 5.0).unwrap();
        assert_eq!(ts.betti, vec![1, 1]);
        let levels: Vec<(String, u64)> = ts.coexact[0].iter().map(|l| (l.mu2.to_string(), l.mult)).collect();
        assert_eq!(levels, vec![("1".into(), 2), ("4".into(), 2)]);
        assert!(ts.coexact[1].is_empty());
        assert!(validate(&ts).is_valid());
    }

    #[test]
    fn circle_of_length_four_pi_is_exact() {
        let ts = flat_torus(&[2.0 * TWO_PI], 1.0).unwrap();
        let first = ts.coexact[0][0];
        assert!(matches!(first.mu2, Mu2::Exact(r) if r == Rational64::new(1, 4)));
        assert_eq!(first.mult, 2);
    }

    #[test]
    fn square_torus_low_levels() {
        let ts = flat_torus(&[TWO_PI, TWO_PI], 2.0).unwrap();
        assert_eq!(ts.betti, vec![1, 2, 1]);
        for q in 0..2 {
            let got: Vec<(f64, u64)> = ts.coexact[q].iter().map(|l| (l.mu2.value(), l.mult)).collect();
            assert_eq!(got, vec![(1.0, 4), (2.0, 4)]);
        }
        assert!(validate(&ts).is_valid());
    }

    #[test]
    fn irrational_sides_fall_back_to_reals() {
        let ts = flat_torus(&[1.0, 2.0_f64.sqrt()], 200.0).unwrap();
        assert!(ts.coexact[0].iter().all(|l| !l.mu2.is_exact()));
        assert!(validate(&ts).is_valid());
    }

    #[test]
    fn duality_violation_is_reported() {
        let mut ts = flat_torus(&[TWO_PI, TWO_PI], 2.0).unwrap();
        ts.betti[2] = 3;
        let report = validate(&ts);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PoincareDuality { q: 0, b_q: 1, b_dual: 3 })));
    }

    #[test]
    fn pairing_violation_is_reported() {
        let mut ts = flat_torus(&[TWO_PI, TWO_PI], 2.0).unwrap();
        ts.coexact[1][0].mult = 3;
        assert!(validate(&ts).violations.iter().any(|v| matches!(v, Violation::CoexactPairing { q: 0, .. })));
    }

    #[test]
    fn json_round_trip_keeps_rationals_and_reals() {
        let mut ts = flat_torus(&[2.0 * TWO_PI], 3.0).unwrap();
        ts.coexact[0].push(Level { mu2: Mu2::Real(3.0000000000000004), mult: 1 });
        let back = parse_spectrum(&spectrum_to_json(&ts)).unwrap();
        for (a, b) in ts.coexact[0].iter().zip(&back.coexact[0]) {
            match (a.mu2, b.mu2) {
                (Mu2::Exact(x), Mu2::Exact(y)) => assert_eq!(x, y),
                (Mu2::Real(x), Mu2::Real(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                _ => panic!("representation changed"),
            }
            assert_eq!(a.mult, b.mult);
        }
    }

    #[test]
    fn negative_multiplicity_names_the_field() {
        let text = r#"{"n": 1, "label": "x", "cutoff": 5, "betti": [1, 1],
                       "coexact": [[{"mu2": 1, "mult": -2}], []]}"#;
        match parse_spectrum(text) {
            Err(Error::Field { field, .. }) => assert_eq!(field, "coexact[0][0].mult"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_betti_reports_position() {
        let text = "{\n  \"n\": 1,\n  \"cutoff\": 5,\n  \"coexact\": [[], []]\n}";
        match parse_spectrum(text) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(line >= 1);
                assert!(message.contains("betti"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(3, 4), 0);
    }
}
