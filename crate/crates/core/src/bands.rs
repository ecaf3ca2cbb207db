//! Degree-p band structures, gaps, and ε-convergence against the limit spectrum.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::{assemble_limit_spectrum, LimitSpectrum};
use crate::modes::{enumerate_channels, Channel};
use crate::oracle::{oracle_eigenvalues, DEFAULT_N};
use crate::radial::{FloquetSolver, MatchingOptions, Profile};
use crate::transversal::TransversalSpectrum;

/// Gaps shorter than this are treated as numerical noise.
pub const GAP_FLOOR: f64 = 1e-8;

/// Bands and limit points farther apart than this are never paired.
pub const MATCH_RADIUS: f64 = 0.5;

/// θ = 0 eigenvalues below this count as zero modes.
pub const ZERO_MODE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub p: i64,
    /// Position in the list sorted by lower edge.
    pub k: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mult: u64,
    pub provenance: Vec<String>,
    /// Index of the band among the bands of its channel.
    pub channel_band: usize,
    pub eps: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }

    /// Hausdorff distance between the band and the point x.
    pub fn distance_to(&self, x: f64) -> f64 {
        (x - self.lambda_min).abs().max((x - self.lambda_max).abs())
    }

    /// Channel label and channel band index, stable across ε.
    pub fn key(&self) -> (String, usize) {
        (self.provenance.join("+"), self.channel_band)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BandOptions {
    pub theta_points: usize,
    pub root_tol: f64,
    pub oracle_n: usize,
    pub richardson: bool,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions { theta_points: 65, root_tol: 1e-10, oracle_n: DEFAULT_N, richardson: true }
    }
}

/// Bands of degree p whose lower edge lies below `lambda_max`.
pub fn compute_bands(
    ts: &TransversalSpectrum,
    p: i64,
    profile: &Profile,
    theta_grid_size: usize,
    lambda_max: f64,
) -> Result<Vec<Band>> {
    let opts = BandOptions { theta_points: theta_grid_size, ..BandOptions::default() };
    compute_bands_with(ts, p, profile, lambda_max, &opts)
}

pub fn compute_bands_with(
    ts: &TransversalSpectrum,
    p: i64,
    profile: &Profile,
    lambda_max: f64,
    opts: &BandOptions,
) -> Result<Vec<Band>> {
    if opts.theta_points < 2 {
        return Err(Error::invalid(format!("theta grid needs at least 2 points, got {}", opts.theta_points)));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::invalid("band window must be positive"));
    }
    let channels = enumerate_channels(ts, p, lambda_max)?;
    let per_channel: Vec<Result<Vec<(f64, f64, usize)>>> = {
        use rayon::prelude::*;
        channels.par_iter().map(|ch| channel_bands(ch, profile, lambda_max, opts)).collect()
    };
    let mut bands = Vec::new();
    for (ch, res) in channels.iter().zip(per_channel) {
        for (lo, hi, idx) in res? {
            bands.push(Band {
                p,
                k: 0,
                lambda_min: lo,
                lambda_max: hi,
                mult: ch.mult,
                provenance: vec![ch.label()],
                channel_band: idx,
                eps: profile.eps,
            });
        }
    }
    bands.sort_by(|a, b| {
        a.lambda_min
            .total_cmp(&b.lambda_min)
            .then(a.lambda_max.total_cmp(&b.lambda_max))
            .then(a.provenance.cmp(&b.provenance))
    });
    for (k, b) in bands.iter_mut().enumerate() {
        b.k = k;
    }
    Ok(bands)
}

fn channel_bands(ch: &Channel, profile: &Profile, lambda_max: f64, opts: &BandOptions) -> Result<Vec<(f64, f64, usize)>> {
    if profile.eta == 0.0 {
        let mut solver = FloquetSolver::new(ch, profile, lambda_max, MatchingOptions::default())?;
        solver.set_theta_points(opts.theta_points);
        return Ok(solver.bands(lambda_max, opts.root_tol)?.into_iter().map(|b| (b.lambda_min, b.lambda_max, b.index)).collect());
    }
    oracle_bands(ch, profile, lambda_max, opts)
}

/// Bands from the finite-difference oracle on the θ grid; used for smoothed
/// profiles, where the transfer-matrix solver does not apply.
fn oracle_bands(ch: &Channel, profile: &Profile, lambda_max: f64, opts: &BandOptions) -> Result<Vec<(f64, f64, usize)>> {
    let pi = std::f64::consts::PI;
    let grid: Vec<f64> = if ch.is_pair() {
        (0..opts.theta_points).map(|j| pi * j as f64 / (opts.theta_points - 1) as f64).collect()
    } else {
        vec![0.0, pi]
    };
    let reach = 1.25 * lambda_max + 1.0;
    let lists = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|&th| oracle_eigenvalues(ch, th, profile, reach, opts.oracle_n, opts.richardson))
            .collect::<Result<Vec<_>>>()?
    };
    let count = lists.iter().map(|l| l.len()).min().unwrap_or(0);
    let mut out = Vec::new();
    for idx in 0..count {
        let lo = lists.iter().map(|l| l[idx]).fold(f64::INFINITY, f64::min);
        let hi = lists.iter().map(|l| l[idx]).fold(f64::NEG_INFINITY, f64::max);
        if lo > lambda_max {
            break;
        }
        out.push((lo, hi, idx));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub p: i64,
    pub eps: f64,
    pub lambda_max: f64,
    /// Open intervals (lower, upper).
    pub gaps: Vec<(f64, f64)>,
}

impl GapReport {
    pub fn count(&self) -> usize {
        self.gaps.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.gaps.iter().map(|(a, b)| b - a).collect()
    }

    /// True if some gap meets the open interval between a and b.
    pub fn separates(&self, a: f64, b: f64) -> bool {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.gaps.iter().any(|&(lo, hi)| hi > a && lo < b)
    }
}

pub fn detect_gaps(bands: &[Band], lambda_max: f64) -> Result<GapReport> {
    detect_gaps_with_floor(bands, lambda_max, GAP_FLOOR)
}

/// Complement of the union of the bands in [0, Λ], dropping gaps shorter than `floor`.
pub fn detect_gaps_with_floor(bands: &[Band], lambda_max: f64, floor: f64) -> Result<GapReport> {
    if !(lambda_max > 0.0) {
        return Err(Error::invalid("gap window must be positive"));
    }
    let (p, eps) = match bands.first() {
        Some(b) => (b.p, b.eps),
        None => return Err(Error::invalid("gap detection needs at least one band")),
    };
    if bands.iter().any(|b| b.eps != eps) {
        return Err(Error::invalid("bands from different eps values cannot be combined"));
    }
    if bands.iter().any(|b| b.p != p) {
        return Err(Error::invalid("bands from different degrees cannot be combined"));
    }
    let mut iv: Vec<(f64, f64)> = bands.iter().map(|b| (b.lambda_min, b.lambda_max)).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut reach = 0.0f64;
    for (lo, hi) in iv {
        if lo >= lambda_max {
            break;
        }
        if lo > reach && lo - reach >= floor {
            gaps.push((reach, lo));
        }
        reach = reach.max(hi);
    }
    if reach < lambda_max && lambda_max - reach >= floor {
        gaps.push((reach, lambda_max));
    }
    Ok(GapReport { p, eps, lambda_max, gaps })
}

/// Part of a band's multiplicity paired with a limit point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assignment {
    pub k: usize,
    pub point: usize,
    pub mult: u64,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Matching {
    pub assignments: Vec<Assignment>,
    /// (band k, leftover multiplicity) below the window.
    pub unmatched_bands: Vec<(usize, u64)>,
    /// (point id, leftover multiplicity) below the window.
    pub unmatched_points: Vec<(usize, u64)>,
}

impl Matching {
    pub fn is_bidirectional(&self) -> bool {
        self.unmatched_bands.is_empty() && self.unmatched_points.is_empty()
    }

    pub fn max_distance(&self) -> f64 {
        self.assignments.iter().map(|a| a.distance).fold(0.0, f64::max)
    }

    /// Total band multiplicity assigned to a point.
    pub fn claimed(&self, point: usize) -> u64 {
        self.assignments.iter().filter(|a| a.point == point).map(|a| a.mult).sum()
    }
}

/// Greedy nearest-neighbour matching of bands to limit points.
///
/// Pairs within `radius` are taken in order of increasing Hausdorff distance,
/// ties going to the smaller limit point, each pairing consuming the smaller
/// of the two remaining multiplicities. Leftovers are reported only when they
/// lie below `lambda_max`; bands and points above it serve as a margin.
pub fn match_bands(bands: &[Band], points: &[(f64, u64)], lambda_max: f64, radius: f64) -> Matching {
    let mut pairs: Vec<(f64, f64, usize, usize)> = Vec::new();
    for (bi, b) in bands.iter().enumerate() {
        for (pi, &(x, _)) in points.iter().enumerate() {
            let d = b.distance_to(x);
            if d <= radius {
                pairs.push((d, x, bi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut band_left: Vec<u64> = bands.iter().map(|b| b.mult).collect();
    let mut point_left: Vec<u64> = points.iter().map(|p| p.1).collect();
    let mut out = Matching::default();
    for (d, _, bi, pi) in pairs {
        let m = band_left[bi].min(point_left[pi]);
        if m == 0 {
            continue;
        }
        band_left[bi] -= m;
        point_left[pi] -= m;
        out.assignments.push(Assignment { k: bands[bi].k, point: pi, mult: m, distance: d });
    }
    out.assignments.sort_by(|a, b| a.k.cmp(&b.k).then(a.point.cmp(&b.point)));
    for (bi, b) in bands.iter().enumerate() {
        if band_left[bi] > 0 && b.lambda_min < lambda_max {
            out.unmatched_bands.push((b.k, band_left[bi]));
        }
    }
    for (pi, &(x, _)) in points.iter().enumerate() {
        if point_left[pi] > 0 && x < lambda_max {
            out.unmatched_points.push((pi, point_left[pi]));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub k: usize,
    pub width: f64,
    pub distance: f64,
    pub limit_id: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStep {
    pub eps: f64,
    pub bands: Vec<Band>,
    pub matching: Matching,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub p: i64,
    pub lambda_max: f64,
    pub limit: LimitSpectrum,
    /// Distinct limit points; `ConvergenceRow::limit_id` indexes this list.
    pub points: Vec<(f64, u64)>,
    pub steps: Vec<ConvergenceStep>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn step(&self, eps: f64) -> Option<&ConvergenceStep> {
        self.steps.iter().find(|s| s.eps == eps)
    }

    pub fn last(&self) -> Option<&ConvergenceStep> {
        self.steps.last()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StudyOptions {
    pub bands: BandOptions,
    pub radius: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { bands: BandOptions::default(), radius: MATCH_RADIUS }
    }
}

/// Bands over a decreasing ε ladder matched against the assembled limit spectrum.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    ts: &TransversalSpectrum,
    p: i64,
    eps_list: &[f64],
    handle_len: f64,
    l_out: f64,
    theta_grid: usize,
    lambda_max: f64,
) -> Result<ConvergenceTable> {
    let opts = StudyOptions { bands: BandOptions { theta_points: theta_grid, ..BandOptions::default() }, ..StudyOptions::default() };
    let limit = assemble_limit_spectrum(ts, p, handle_len, l_out, extended_window(lambda_max, opts.radius))?;
    convergence_study_against(ts, p, eps_list, handle_len, l_out, lambda_max, &limit, &opts)
}

/// Window used for the margin bands and points above Λ.
pub fn extended_window(lambda_max: f64, radius: f64) -> f64 {
    lambda_max + radius + 0.05 * lambda_max
}

/// Same as [`convergence_study`] against a given limit spectrum, which
/// should cover [`extended_window`].
#[allow(clippy::too_many_arguments)]
pub fn convergence_study_against(
    ts: &TransversalSpectrum,
    p: i64,
    eps_list: &[f64],
    handle_len: f64,
    l_out: f64,
    lambda_max: f64,
    limit: &LimitSpectrum,
    opts: &StudyOptions,
) -> Result<ConvergenceTable> {
    if eps_list.is_empty() {
        return Err(Error::invalid("eps list is empty"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("eps list must be strictly decreasing"));
    }
    if limit.p != p {
        return Err(Error::invalid(format!("limit spectrum has degree {}, expected {p}", limit.p)));
    }
    let window = extended_window(lambda_max, opts.radius);
    let points = limit.points();
    let mut steps = Vec::new();
    let mut rows = Vec::new();
    for &eps in eps_list {
        let profile = Profile::new(eps, handle_len, l_out)?;
        let bands = compute_bands_with(ts, p, &profile, window, &opts.bands)?;
        let matching = match_bands(&bands, &points, lambda_max, opts.radius);
        for b in bands.iter().filter(|b| b.lambda_min < lambda_max) {
            let mine: Vec<&Assignment> = matching.assignments.iter().filter(|a| a.k == b.k).collect();
            if mine.is_empty() {
                let d = points.iter().map(|&(x, _)| b.distance_to(x)).fold(f64::INFINITY, f64::min);
                rows.push(ConvergenceRow { eps, k: b.k, width: b.width(), distance: d, limit_id: None });
            }
            for a in mine {
                rows.push(ConvergenceRow { eps, k: b.k, width: b.width(), distance: a.distance, limit_id: Some(a.point) });
            }
        }
        steps.push(ConvergenceStep { eps, bands, matching });
    }
    Ok(ConvergenceTable { p, lambda_max, limit: limit.clone(), points, steps, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Census {
    pub p: i64,
    pub eps: f64,
    pub lambda_small: f64,
    /// θ = 0 eigenvalues below [`ZERO_MODE_TOL`], with multiplicity.
    pub zero_modes: u64,
    /// θ = 0 eigenvalues in ]0, Λ_small], with multiplicity.
    pub small: u64,
    /// b_p(Σ) + b_{p−1}(Σ).
    pub kunneth: u64,
    pub limit_kernel: u64,
    /// Limit kernel multiplicity minus the Künneth count.
    pub predicted_small: i64,
}

impl Census {
    pub fn consistent(&self) -> bool {
        self.zero_modes == self.kunneth && self.predicted_small >= 0 && self.small as i64 == self.predicted_small
    }
}

pub fn small_eigenvalue_census(ts: &TransversalSpectrum, p: i64, profile: &Profile, lambda_small: f64) -> Result<Census> {
    if !(lambda_small > 0.0) {
        return Err(Error::invalid("census window must be positive"));
    }
    let window = 2.0 * lambda_small + 1.0;
    let limit = assemble_limit_spectrum(ts, p, profile.handle_len, profile.outer_len, window)?;
    let first = limit.points().into_iter().map(|(x, _)| x).find(|x| x.abs() >= 1e-8);
    if let Some(x) = first {
        if lambda_small >= x {
            return Err(Error::invalid(format!(
                "census window {lambda_small} reaches the first nonzero limit point {x}"
            )));
        }
    }
    let channels = enumerate_channels(ts, p, lambda_small)?;
    let lists: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        channels
            .par_iter()
            .map(|ch| {
                if profile.eta == 0.0 {
                    let mut s = FloquetSolver::new(ch, profile, lambda_small, MatchingOptions::default())?;
                    s.eigenvalues(0.0, lambda_small, 1e-12)
                } else {
                    oracle_eigenvalues(ch, 0.0, profile, lambda_small, DEFAULT_N, true)
                }
            })
            .collect()
    };
    let (mut zero_modes, mut small) = (0, 0);
    for (ch, l) in channels.iter().zip(lists) {
        for x in l? {
            if x.abs() < ZERO_MODE_TOL {
                zero_modes += ch.mult;
            } else if x > 0.0 && x <= lambda_small {
                small += ch.mult;
            }
        }
    }
    let kunneth = ts.betti(p) + ts.betti(p - 1);
    let limit_kernel = limit.kernel_multiplicity();
    Ok(Census {
        p,
        eps: profile.eps,
        lambda_small,
        zero_modes,
        small,
        kunneth,
        limit_kernel,
        predicted_small: limit_kernel as i64 - kunneth as i64,
    })
}

pub fn write_bands_csv<W: Write>(bands: &[Band], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "eps", "k", "lambda_min", "lambda_max", "mult", "provenance"])?;
    for b in bands {
        w.write_record([
            b.p.to_string(),
            b.eps.to_string(),
            b.k.to_string(),
            format!("{:.12e}", b.lambda_min),
            format!("{:.12e}", b.lambda_max),
            b.mult.to_string(),
            b.provenance.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gaps_csv<W: Write>(reports: &[GapReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "eps", "window", "lower", "upper", "width"])?;
    for r in reports {
        for &(a, b) in &r.gaps {
            w.write_record([
                r.p.to_string(),
                r.eps.to_string(),
                r.lambda_max.to_string(),
                format!("{a:.12e}"),
                format!("{b:.12e}"),
                format!("{:.12e}", b - a),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence_csv<W: Write>(tables: &[ConvergenceTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "eps", "k", "width", "distance", "limit_id"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.p.to_string(),
                r.eps.to_string(),
                r.k.to_string(),
                format!("{:.12e}", r.width),
                format!("{:.12e}", r.distance),
                r.limit_id.map(|i| i.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(k: usize, lo: f64, hi: f64, mult: u64) -> Band {
        Band { p: 0, k, lambda_min: lo, lambda_max: hi, mult, provenance: vec![format!("c{k}")], channel_band: 0, eps: 0.1 }
    }

    #[test]
    fn single_band_gap() {
        let r = detect_gaps(&[band(0, 0.0, 1.0, 1)], 2.0).unwrap();
        assert_eq!(r.gaps, vec![(1.0, 2.0)]);
    }

    #[test]
    fn touching_bands_have_no_gap() {
        let bs = [band(0, 0.0, 0.25, 1), band(1, 0.25, 1.0, 2), band(2, 1.0 + 1e-10, 2.5, 2)];
        assert_eq!(detect_gaps(&bs, 2.0).unwrap().count(), 0);
    }

    #[test]
    fn mixed_eps_is_rejected() {
        let mut b = band(1, 1.0, 2.0, 1);
        b.eps = 0.2;
        assert!(detect_gaps(&[band(0, 0.0, 0.5, 1), b], 3.0).is_err());
    }

    #[test]
    fn matching_accounts_for_multiplicity() {
        let bs = [band(0, 0.0, 0.01, 1), band(1, 0.9, 0.95, 1), band(2, 0.97, 0.99, 1), band(3, 3.0, 3.1, 1)];
        let pts = [(0.0, 1), (1.0, 2), (2.0, 1)];
        let m = match_bands(&bs, &pts, 2.5, 0.5);
        assert_eq!(m.claimed(1), 2);
        assert_eq!(m.unmatched_points, vec![(2, 1)]);
        assert!(m.unmatched_bands.is_empty(), "band 3 lies above the window");
        assert!((m.max_distance() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_the_smaller_point() {
        let m = match_bands(&[band(0, 1.0, 1.0, 1)], &[(0.5, 1), (1.5, 1)], 2.0, 1.0);
        assert_eq!(m.assignments[0].point, 0);
    }
}
