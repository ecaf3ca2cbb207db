use crate::error::{Error, Result};

/// Piece of one period of the warping function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    /// Thin cylinder of radius ε and length L.
    Handle,
    /// Cone on which ρ grows from ε to 1.
    RightCone,
    /// Unit-radius cylinder of length l_out.
    Cylinder,
    /// Cone on which ρ decreases from 1 to ε.
    LeftCone,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }
}

/// One period of the warping function ρ_ε, optionally with smoothed corners.
///
/// The period starts at the beginning of the handle:
/// handle [0, L], right cone [L, L+1−ε], cylinder of length l_out, left cone.
/// With `eta > 0` each corner is rounded through
/// f_η(r) = 1 + w·s((r−1)/w) with s(x) = 6x³ − 8x⁴ + 3x⁵ and w = e^{η/2} − 1,
/// which keeps the smoothed radius within a factor e^{±η/2} of ρ_ε and hence
/// the metric within e^{±η}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub eps: f64,
    pub handle_len: f64,
    pub outer_len: f64,
    pub eta: f64,
}

fn smooth_step(x: f64) -> (f64, f64) {
    let x = x.clamp(0.0, 1.0);
    let x2 = x * x;
    (x2 * x * (6.0 - 8.0 * x + 3.0 * x2), x2 * (18.0 - 32.0 * x + 15.0 * x2))
}

impl Profile {
    pub fn new(eps: f64, handle_len: f64, outer_len: f64) -> Result<Profile> {
        Profile::smoothed(eps, handle_len, outer_len, 0.0)
    }

    pub fn smoothed(eps: f64, handle_len: f64, outer_len: f64, eta: f64) -> Result<Profile> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps = {eps} must lie in ]0, 1]")));
        }
        if !(handle_len > 0.0 && handle_len.is_finite()) {
            return Err(Error::invalid(format!("handle length {handle_len} must be positive")));
        }
        if !(outer_len >= 0.0 && outer_len.is_finite()) {
            return Err(Error::invalid(format!("outer length {outer_len} must be non-negative")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("eta = {eta} must be non-negative")));
        }
        let profile = Profile { eps, handle_len, outer_len, eta };
        if eta > 0.0 && eps < 1.0 {
            let w = profile.smoothing_width();
            if eps * (1.0 + w) * (1.0 + w) > 1.0 {
                return Err(Error::invalid(format!(
                    "eta = {eta} is too large for eps = {eps}: the two smoothing zones overlap"
                )));
            }
        }
        Ok(profile)
    }

    /// Relative width w = e^{η/2} − 1 of each smoothing zone.
    pub fn smoothing_width(&self) -> f64 {
        (0.5 * self.eta).exp_m1()
    }

    pub fn cone_len(&self) -> f64 {
        1.0 - self.eps
    }

    /// Period T = L + 2(1 − ε) + l_out.
    pub fn period(&self) -> f64 {
        self.handle_len + 2.0 * self.cone_len() + self.outer_len
    }

    pub fn segments(&self) -> [Segment; 4] {
        let l = self.handle_len;
        let c = self.cone_len();
        let a = l + c;
        let b = a + self.outer_len;
        [
            Segment { kind: SegmentKind::Handle, start: 0.0, end: l },
            Segment { kind: SegmentKind::RightCone, start: l, end: a },
            Segment { kind: SegmentKind::Cylinder, start: a, end: b },
            Segment { kind: SegmentKind::LeftCone, start: b, end: b + c },
        ]
    }

    /// Segment containing τ (reduced modulo the period); breakpoints belong
    /// to the segment on their right.
    pub fn segment_at(&self, tau: f64) -> Segment {
        let tau = tau.rem_euclid(self.period());
        let segs = self.segments();
        *segs.iter().find(|s| tau >= s.start && tau < s.end && !s.is_empty()).unwrap_or(&segs[0])
    }

    /// Corner-free piecewise-linear radius and its slope.
    pub fn piecewise(&self, tau: f64) -> (f64, f64) {
        let tau = tau.rem_euclid(self.period());
        let seg = self.segment_at(tau);
        match seg.kind {
            SegmentKind::Handle => (self.eps, 0.0),
            SegmentKind::Cylinder => (1.0, 0.0),
            SegmentKind::RightCone => (self.eps + (tau - seg.start), 1.0),
            SegmentKind::LeftCone => (1.0 - (tau - seg.start), -1.0),
        }
    }

    /// ρ(τ) and ρ′(τ), including corner smoothing when η > 0.
    pub fn rho(&self, tau: f64) -> (f64, f64) {
        let (x, dx) = self.piecewise(tau);
        if self.eta == 0.0 || dx == 0.0 {
            return (x, dx);
        }
        let (s, ds) = self.smooth_radius(x);
        (s, ds * dx)
    }

    /// Smoothed radius S(x) as a function of the piecewise radius x ∈ [ε, 1].
    fn smooth_radius(&self, x: f64) -> (f64, f64) {
        let w = self.smoothing_width();
        let eps = self.eps;
        let f = |r: f64| -> (f64, f64) {
            if r >= 1.0 + w {
                return (r, 1.0);
            }
            let (s, ds) = smooth_step((r - 1.0) / w);
            (1.0 + w * s, ds)
        };
        if x < eps * (1.0 + w) {
            let (v, dv) = f(x / eps);
            (eps * v, dv)
        } else if x > 1.0 / (1.0 + w) {
            let (v, dv) = f(1.0 / x);
            (1.0 / v, dv / (v * v * x * x))
        } else {
            (x, 1.0)
        }
    }

    /// Segment boundaries plus the edges of the smoothing zones, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let segs = self.segments();
        let mut pts: Vec<f64> = segs.iter().map(|s| s.start).collect();
        pts.push(self.period());
        if self.eta > 0.0 && self.eps < 1.0 {
            let w = self.smoothing_width();
            let tip = self.eps * w;
            let outer = 1.0 - 1.0 / (1.0 + w);
            let (rc, lc) = (segs[1], segs[3]);
            pts.extend([rc.start + tip, rc.end - outer, lc.start + outer, lc.end - tip]);
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_and_endpoints() {
        let p = Profile::new(0.1, 3.0, 1.0).unwrap();
        assert!((p.period() - 5.8).abs() < 1e-14);
        assert_eq!(p.rho(0.0).0, 0.1);
        assert!((p.rho(p.period() - 1e-12).0 - 0.1).abs() < 1e-10);
        assert_eq!(p.rho(3.0 + 0.9 + 0.5).0, 1.0);
        assert!((p.rho(3.45).0 - 0.55).abs() < 1e-14);
    }

    #[test]
    fn invalid_eps_is_rejected() {
        assert!(Profile::new(0.0, 1.0, 1.0).is_err());
        assert!(Profile::new(1.5, 1.0, 1.0).is_err());
        assert!(Profile::smoothed(0.5, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn smoothing_stays_within_factor() {
        let p = Profile::smoothed(0.1, 2.0, 1.0, 0.1).unwrap();
        let bound = (0.05f64).exp();
        let mut prev = 0.0;
        for i in 0..20000 {
            let tau = p.period() * i as f64 / 20000.0;
            let (r0, _) = p.piecewise(tau);
            let (r, dr) = p.rho(tau);
            assert!(r / r0 <= bound * (1.0 + 1e-12) && r0 / r <= bound * (1.0 + 1e-12));
            if i > 0 {
                // slope stays bounded and continuous
                assert!((dr - prev).abs() < 0.2, "jump at {tau}");
            }
            prev = dr;
        }
    }
}
