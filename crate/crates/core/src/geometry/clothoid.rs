use serde::{Deserialize, Serialize};

use super::fresnel::{phase_integral, phase_moments};
use super::{normalize_angle, GeometryError, Pose2};

const MAX_NEWTON: usize = 100;
const ROOT_TOL: f64 = 1e-14;

/// Clothoid arc: heading `θ(s) = θ₀ + κ₀ s + κ′ s²/2` for `s ∈ [0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClothoidSegment {
    pub start: Pose2,
    pub kappa0: f64,
    pub kappa_rate: f64,
    pub length: f64,
}

/// Pose plus curvature at an abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub pose: Pose2,
    pub kappa: f64,
}

impl ClothoidSegment {
    pub fn new(start: Pose2, kappa0: f64, kappa_rate: f64, length: f64) -> Self {
        debug_assert!(length >= 0.0);
        Self {
            start,
            kappa0,
            kappa_rate,
            length,
        }
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.kappa0 + self.kappa_rate * s
    }

    /// Heading at `s` without wrapping.
    pub fn heading_unwrapped(&self, s: f64) -> f64 {
        self.start.theta + self.kappa0 * s + 0.5 * self.kappa_rate * s * s
    }

    pub fn eval(&self, s: f64) -> Result<CurvePoint, GeometryError> {
        if !s.is_finite() {
            return Err(GeometryError::NonFinite("abscissa"));
        }
        let tol = 1e-12 * self.length.max(1.0);
        if s < -tol || s > self.length + tol {
            return Err(GeometryError::OutOfRange {
                s,
                length: self.length,
            });
        }
        Ok(self.eval_unchecked(s.clamp(0.0, self.length)))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> CurvePoint {
        let (dx, dy) = phase_integral(self.kappa_rate, self.kappa0, self.start.theta, s);
        CurvePoint {
            pose: Pose2::new(
                self.start.x + dx,
                self.start.y + dy,
                self.heading_unwrapped(s),
            ),
            kappa: self.curvature(s),
        }
    }

    pub fn end(&self) -> CurvePoint {
        self.eval_unchecked(self.length)
    }

    /// `∫ (dκ/ds)² ds` over the segment.
    pub fn curvature_rate_energy(&self) -> f64 {
        self.kappa_rate * self.kappa_rate * self.length
    }
}

/// G1 Hermite interpolation: the clothoid leaving `from` and arriving at `to`
/// with both headings matched.
///
/// The problem reduces to one unknown `A` (half the total curvature change in
/// normalised arc length). Damped Newton from the small-angle estimate, with a
/// bracketing scan and bisection when Newton stalls.
pub fn fit_g1(from: &Pose2, to: &Pose2) -> Result<ClothoidSegment, GeometryError> {
    for v in [from.x, from.y, from.theta, to.x, to.y, to.theta] {
        if !v.is_finite() {
            return Err(GeometryError::NonFinite("pose"));
        }
    }
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let r = dx.hypot(dy);
    if r <= 1e-12 * (1.0 + from.x.abs().max(from.y.abs())) {
        return Err(GeometryError::DegenerateEndpoints);
    }
    let chord = dy.atan2(dx);
    let phi0 = normalize_angle(from.theta - chord);
    let phi1 = normalize_angle(to.theta - chord);
    let delta = phi1 - phi0;

    let problem = HermiteProblem { phi0, delta };
    let guess = 3.0 * (phi0 + phi1);
    let a = problem
        .newton(guess)
        .or_else(|| problem.bracketed(guess))
        .ok_or(GeometryError::NoConvergence {
            residual: problem.residual(guess).0.abs(),
        })?;

    let (xs, _) = phase_moments(2.0 * a, delta - a, phi0, 1.0);
    let length = r / xs[0];
    let kappa0 = (delta - a) / length;
    let kappa_rate = 2.0 * a / (length * length);
    Ok(ClothoidSegment::new(
        Pose2::new(from.x, from.y, from.theta),
        kappa0,
        kappa_rate,
        length,
    ))
}

struct HermiteProblem {
    phi0: f64,
    delta: f64,
}

impl HermiteProblem {
    /// (g, g′, X) where g is the lateral offset of the normalised curve end.
    fn residual(&self, a: f64) -> (f64, f64, f64) {
        let (xs, ys) = phase_moments(2.0 * a, self.delta - a, self.phi0, 1.0);
        (ys[0], xs[2] - xs[1], xs[0])
    }

    fn newton(&self, guess: f64) -> Option<f64> {
        let mut a = guess;
        let (mut g, mut dg, _) = self.residual(a);
        for _ in 0..MAX_NEWTON {
            if dg == 0.0 || !dg.is_finite() {
                return None;
            }
            let full = -g / dg;
            let mut step = full.clamp(-1.0, 1.0);
            let mut accepted = false;
            for _ in 0..30 {
                let trial = a + step;
                let (gt, dgt, _) = self.residual(trial);
                if gt.abs() < g.abs() || gt.abs() < ROOT_TOL {
                    a = trial;
                    g = gt;
                    dg = dgt;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return None;
            }
            if g.abs() < ROOT_TOL {
                let (_, _, x) = self.residual(a);
                return (x > 0.0).then_some(a);
            }
        }
        None
    }

    fn bracketed(&self, guess: f64) -> Option<f64> {
        let step = 0.25;
        let mut best: Option<(f64, f64)> = None;
        let (mut prev_a, mut prev_g) = (guess - 40.0, self.residual(guess - 40.0).0);
        let mut a = prev_a + step;
        while a <= guess + 40.0 {
            let g = self.residual(a).0;
            if prev_g == 0.0 || prev_g.signum() != g.signum() {
                if let Some(root) = self.bisect(prev_a, a, prev_g) {
                    if self.residual(root).2 > 0.0 {
                        let dist = (root - guess).abs();
                        if best.is_none_or(|(_, d)| dist < d) {
                            best = Some((root, dist));
                        }
                    }
                }
            }
            prev_a = a;
            prev_g = g;
            a += step;
        }
        best.map(|(root, _)| root)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, mut g_lo: f64) -> Option<f64> {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g_mid = self.residual(mid).0;
            if g_mid.abs() < ROOT_TOL || hi - lo < 1e-15 {
                return Some(mid);
            }
            if g_lo.signum() == g_mid.signum() {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
            }
        }
        None
    }
}
