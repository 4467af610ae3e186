//! Fresnel integrals and Gauss-Legendre helpers for clothoid integrals.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use super::GeometryError;

const SERIES_LIMIT: f64 = 1.5;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 200;

/// Normalised Fresnel integrals `C(x) = ∫₀ˣ cos(πt²/2) dt`, `S(x) = ∫₀ˣ sin(πt²/2) dt`.
///
/// Power series below |x| = 1.5, modified Lentz continued fraction for the
/// complementary error function above it. Both reach close to machine
/// precision over the whole real line.
pub fn fresnel(x: f64) -> Result<(f64, f64), GeometryError> {
    if !x.is_finite() {
        return Err(GeometryError::NonFinite("fresnel argument"));
    }
    Ok(fresnel_unchecked(x))
}

pub(crate) fn fresnel_unchecked(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (c, s) = if ax == 0.0 {
        (0.0, 0.0)
    } else if ax < SERIES_LIMIT {
        series(ax)
    } else {
        continued_fraction(ax)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn series(ax: f64) -> (f64, f64) {
    // Alternating accumulation of the cosine and sine series in one loop.
    let fact = FRAC_PI_2 * ax * ax;
    let mut sum = 0.0;
    let mut sum_s = 0.0;
    let mut sum_c = ax;
    let mut sign = 1.0;
    let mut odd = true;
    let mut term = ax;
    let mut n = 3.0;
    for k in 1..=MAX_ITER {
        term *= fact / k as f64;
        sum += sign * term / n;
        let test = sum.abs() * EPS;
        if odd {
            sign = -sign;
            sum_s = sum;
            sum = sum_c;
        } else {
            sum_c = sum;
            sum = sum_s;
        }
        if term < test {
            break;
        }
        odd = !odd;
        n += 2.0;
    }
    (sum_c, sum_s)
}

fn continued_fraction(ax: f64) -> (f64, f64) {
    let pix2 = PI * ax * ax;
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / FPMIN, 0.0);
    let mut d = b.inv();
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..=MAX_ITER {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += Complex64::new(4.0, 0.0);
        d = (d * a + b).inv();
        cc = b + cc.inv() * a;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    h *= Complex64::new(ax, -ax);
    let phase = Complex64::new((0.5 * pix2).cos(), (0.5 * pix2).sin());
    let cs = Complex64::new(0.5, 0.5) * (Complex64::new(1.0, 0.0) - phase * h);
    (cs.re, cs.im)
}

const GAUSS_ORDER: usize = 16;

/// Nodes and weights of the Gauss-Legendre rule on [-1, 1].
pub(crate) fn gauss_legendre() -> &'static [(f64, f64); GAUSS_ORDER] {
    static RULE: OnceLock<[(f64, f64); GAUSS_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_ORDER;
        let mut rule = [(0.0, 0.0); GAUSS_ORDER];
        for i in 0..n {
            // Newton on P_n starting from the Chebyshev-like estimate.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            rule[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Moments `∫₀ᴸ τᵏ cos(φ(τ)) dτ` and `∫₀ᴸ τᵏ sin(φ(τ)) dτ` for k = 0, 1, 2 with
/// the quadratic phase `φ(τ) = a τ²/2 + b τ + c`.
///
/// Composite Gauss-Legendre with panels small enough that the phase changes
/// by at most half a radian on each one.
pub(crate) fn phase_moments(a: f64, b: f64, c: f64, len: f64) -> ([f64; 3], [f64; 3]) {
    let mut xs = [0.0; 3];
    let mut ys = [0.0; 3];
    if len <= 0.0 {
        return (xs, ys);
    }
    let slope = b.abs().max((b + a * len).abs());
    let variation = slope * len + 0.5 * a.abs() * len * len;
    let panels = ((variation / 0.5).ceil() as usize).clamp(1, 1 << 20);
    let h = len / panels as f64;
    let rule = gauss_legendre();
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for &(node, weight) in rule.iter() {
            let t = mid + half * node;
            let phi = 0.5 * a * t * t + b * t + c;
            let (sn, cs) = phi.sin_cos();
            let w = weight * half;
            xs[0] += w * cs;
            ys[0] += w * sn;
            xs[1] += w * t * cs;
            ys[1] += w * t * sn;
            xs[2] += w * t * t * cs;
            ys[2] += w * t * t * sn;
        }
    }
    (xs, ys)
}

/// `∫₀ᴸ cos(φ)`, `∫₀ᴸ sin(φ)` for the quadratic phase, through the Fresnel
/// integrals when that form is well conditioned.
pub(crate) fn phase_integral(a: f64, b: f64, c: f64, len: f64) -> (f64, f64) {
    if len <= 0.0 {
        return (0.0, 0.0);
    }
    // Completing the square puts b²/2a into the phase offset; keep it small so
    // its rounding stays far below the target accuracy.
    if a.abs() > 1e-6 && b * b / (2.0 * a.abs()) < 200.0 {
        let k = (a.abs() / PI).sqrt();
        let sgn = a.signum();
        let shift = b / a;
        let phi0 = c - b * b / (2.0 * a);
        let (c0, s0) = fresnel_unchecked(k * shift);
        let (c1, s1) = fresnel_unchecked(k * (len + shift));
        let dc = c1 - c0;
        let ds = s1 - s0;
        let (sp, cp) = phi0.sin_cos();
        let x = (cp * dc - sgn * sp * ds) / k;
        let y = (sp * dc + sgn * cp * ds) / k;
        (x, y)
    } else {
        let (xs, ys) = phase_moments(a, b, c, len);
        (xs[0], ys[0])
    }
}
