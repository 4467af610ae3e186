use serde::{Deserialize, Serialize};

use super::{fit_g1, normalize_angle, ClothoidSegment, CurvePoint, GeometryError, Point2, Pose2};

const CONTINUITY_TOL: f64 = 1e-6;

/// Interpolation knot; a missing heading is left to the optimiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Point2,
    pub heading: Option<f64>,
}

impl Waypoint {
    pub fn free(x: f64, y: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            heading: None,
        }
    }

    pub fn fixed(pose: Pose2) -> Self {
        Self {
            position: pose.position(),
            heading: Some(pose.theta),
        }
    }
}

impl From<Point2> for Waypoint {
    fn from(p: Point2) -> Self {
        Self {
            position: p,
            heading: None,
        }
    }
}

/// One arc-length sample of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
}

/// G1-continuous chain of clothoid segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothoidPath {
    segments: Vec<ClothoidSegment>,
    #[serde(skip)]
    offsets: Vec<f64>,
}

impl ClothoidPath {
    pub fn new(segments: Vec<ClothoidSegment>) -> Result<Self, GeometryError> {
        for (i, pair) in segments.windows(2).enumerate() {
            let end = pair[0].end().pose;
            let next = pair[1].start;
            let dpos = (end.x - next.x).hypot(end.y - next.y);
            let dth = normalize_angle(end.theta - next.theta).abs();
            if dpos > CONTINUITY_TOL || dth > CONTINUITY_TOL {
                return Err(GeometryError::SegmentFit {
                    index: i,
                    source: Box::new(GeometryError::NoConvergence {
                        residual: dpos.max(dth),
                    }),
                });
            }
        }
        Ok(Self::from_trusted(segments))
    }

    fn from_trusted(segments: Vec<ClothoidSegment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            offsets.push(acc);
            acc += seg.length;
        }
        Self { segments, offsets }
    }

    /// Rebuilds cached offsets after deserialisation.
    pub fn rebuild(self) -> Self {
        Self::from_trusted(self.segments)
    }

    pub fn segments(&self) -> &[ClothoidSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        match (self.segments.last(), self.offsets.last()) {
            (Some(seg), Some(off)) => off + seg.length,
            _ => 0.0,
        }
    }

    pub fn start(&self) -> Option<Pose2> {
        self.segments.first().map(|s| s.start)
    }

    pub fn end(&self) -> Option<Pose2> {
        self.segments.last().map(|s| s.end().pose)
    }

    /// Pose and curvature at global abscissa `s` (clamped into the path).
    pub fn eval(&self, s: f64) -> Result<CurvePoint, GeometryError> {
        if self.segments.is_empty() {
            return Err(GeometryError::EmptyPath);
        }
        let s = s.clamp(0.0, self.length());
        let idx = match self
            .offsets
            .binary_search_by(|o| o.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let seg = &self.segments[idx];
        Ok(seg.eval_unchecked((s - self.offsets[idx]).clamp(0.0, seg.length)))
    }

    /// Sum of `∫ κ′² ds` over segments plus curvature jumps at joints, each
    /// jump priced as if spread linearly over the mean adjacent length.
    pub fn curvature_energy(&self) -> f64 {
        let smooth: f64 = self
            .segments
            .iter()
            .map(|s| s.curvature_rate_energy())
            .sum();
        let jumps: f64 = self
            .segments
            .windows(2)
            .map(|w| joint_penalty(&w[0], &w[1]))
            .sum();
        smooth + jumps
    }

    /// Applies a rigid transform to every segment.
    pub fn transformed(&self, tf: &Pose2) -> ClothoidPath {
        let segs = self
            .segments
            .iter()
            .map(|s| ClothoidSegment::new(tf.compose(&s.start), s.kappa0, s.kappa_rate, s.length))
            .collect();
        Self::from_trusted(segs)
    }
}

fn joint_penalty(prev: &ClothoidSegment, next: &ClothoidSegment) -> f64 {
    let jump = prev.curvature(prev.length) - next.kappa0;
    jump * jump / (0.5 * (prev.length + next.length))
}

#[derive(Debug, Clone, Copy)]
pub struct SplineOptions {
    pub max_sweeps: usize,
    /// Stop once a full sweep improves the energy by less than this.
    pub tolerance: f64,
}

impl Default for SplineOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            tolerance: 1e-6,
        }
    }
}

/// Clothoid spline through `waypoints`.
///
/// Fixed headings are honoured; free ones start from the local chord
/// direction and are then refined one at a time (finite-difference Newton
/// with backtracking) to lower [`ClothoidPath::curvature_energy`].
pub fn fit_spline(
    waypoints: &[Waypoint],
    opts: &SplineOptions,
) -> Result<ClothoidPath, GeometryError> {
    let n = waypoints.len();
    if n < 2 {
        return Err(GeometryError::TooFewWaypoints(n));
    }
    for (i, w) in waypoints.windows(2).enumerate() {
        if w[0].position.distance(&w[1].position) <= 1e-12 {
            return Err(GeometryError::SegmentFit {
                index: i,
                source: Box::new(GeometryError::DegenerateEndpoints),
            });
        }
    }
    let pts: Vec<Point2> = waypoints.iter().map(|w| w.position).collect();
    let mut headings: Vec<f64> = (0..n)
        .map(|i| {
            waypoints[i].heading.unwrap_or_else(|| {
                let a = pts[i.saturating_sub(1)];
                let b = pts[(i + 1).min(n - 1)];
                a.heading_to(&b)
            })
        })
        .collect();

    let fit = |i: usize, h: &[f64]| -> Result<ClothoidSegment, GeometryError> {
        fit_g1(
            &Pose2::new(pts[i].x, pts[i].y, h[i]),
            &Pose2::new(pts[i + 1].x, pts[i + 1].y, h[i + 1]),
        )
        .map_err(|e| GeometryError::SegmentFit {
            index: i,
            source: Box::new(e),
        })
    };

    let mut segs = (0..n - 1)
        .map(|i| fit(i, &headings))
        .collect::<Result<Vec<_>, _>>()?;

    let free: Vec<usize> = (0..n).filter(|&i| waypoints[i].heading.is_none()).collect();
    if !free.is_empty() {
        let mut total = ClothoidPath::from_trusted(segs.clone()).curvature_energy();
        for _ in 0..opts.max_sweeps {
            let before = total;
            for &i in &free {
                refine_heading(i, &pts, &mut headings, &mut segs);
            }
            total = ClothoidPath::from_trusted(segs.clone()).curvature_energy();
            if before - total < opts.tolerance {
                break;
            }
        }
    }
    Ok(ClothoidPath::from_trusted(segs))
}

/// Energy terms that depend on the heading at waypoint `i`, given candidate
/// segments on either side.
fn local_energy(
    i: usize,
    segs: &[ClothoidSegment],
    left: Option<&ClothoidSegment>,
    right: Option<&ClothoidSegment>,
) -> f64 {
    let mut e = 0.0;
    if let Some(l) = left {
        e += l.curvature_rate_energy();
        if i >= 2 {
            e += joint_penalty(&segs[i - 2], l);
        }
    }
    if let Some(r) = right {
        e += r.curvature_rate_energy();
        if i + 1 < segs.len() {
            e += joint_penalty(r, &segs[i + 1]);
        }
    }
    if let (Some(l), Some(r)) = (left, right) {
        e += joint_penalty(l, r);
    }
    e
}

fn trial(
    i: usize,
    theta: f64,
    pts: &[Point2],
    headings: &[f64],
    segs: &[ClothoidSegment],
) -> Option<(f64, Option<ClothoidSegment>, Option<ClothoidSegment>)> {
    let here = Pose2::new(pts[i].x, pts[i].y, theta);
    let left = if i > 0 {
        Some(
            fit_g1(
                &Pose2::new(pts[i - 1].x, pts[i - 1].y, headings[i - 1]),
                &here,
            )
            .ok()?,
        )
    } else {
        None
    };
    let right = if i + 1 < pts.len() {
        Some(
            fit_g1(
                &here,
                &Pose2::new(pts[i + 1].x, pts[i + 1].y, headings[i + 1]),
            )
            .ok()?,
        )
    } else {
        None
    };
    let e = local_energy(i, segs, left.as_ref(), right.as_ref());
    e.is_finite().then_some((e, left, right))
}

fn refine_heading(i: usize, pts: &[Point2], headings: &mut [f64], segs: &mut [ClothoidSegment]) {
    const H: f64 = 1e-4;
    const MAX_STEP: f64 = 0.3;
    let theta = headings[i];
    let left = (i > 0).then(|| segs[i - 1]);
    let right = (i + 1 < pts.len()).then(|| segs[i]);
    let e0 = local_energy(i, segs, left.as_ref(), right.as_ref());
    let (Some((ep, ..)), Some((em, ..))) = (
        trial(i, theta + H, pts, headings, segs),
        trial(i, theta - H, pts, headings, segs),
    ) else {
        return;
    };
    let grad = (ep - em) / (2.0 * H);
    let curv = (ep - 2.0 * e0 + em) / (H * H);
    if grad.abs() < 1e-12 {
        return;
    }
    let mut step = if curv > 0.0 {
        (-grad / curv).clamp(-MAX_STEP, MAX_STEP)
    } else {
        -0.05 * grad.signum()
    };
    for _ in 0..12 {
        if let Some((e, l, r)) = trial(i, theta + step, pts, headings, segs) {
            if e < e0 {
                headings[i] = normalize_angle(theta + step);
                if let Some(l) = l {
                    segs[i - 1] = l;
                }
                if let Some(r) = r {
                    segs[i] = r;
                }
                return;
            }
        }
        step *= 0.5;
    }
}

/// Samples at `s = 0, step, 2·step, …` plus the final endpoint.
pub fn sample_path(path: &ClothoidPath, step: f64) -> Result<Vec<PathSample>, GeometryError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(GeometryError::BadStep(step));
    }
    if path.segments.is_empty() {
        return Err(GeometryError::EmptyPath);
    }
    let total = path.length();
    let eps = 1e-9 * total.max(1.0);
    let full = ((total + eps) / step).floor() as usize;
    let mut out = Vec::with_capacity(full + 2);
    for k in 0..=full {
        let s = (k as f64 * step).min(total);
        out.push(to_sample(s, path.eval(s)?));
    }
    if total - full as f64 * step > eps {
        out.push(to_sample(total, path.eval(total)?));
    }
    Ok(out)
}

fn to_sample(s: f64, p: CurvePoint) -> PathSample {
    PathSample {
        s,
        x: p.pose.x,
        y: p.pose.y,
        theta: p.pose.theta,
        kappa: p.kappa,
    }
}
