//! Synthetic human-like trajectories over the roadmap and the balanced,
//! labelled window dataset drawn from them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BehMapError;
use crate::features::{window, FeatureWindow, Manoeuvre, DEFAULT_STEP};
use crate::geometry::{
    fit_spline, normalize_angle, sample_path, ClothoidPath, ClothoidSegment, PathSample, Point2,
    Pose2, SplineOptions, Waypoint,
};
use crate::roadmap::Roadmap;
use crate::worldmap::OccupancyGrid;

/// Distance from a route corner at which the turn starts and ends; the
/// tighter ones are tried when a turn clips a wall.
const CORNER_REACH: [f64; 4] = [1.5, 1.0, 0.5, 0.25];
/// Sharpest curvature a walker can follow, 1/m.
pub const MAX_PATH_CURVATURE: f64 = 1.5;
/// Waypoint spacing for the free-heading fallback fit.
const DENSIFY_SPACING: [f64; 2] = [1.0, 0.5];
/// Interior waypoints closer than this to a neighbour are dropped; very
/// short spline segments force sharp curvature spikes.
const MIN_WAYPOINT_GAP: f64 = 0.25;
/// Endpoints of a synthetic path are at least this far apart.
pub const MIN_PAIR_DISTANCE: f64 = 2.0;
const MAX_DRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPath {
    pub waypoints: Vec<Point2>,
    pub path: ClothoidPath,
    /// Uniformly spaced samples; a short final remainder is dropped.
    pub samples: Vec<PathSample>,
}

/// Keeps only the waypoints needed for line of sight.
pub fn prune(grid: &OccupancyGrid, points: &[Point2], clearance: f64) -> Vec<Point2> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i < points.len() - 1 {
        let mut j = points.len() - 1;
        while j > i + 1 && !grid.segment_is_free(points[i], points[j], clearance) {
            j -= 1;
        }
        out.push(points[j]);
        i = j;
    }
    out
}

fn thin(points: &[Point2], gap: f64) -> Vec<Point2> {
    let last = points.len() - 1;
    let mut out = vec![points[0]];
    for (i, p) in points.iter().enumerate().skip(1) {
        let prev = out[out.len() - 1];
        if i == last {
            if out.len() > 1 && prev.distance(p) < gap {
                out.pop();
            }
            out.push(*p);
        } else if prev.distance(p) >= gap {
            out.push(*p);
        }
    }
    out
}

fn densify(points: &[Point2], spacing: f64) -> Vec<Point2> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let k = (w[0].distance(&w[1]) / spacing).ceil().max(1.0) as usize;
        for j in 1..=k {
            out.push(w[0].lerp(&w[1], j as f64 / k as f64));
        }
    }
    out
}

/// Uniform samples at `step`; drops a trailing remainder shorter than the step.
pub fn uniform_samples(path: &ClothoidPath, step: f64) -> Result<Vec<PathSample>, BehMapError> {
    let mut s = sample_path(path, step)?;
    if s.len() >= 2 {
        let gap = s[s.len() - 1].s - s[s.len() - 2].s;
        if gap < 0.95 * step {
            s.pop();
        }
    }
    Ok(s)
}

/// Tangent length of a symmetric two-clothoid turn by `delta` whose halves
/// each have unit length: the distance from where it leaves a straight leg
/// to the corner of the two legs.
fn unit_turn_reach(delta: f64) -> f64 {
    let first = ClothoidSegment::new(Pose2::new(0.0, 0.0, 0.0), 0.0, delta, 1.0);
    let second = ClothoidSegment::new(first.end().pose, delta, -delta, 1.0);
    let end = second.end().pose;
    end.x - end.y / delta.sin() * delta.cos()
}

/// Polyline smoothed into straight legs joined by curvature-continuous
/// turns: each corner becomes a pair of clothoids (curvature ramping up and
/// back to zero) that leaves the incoming leg `reach` before the corner.
fn corner_path(points: &[Point2], reach: f64) -> Option<ClothoidPath> {
    let legs: Vec<(f64, f64)> = points
        .windows(2)
        .map(|w| {
            (
                (w[1].y - w[0].y).atan2(w[1].x - w[0].x),
                w[0].distance(&w[1]),
            )
        })
        .collect();
    if legs.iter().any(|&(_, l)| l < 1e-6) {
        return None;
    }
    let mut segs = Vec::new();
    let mut pose = Pose2::new(points[0].x, points[0].y, legs[0].0);
    for (i, &(_, len)) in legs.iter().enumerate() {
        let Some(&(next, next_len)) = legs.get(i + 1) else {
            let rest = pose.position().distance(&points[i + 1]);
            if rest > 1e-9 {
                segs.push(ClothoidSegment::new(pose, 0.0, 0.0, rest));
            }
            break;
        };
        let delta = normalize_angle(next - pose.theta);
        if delta.abs() >= 3.0 {
            return None;
        }
        let d = if delta.abs() < 1e-9 {
            0.0
        } else {
            reach.min(0.45 * len).min(0.45 * next_len)
        };
        let corner = points[i + 1];
        let straight = pose.position().distance(&corner) - d;
        if straight < -1e-9 {
            return None;
        }
        if straight > 1e-9 {
            let seg = ClothoidSegment::new(pose, 0.0, 0.0, straight);
            pose = seg.end().pose;
            segs.push(seg);
        }
        if d > 0.0 {
            let half = d / unit_turn_reach(delta.abs());
            let km = delta / half;
            let first = ClothoidSegment::new(pose, 0.0, km / half, half);
            let second = ClothoidSegment::new(first.end().pose, km, -km / half, half);
            pose = second.end().pose;
            segs.extend([first, second]);
        }
    }
    ClothoidPath::new(segs).ok()
}

fn max_curvature(path: &ClothoidPath) -> f64 {
    path.segments()
        .iter()
        .map(|g| g.kappa0.abs().max(g.curvature(g.length).abs()))
        .fold(0.0, f64::max)
}

/// Roadmap route smoothed into a collision-free clothoid path. The route
/// is pruned to line-of-sight corners; legs stay straight and each corner
/// becomes a clothoid turn, no sharper than [`MAX_PATH_CURVATURE`] where
/// the walls allow; otherwise the smoothest collision-free candidate. If every turn radius clips a wall, a
/// free-heading spline through the densified route is tried instead.
pub fn plan_route(
    grid: &OccupancyGrid,
    rm: &Roadmap,
    p0: Point2,
    pf: Point2,
) -> Result<(Vec<Point2>, ClothoidPath), BehMapError> {
    let route = rm.shortest_path(grid, p0, pf)?;
    if route.len() < 2 {
        return Err(BehMapError::DegenerateRoute);
    }
    let pruned = prune(grid, &route, rm.clearance());
    let opts = SplineOptions::default();
    let check_step = 0.5 * grid.resolution();
    let turns = CORNER_REACH
        .iter()
        .filter_map(|&d| Some((pruned.clone(), corner_path(&pruned, d)?)));
    let splines = DENSIFY_SPACING.iter().filter_map(|&sp| {
        let pts = thin(&densify(&pruned, sp), MIN_WAYPOINT_GAP);
        let wps: Vec<Waypoint> = pts.iter().map(|p| Waypoint::from(*p)).collect();
        Some((pts, fit_spline(&wps, &opts).ok()?))
    });
    let mut smoothest: Option<(f64, Vec<Point2>, ClothoidPath)> = None;
    for (pts, path) in turns.chain(splines) {
        if !grid.path_is_free(&path, rm.clearance(), check_step) {
            continue;
        }
        let k = max_curvature(&path);
        if k <= MAX_PATH_CURVATURE {
            return Ok((pts, path));
        }
        if smoothest.as_ref().is_none_or(|b| k < b.0) {
            smoothest = Some((k, pts, path));
        }
    }
    if let Some((_, pts, path)) = smoothest {
        return Ok((pts, path));
    }
    Err(BehMapError::Collision)
}

fn random_free_point(grid: &OccupancyGrid, clearance: f64, rng: &mut ChaCha8Rng) -> Option<Point2> {
    let (lo, hi) = grid.bounds();
    (0..10_000).find_map(|_| {
        let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        grid.is_free(p, clearance).then_some(p)
    })
}

/// `count` random start/goal pairs routed through the roadmap and smoothed.
/// Pairs that cannot be routed without collision are redrawn.
pub fn generate_trajectories(
    grid: &OccupancyGrid,
    rm: &Roadmap,
    count: usize,
    seed: u64,
) -> Result<Vec<SyntheticPath>, BehMapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut made = None;
        for _ in 0..MAX_DRAWS {
            let (Some(p0), Some(pf)) = (
                random_free_point(grid, rm.clearance(), &mut rng),
                random_free_point(grid, rm.clearance(), &mut rng),
            ) else {
                break;
            };
            if p0.distance(&pf) < MIN_PAIR_DISTANCE {
                continue;
            }
            let Ok((waypoints, path)) = plan_route(grid, rm, p0, pf) else {
                continue;
            };
            if max_curvature(&path) > MAX_PATH_CURVATURE {
                continue;
            }
            let samples = uniform_samples(&path, DEFAULT_STEP)?;
            made = Some(SyntheticPath {
                waypoints,
                path,
                samples,
            });
            break;
        }
        out.push(made.ok_or(BehMapError::NoPairs { made: out.len() })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub window: usize,
    /// Distance in samples between consecutive window ends on a path.
    pub stride: usize,
    /// Upper bound on windows kept per class.
    pub per_class: usize,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            window: 12,
            stride: 2,
            per_class: 4000,
            seed: 0,
        }
    }
}

/// Every `stride`-th window of every path, labelled by net heading change,
/// then subsampled so each class contributes the same number of windows.
pub fn labelled_windows(
    paths: &[SyntheticPath],
    opts: &DatasetOptions,
) -> Result<Vec<(FeatureWindow, Manoeuvre)>, BehMapError> {
    let mut by_class: [Vec<FeatureWindow>; 3] = Default::default();
    for p in paths {
        let mut k = opts.window - 1;
        while k < p.samples.len() {
            let w = window(&p.samples, k, opts.window)?;
            by_class[w.label().index()].push(w);
            k += opts.stride.max(1);
        }
    }
    let keep = by_class
        .iter()
        .map(Vec::len)
        .min()
        .unwrap_or(0)
        .min(opts.per_class);
    if keep == 0 {
        return Err(BehMapError::Unbalanced(by_class.each_ref().map(Vec::len)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(3 * keep);
    for (c, mut ws) in by_class.into_iter().enumerate() {
        ws.shuffle(&mut rng);
        ws.truncate(keep);
        let m = Manoeuvre::from_index(c).expect("three classes");
        out.extend(ws.into_iter().map(|w| (w, m)));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use crate::worldmap::scenarios;

    #[test]
    fn prune_keeps_endpoints() {
        let g = scenarios::empty_room(5.0, 5.0);
        let pts = [
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 1.5),
            Point2::new(3.0, 2.0),
            Point2::new(4.0, 4.0),
        ];
        assert_eq!(prune(&g, &pts, 0.3), vec![pts[0], pts[3]]);
    }

    #[test]
    fn thin_drops_close_interior_points() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.1, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.2, 0.0),
        ];
        assert_eq!(thin(&pts, 0.5), vec![pts[0], pts[1], pts[4]]);
    }

    #[test]
    fn densify_spacing() {
        let d = densify(&[Point2::new(0.0, 0.0), Point2::new(2.5, 0.0)], 1.0);
        assert_eq!(d.len(), 4);
        assert!((d[1].x - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn corner_turn_is_curvature_continuous() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 5.0),
        ];
        let path = corner_path(&pts, 1.0).unwrap();
        let end = path.end().unwrap();
        assert!(end.position().distance(&pts[2]) < 1e-9);
        assert!((end.theta - FRAC_PI_2).abs() < 1e-9);
        let segs = path.segments();
        assert_eq!(segs.len(), 4);
        for w in segs.windows(2) {
            assert!((w[0].curvature(w[0].length) - w[1].kappa0).abs() < 1e-12);
        }
        // the turn leaves the first leg one metre before the corner
        assert!((segs[0].length - 3.0).abs() < 1e-12);
        let turn = segs[1].end().pose;
        assert!((turn.theta - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_give_one_line() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(3.0, 3.0),
        ];
        let path = corner_path(&pts, 1.0).unwrap();
        assert_eq!(max_curvature(&path), 0.0);
        assert!((path.length() - 18f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn turn_reach_of_a_small_angle_is_about_one_half_length() {
        // a shallow two-clothoid turn is nearly a straight chord of length 2
        assert!((unit_turn_reach(1e-4) - 1.0).abs() < 1e-6);
    }
}
