#![allow(dead_code)]

use sharedwalk::behmap::{CellReference, Mission};
use sharedwalk::control::{ControlOutput, Controller, WalkerState};
use sharedwalk::features::Manoeuvre;
use sharedwalk::geometry::{sample_path, ClothoidPath, ClothoidSegment, Point2, Pose2};
use sharedwalk::neural::{AeConfig, Autoencoder, ClassifierHead};
use sharedwalk::worldmap::{BehaviourGrid, CellIndex, OccupancyGrid};

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// Position at `s` by integrating the heading numerically, split into
/// short pieces so every piece sees at most a fraction of a turn.
pub fn quadrature_point(seg: &ClothoidSegment, s: f64) -> (f64, f64) {
    let theta = |t: f64| seg.start.theta + seg.kappa0 * t + 0.5 * seg.kappa_rate * t * t;
    let pieces = (s * (seg.kappa0.abs() + seg.kappa_rate.abs() * s + 1.0))
        .ceil()
        .max(1.0) as usize;
    let h = s / pieces as f64;
    let (mut x, mut y) = (seg.start.x, seg.start.y);
    for i in 0..pieces {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        x += adaptive_simpson(&|t| theta(t).cos(), a, b, 1e-14);
        y += adaptive_simpson(&|t| theta(t).sin(), a, b, 1e-14);
    }
    (x, y)
}

pub const DT: f64 = 0.02;

pub fn models() -> (Autoencoder, ClassifierHead) {
    (
        Autoencoder::new(AeConfig::default(), 5),
        ClassifierHead::new(5),
    )
}

/// One-reference mission along a path of constant curvature `kappa`.
pub fn mission(kappa: f64, class: Manoeuvre, direction: f64) -> Mission {
    let path = ClothoidPath::new(vec![ClothoidSegment::new(
        Pose2::new(0.0, 0.0, 0.0),
        kappa,
        0.0,
        6.0,
    )])
    .unwrap();
    let samples = sample_path(&path, 0.1).unwrap();
    Mission {
        p0: Point2::new(0.0, 0.0),
        pf: path.end().unwrap().position(),
        waypoints: vec![],
        samples,
        grid: BehaviourGrid {
            cell_size: 1.0,
            origin: Point2::new(-10.0, -10.0),
            nx: 20,
            ny: 20,
        },
        references: vec![CellReference {
            cell: CellIndex::new(10, 10),
            class,
            direction,
            from_map: true,
            s_start: 0.0,
            s_end: path.length(),
        }],
        path,
    }
}

/// Walks straight along +x until the classifier window is full.
pub fn fill_window(
    ctrl: &mut Controller,
    m: &Mission,
    ae: &Autoencoder,
    head: &ClassifierHead,
) -> (WalkerState, ControlOutput) {
    let mut state = WalkerState::at(Pose2::new(0.0, 0.0, 0.0));
    state.v = 1.0;
    for k in 0..200 {
        state.pose = Pose2::new(k as f64 * DT, 0.0, 0.0);
        let out = ctrl.step(m, ae, head, &state, DT).unwrap();
        if out.torque.engaged {
            return (state, out);
        }
    }
    panic!("window never filled");
}

pub fn opposing_steps(
    ctrl: &mut Controller,
    m: &Mission,
    ae: &Autoencoder,
    head: &ClassifierHead,
    state: &WalkerState,
    steps: usize,
) -> Vec<ControlOutput> {
    (0..steps)
        .map(|_| {
            let out = ctrl.step(m, ae, head, state, DT).unwrap();
            let (r, l) = out.torque.robot();
            ctrl.record_opposition((-4.0 * r.signum(), -4.0 * l.signum()), (r, l), DT);
            out
        })
        .collect()
}

/// Segment check by sampling at a tenth of the grid resolution.
pub fn dense_segment_free(g: &OccupancyGrid, a: Point2, b: Point2, c: f64) -> bool {
    let step = g.resolution() / 10.0;
    let n = (a.distance(&b) / step).ceil() as usize;
    (0..=n).all(|k| g.is_free(a.lerp(&b, k as f64 / n.max(1) as f64), c))
}
