//! Normalised trajectory windows and online path reconstruction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, PathSample, Pose2};

/// Rows of a window: x, y, cos θ, sin θ, κ.
pub const CHANNELS: usize = 5;
/// Samples per window.
pub const DEFAULT_WINDOW: usize = 12;
/// Arc-length spacing of samples, metres.
pub const DEFAULT_STEP: f64 = 0.1;
/// Net heading change separating turns from straight motion.
pub const TURN_THRESHOLD_DEG: f64 = 15.0;

const SPACING_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("window of {n} samples ending at {k} needs more history")]
    InsufficientHistory { k: usize, n: usize },
    #[error("sample spacing {got:.4} m deviates from {expected:.4} m")]
    NonUniform { got: f64, expected: f64 },
    #[error("window length must be at least 2")]
    TooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manoeuvre {
    Left,
    Right,
    Straight,
}

impl Manoeuvre {
    pub const ALL: [Manoeuvre; 3] = [Manoeuvre::Left, Manoeuvre::Right, Manoeuvre::Straight];

    pub fn index(self) -> usize {
        match self {
            Manoeuvre::Left => 0,
            Manoeuvre::Right => 1,
            Manoeuvre::Straight => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Manoeuvre::Left => "left",
            Manoeuvre::Right => "right",
            Manoeuvre::Straight => "straight",
        }
    }

    /// Label from the net heading change of a window.
    pub fn from_turn(delta_theta: f64) -> Self {
        let t = TURN_THRESHOLD_DEG.to_radians();
        if delta_theta > t {
            Manoeuvre::Left
        } else if delta_theta < -t {
            Manoeuvre::Right
        } else {
            Manoeuvre::Straight
        }
    }
}

/// 5 × n matrix stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    n: usize,
    data: Vec<f64>,
}

impl FeatureWindow {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), CHANNELS * n, "window data must be 5 x n");
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; CHANNELS * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn get(&self, c: usize, k: usize) -> f64 {
        self.data[c * self.n + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Net heading change from first to last column.
    pub fn heading_change(&self) -> f64 {
        let (c, s) = (self.row(2), self.row(3));
        (1..self.n)
            .map(|k| normalize_angle(s[k].atan2(c[k]) - s[k - 1].atan2(c[k - 1])))
            .sum()
    }

    pub fn label(&self) -> Manoeuvre {
        Manoeuvre::from_turn(self.heading_change())
    }

    /// Circular mean of the headings.
    pub fn mean_heading(&self) -> f64 {
        let c: f64 = self.row(2).iter().sum();
        let s: f64 = self.row(3).iter().sum();
        s.atan2(c)
    }

    /// Rotates positions and headings by `phi` about the first sample.
    pub fn rotated(&self, phi: f64) -> Self {
        let (sn, cs) = phi.sin_cos();
        let n = self.n;
        let mut out = self.data.clone();
        for k in 0..n {
            let (x, y) = (self.data[k], self.data[n + k]);
            out[k] = cs * x - sn * y;
            out[n + k] = sn * x + cs * y;
            let (c, s) = (self.data[2 * n + k], self.data[3 * n + k]);
            out[2 * n + k] = cs * c - sn * s;
            out[3 * n + k] = sn * c + cs * s;
        }
        Self { n, data: out }
    }
}

/// Window over `samples[k+1-n ..= k]`, positions relative to the first one.
pub fn window(samples: &[PathSample], k: usize, n: usize) -> Result<FeatureWindow, FeatureError> {
    if n < 2 {
        return Err(FeatureError::TooShort);
    }
    if k + 1 < n || k >= samples.len() {
        return Err(FeatureError::InsufficientHistory { k, n });
    }
    let slice = &samples[k + 1 - n..=k];
    let expected = (slice[n - 1].s - slice[0].s) / (n - 1) as f64;
    for w in slice.windows(2) {
        let got = w[1].s - w[0].s;
        if !(expected > 0.0) || (got - expected).abs() > SPACING_TOLERANCE * expected {
            return Err(FeatureError::NonUniform { got, expected });
        }
    }
    let (x0, y0) = (slice[0].x, slice[0].y);
    let mut data = vec![0.0; CHANNELS * n];
    for (j, p) in slice.iter().enumerate() {
        data[j] = p.x - x0;
        data[n + j] = p.y - y0;
        let (s, c) = p.theta.sin_cos();
        data[2 * n + j] = c;
        data[3 * n + j] = s;
        data[4 * n + j] = p.kappa;
    }
    Ok(FeatureWindow { n, data })
}

/// Dead-reckons a walker and emits a [`PathSample`] each time the travelled
/// distance crosses a multiple of the step.
#[derive(Debug, Clone)]
pub struct PathReconstructor {
    step: f64,
    pose: Pose2,
    /// Heading without wrapping.
    theta: f64,
    s: f64,
    emitted: usize,
    last: Option<(f64, f64)>,
    started: bool,
}

impl PathReconstructor {
    pub fn new(start: Pose2, step: f64) -> Self {
        assert!(step > 0.0, "sample step must be positive");
        Self {
            step,
            pose: start,
            theta: start.theta,
            s: 0.0,
            emitted: 0,
            last: None,
            started: false,
        }
    }

    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    pub fn distance(&self) -> f64 {
        self.s
    }

    /// One unicycle Euler step.
    pub fn push_odometry(&mut self, v: f64, omega: f64, dt: f64) -> Vec<PathSample> {
        let v = v.max(0.0);
        let x = self.pose.x + self.theta.cos() * dt * v;
        let y = self.pose.y + self.theta.sin() * dt * v;
        let theta = self.theta + dt * omega;
        self.advance(x, y, theta, v * dt)
    }

    /// Absolute pose measurement; arc length accrues along the chord.
    pub fn push_pose(&mut self, pose: Pose2) -> Vec<PathSample> {
        let theta = self.theta + normalize_angle(pose.theta - self.theta);
        let ds = (pose.x - self.pose.x).hypot(pose.y - self.pose.y);
        self.advance(pose.x, pose.y, theta, ds)
    }

    fn advance(&mut self, x: f64, y: f64, theta: f64, ds: f64) -> Vec<PathSample> {
        let mut out = Vec::new();
        if ds > 0.0 {
            self.started = true;
        }
        let s_new = self.s + ds;
        loop {
            let target = (self.emitted + 1) as f64 * self.step;
            if ds <= 0.0 || target > s_new + 1e-9 {
                break;
            }
            let t = ((target - self.s) / ds).clamp(0.0, 1.0);
            let th = self.theta + t * (theta - self.theta);
            let kappa = self.last.map_or(0.0, |(_, prev)| (th - prev) / self.step);
            out.push(PathSample {
                s: target,
                x: self.pose.x + t * (x - self.pose.x),
                y: self.pose.y + t * (y - self.pose.y),
                theta: normalize_angle(th),
                kappa,
            });
            self.last = Some((target, th));
            self.emitted += 1;
        }
        self.pose = Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        };
        self.theta = theta;
        self.s = s_new;
        out
    }
}

/// The most recent `n` samples.
#[derive(Debug, Clone)]
pub struct SampleBuffer {
    n: usize,
    samples: VecDeque<PathSample>,
}

impl SampleBuffer {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            samples: VecDeque::with_capacity(n + 1),
        }
    }

    pub fn push(&mut self, s: PathSample) {
        if self.samples.len() == self.n {
            self.samples.pop_front();
        }
        self.samples.push_back(s);
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn latest(&self) -> Option<&PathSample> {
        self.samples.back()
    }

    /// `None` until `n` samples have arrived.
    pub fn window(&self) -> Option<FeatureWindow> {
        if !self.is_full() {
            return None;
        }
        let v: Vec<PathSample> = self.samples.iter().copied().collect();
        window(&v, self.n - 1, self.n).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, theta: f64) -> Vec<PathSample> {
        (0..n)
            .map(|k| {
                let s = 0.1 * k as f64;
                PathSample {
                    s,
                    x: 3.0 + s * theta.cos(),
                    y: -1.0 + s * theta.sin(),
                    theta,
                    kappa: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn straight_window() {
        let w = window(&line(20, 0.0), 15, 12).unwrap();
        for k in 0..12 {
            assert!((w.get(0, k) - 0.1 * k as f64).abs() < 1e-12);
            assert_eq!(w.get(1, k), 0.0);
            assert_eq!(w.get(2, k), 1.0);
            assert_eq!(w.get(3, k), 0.0);
            assert_eq!(w.get(4, k), 0.0);
        }
        assert_eq!(w.label(), Manoeuvre::Straight);
    }

    #[test]
    fn rotated_window() {
        let w = window(&line(12, std::f64::consts::FRAC_PI_2), 11, 12).unwrap();
        for k in 0..12 {
            assert!(w.get(0, k).abs() < 1e-12);
            assert!((w.get(1, k) - 0.1 * k as f64).abs() < 1e-12);
            assert!(w.get(2, k).abs() < 1e-12);
            assert!((w.get(3, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_errors() {
        let s = line(10, 0.0);
        assert_eq!(
            window(&s, 5, 12),
            Err(FeatureError::InsufficientHistory { k: 5, n: 12 })
        );
        let mut bad = line(12, 0.0);
        bad[6].s += 0.02;
        assert!(matches!(
            window(&bad, 11, 12),
            Err(FeatureError::NonUniform { .. })
        ));
        assert_eq!(window(&s, 5, 1), Err(FeatureError::TooShort));
    }

    #[test]
    fn labels() {
        assert_eq!(Manoeuvre::from_turn(0.3), Manoeuvre::Left);
        assert_eq!(Manoeuvre::from_turn(-0.3), Manoeuvre::Right);
        assert_eq!(Manoeuvre::from_turn(0.2), Manoeuvre::Straight);
        for m in Manoeuvre::ALL {
            assert_eq!(Manoeuvre::from_index(m.index()), Some(m));
        }
    }

    #[test]
    fn reconstruct_line() {
        let mut r = PathReconstructor::new(Pose2::new(0.0, 0.0, 0.0), 0.1);
        let mut out = Vec::new();
        for _ in 0..120 {
            out.extend(r.push_odometry(1.0, 0.0, 0.01));
        }
        assert_eq!(out.len(), 12);
        for (k, p) in out.iter().enumerate() {
            assert!((p.x - 0.1 * (k + 1) as f64).abs() < 1e-9);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.kappa, 0.0);
        }
    }

    #[test]
    fn stalled_walker_emits_nothing() {
        let mut r = PathReconstructor::new(Pose2::new(1.0, 1.0, 0.5), 0.1);
        for _ in 0..100 {
            assert!(r.push_odometry(0.0, 0.3, 0.01).is_empty());
        }
    }

    #[test]
    fn buffer_fills() {
        let mut b = SampleBuffer::new(12);
        for (i, s) in line(15, 0.2).into_iter().enumerate() {
            b.push(s);
            assert_eq!(b.is_full(), i >= 11);
            assert_eq!(b.window().is_some(), i >= 11);
        }
        assert_eq!(b.len(), 12);
        assert!((b.latest().unwrap().s - 1.4).abs() < 1e-12);
    }
}
