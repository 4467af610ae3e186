//! Planar poses and clothoid curves.
//!
//! A clothoid segment has curvature linear in arc length. Positions along it
//! are the generalised Fresnel integrals of the quadratic heading.

mod clothoid;
mod fresnel;
mod spline;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clothoid::{fit_g1, ClothoidSegment, CurvePoint};
pub use fresnel::fresnel;
pub use spline::{fit_spline, sample_path, ClothoidPath, PathSample, SplineOptions, Waypoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("abscissa {s} outside segment of length {length}")]
    OutOfRange { s: f64, length: f64 },
    #[error("start and end positions coincide")]
    DegenerateEndpoints,
    #[error("G1 Hermite solver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("clothoid fit failed between waypoints {index} and {}: {source}", index + 1)]
    SegmentFit {
        index: usize,
        #[source]
        source: Box<GeometryError>,
    },
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("path has no segments")]
    EmptyPath,
    #[error("sampling step must be positive, got {0}")]
    BadStep(f64),
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// World-frame position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Applies this pose as a rigid transform to `other` (other expressed in this frame).
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn heading_to(&self, other: &Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn lerp(&self, other: &Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}
