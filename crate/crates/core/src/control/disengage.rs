use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisengageConfig {
    pub enabled: bool,
    /// Opposition integral that triggers a disengagement, N·m·s.
    pub threshold: f64,
    /// Exponential decay rate of the integral while torques agree, 1/s.
    pub leak: f64,
    /// How long guidance stays off, seconds.
    pub duration: f64,
}

impl Default for DisengageConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 2.0,
            leak: 0.5,
            duration: 10.0,
        }
    }
}

/// Axis-aligned region where guidance must never be released.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub min: Point2,
    pub max: Point2,
}

impl Zone {
    pub fn contains(&self, p: Point2) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisengageState {
    pub active: bool,
    /// Seconds left while active.
    pub remaining: f64,
    pub opposition_integral: f64,
    pub danger_zone: bool,
}

/// Mean over the two wheels of the human torque that pushes against the robot.
pub fn opposition(human: (f64, f64), robot: (f64, f64)) -> f64 {
    let one = |h: f64, r: f64| if h * r < 0.0 { h.abs() } else { 0.0 };
    0.5 * (one(human.0, robot.0) + one(human.1, robot.1))
}

/// Advances the opposition integral and the disengagement timer by `dt`.
pub fn update_disengage(
    ds: DisengageState,
    cfg: &DisengageConfig,
    human: (f64, f64),
    robot: (f64, f64),
    dt: f64,
    danger: bool,
) -> DisengageState {
    let mut next = ds;
    next.danger_zone = danger;
    if danger || !cfg.enabled {
        next.active = false;
        next.remaining = 0.0;
    }
    if next.active {
        next.remaining -= dt;
        if next.remaining <= 0.0 {
            next.active = false;
            next.remaining = 0.0;
        }
        return next;
    }
    let opp = opposition(human, robot);
    if opp > 0.0 {
        next.opposition_integral += opp * dt;
    } else {
        next.opposition_integral *= (-cfg.leak * dt).exp();
    }
    if cfg.enabled && !danger && next.opposition_integral >= cfg.threshold {
        next.active = true;
        next.remaining = cfg.duration;
        next.opposition_integral = 0.0;
    }
    next
}
