use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;

/// Walker geometry and steering actuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Front to rear axle, metres.
    pub wheelbase: f64,
    /// Distance between the front wheels, metres.
    pub track: f64,
    /// Viscous steering damping, N·m·s/rad.
    pub damping: f64,
    /// Steering inertia, kg·m².
    pub inertia: f64,
    /// Mechanical steering limit, radians.
    pub alpha_max: f64,
    pub v_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.6,
            track: 0.55,
            damping: 2.0,
            inertia: 3.0,
            alpha_max: 45f64.to_radians(),
            v_max: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    /// Midpoint of the rear axle and heading.
    pub pose: Pose2,
    pub v: f64,
    pub omega: f64,
    pub alpha_r: f64,
    pub alpha_l: f64,
    pub alpha_dot_r: f64,
    pub alpha_dot_l: f64,
}

impl WalkerState {
    /// At rest with straight wheels.
    pub fn at(pose: Pose2) -> Self {
        Self {
            pose,
            v: 0.0,
            omega: 0.0,
            alpha_r: 0.0,
            alpha_l: 0.0,
            alpha_dot_r: 0.0,
            alpha_dot_l: 0.0,
        }
    }

    pub fn mean_steering(&self) -> f64 {
        0.5 * (self.alpha_r + self.alpha_l)
    }
}

/// What the human imposes in one step: speed and a steering torque per wheel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HumanInput {
    pub v: f64,
    pub tau_r: f64,
    pub tau_l: f64,
}

/// Per-wheel steering angles that put the rear-axle midpoint on a circle of
/// curvature `kappa`. Returns `(alpha_r, alpha_l)`.
pub fn inverse_ackermann(kappa: f64, p: &PlantParams) -> (f64, f64) {
    let half = 0.5 * p.track;
    let wheel = |offset: f64| (p.wheelbase * kappa).atan2(1.0 - kappa * offset);
    (wheel(-half), wheel(half))
}

/// One control period.
///
/// The pose advances with the heading and turn rate of the current step;
/// each wheel then follows `J·α̈ + c·α̇ = τ_robot + τ_human`, clamped to the
/// steering limit. The turn rate comes from the mean wheel angle,
/// `ω = v·tan(ᾱ)/ℓ`.
pub fn step_plant(
    state: &WalkerState,
    human: HumanInput,
    robot: (f64, f64),
    p: &PlantParams,
    dt: f64,
) -> WalkerState {
    debug_assert!(dt > 0.0);
    let v = human.v.clamp(0.0, p.v_max);
    let omega = v * state.mean_steering().tan() / p.wheelbase;
    let th = state.pose.theta;
    let pose = Pose2::new(
        state.pose.x + th.cos() * dt * v,
        state.pose.y + th.sin() * dt * v,
        th + dt * omega,
    );
    let wheel = |alpha: f64, rate: f64, tau: f64| {
        let mut rate = rate + dt * (tau - p.damping * rate) / p.inertia;
        let mut alpha = alpha + dt * rate;
        if alpha.abs() > p.alpha_max {
            alpha = alpha.signum() * p.alpha_max;
            if rate * alpha > 0.0 {
                rate = 0.0;
            }
        }
        (alpha, rate)
    };
    let (alpha_r, alpha_dot_r) = wheel(state.alpha_r, state.alpha_dot_r, robot.0 + human.tau_r);
    let (alpha_l, alpha_dot_l) = wheel(state.alpha_l, state.alpha_dot_l, robot.1 + human.tau_l);
    WalkerState {
        pose,
        v,
        omega,
        alpha_r,
        alpha_l,
        alpha_dot_r,
        alpha_dot_l,
    }
}
