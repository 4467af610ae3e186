use serde::{Deserialize, Serialize};

/// Constants of one visco-elastic branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConstants {
    /// Stiffness floor and its confidence-scheduled part, N.
    pub a0: f64,
    pub a1: f64,
    /// Damping floor and its confidence-scheduled part, N·s.
    pub b0: f64,
    pub b1: f64,
}

impl GainConstants {
    /// Wheel-angle branch.
    pub const STEERING_ANGLE: Self = Self {
        a0: 25.0,
        a1: 15.0,
        b0: 15.0,
        b1: 10.0,
    };
    /// Absolute wheel-direction branch; not scheduled.
    pub const STEERING_DIRECTION: Self = Self {
        a0: 25.0,
        a1: 0.0,
        b0: 25.0,
        b1: 0.0,
    };

    /// Gains for a confidence in [0, 1]; values outside are clamped.
    pub fn schedule(&self, confidence: f64) -> ControllerGains {
        let lambda = 1.0 - confidence.clamp(0.0, 1.0);
        ControllerGains {
            a0: self.a0,
            a1: self.a1,
            b0: self.b0,
            b1: self.b1,
            lambda,
            a: self.a0 + self.a1 * lambda,
            b: self.b0 + self.b1 * lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    /// Authority of the controller, 1 − confidence.
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

/// Spring-damper torque `a·e + b·ė`.
pub fn viscoelastic(e: f64, e_dot: f64, g: &ControllerGains) -> f64 {
    g.a * e + g.b * e_dot
}
