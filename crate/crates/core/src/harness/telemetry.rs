//! Per-step telemetry record and its CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One control period. Angles in radians, torques in N·m, SI elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub alpha_r: f64,
    pub alpha_l: f64,
    /// Classifier output; all zero until the window buffer fills.
    pub eps_left: f64,
    pub eps_right: f64,
    pub eps_straight: f64,
    /// Confidence in the reference class.
    pub eps_hat: f64,
    pub reference: usize,
    pub reference_class: String,
    pub theta_ref: f64,
    pub kappa_ref: f64,
    pub alpha_ref_r: f64,
    pub alpha_ref_l: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub tau_alpha_r: f64,
    pub tau_alpha_l: f64,
    pub tau_beta_r: f64,
    pub tau_beta_l: f64,
    pub tau_r: f64,
    pub tau_l: f64,
    pub engaged: bool,
    pub disengaged: bool,
    pub opposition: f64,
    pub human_v: f64,
    pub human_tau_r: f64,
    pub human_tau_l: f64,
    /// Scripted deviation in progress.
    pub deviating: bool,
    /// A live command was clamped into range this step.
    pub clamped: bool,
    pub progress: f64,
    pub cross_track: f64,
    /// θ_ref − θ, wrapped.
    pub heading_error: f64,
    pub goal_distance: f64,
}

impl TelemetryRecord {
    /// Mean absolute robot torque over the two wheels.
    pub fn robot_torque(&self) -> f64 {
        0.5 * (self.tau_r.abs() + self.tau_l.abs())
    }
}

pub fn write_telemetry(path: &Path, records: &[TelemetryRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetryRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
