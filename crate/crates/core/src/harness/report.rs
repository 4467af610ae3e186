//! Run aggregates, recomputable from telemetry alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::telemetry::TelemetryRecord;
use super::HarnessError;
use crate::features::Manoeuvre;

pub const REPORT_VERSION: u32 = 1;
/// Distance from the goal that counts as arrival, metres.
pub const GOAL_TOLERANCE: f64 = 0.5;
/// Heading error that counts as recovered, radians.
pub const HEADING_SETTLED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

/// What happened around the scripted deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEpisode {
    pub start: f64,
    pub release: f64,
    pub class: Manoeuvre,
    /// Confidence in the expected class just before the deviation.
    pub eps_before: f64,
    /// Lowest confidence in the expected class while deviating.
    pub eps_min: f64,
    pub t_min: f64,
    /// Highest confidence in the expected class after the minimum,
    /// within ten seconds of release.
    pub eps_recovered: f64,
    pub mean_torque_during: f64,
    /// Seconds from release until the heading error first drops below
    /// the settled threshold; `None` if it never does.
    pub heading_settle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub telemetry: Option<String>,
    pub steps: usize,
    pub duration: f64,
    pub goal_reached: bool,
    pub mean_abs_torque: f64,
    pub max_abs_torque: f64,
    pub mean_eps_hat: f64,
    pub mean_cross_track: f64,
    pub max_cross_track: f64,
    pub engaged_fraction: f64,
    pub disengagements: Vec<Interval>,
    pub deviation: Option<DeviationEpisode>,
}

const EPISODE_HORIZON: f64 = 10.0;

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn class_eps(r: &TelemetryRecord, c: Manoeuvre) -> f64 {
    match c {
        Manoeuvre::Left => r.eps_left,
        Manoeuvre::Right => r.eps_right,
        Manoeuvre::Straight => r.eps_straight,
    }
}

fn episode(records: &[TelemetryRecord]) -> Option<DeviationEpisode> {
    let first = records.iter().position(|r| r.deviating)?;
    let last = first
        + records[first..]
            .iter()
            .position(|r| !r.deviating)
            .unwrap_or(records.len() - first)
        - 1;
    let class = records[first..=last]
        .iter()
        .map(|r| r.reference_class.as_str())
        .find_map(|name| {
            Manoeuvre::ALL
                .into_iter()
                .find(|m| m.name() == name && *m != Manoeuvre::Straight)
        })
        .unwrap_or(Manoeuvre::Straight);
    let release = records.get(last + 1).map_or(records[last].t, |r| r.t);
    let horizon = release + EPISODE_HORIZON;
    let (i_min, r_min) = records[first..=last]
        .iter()
        .enumerate()
        .min_by(|a, b| class_eps(a.1, class).total_cmp(&class_eps(b.1, class)))?;
    let eps_recovered = records[first + i_min..]
        .iter()
        .take_while(|r| r.t <= horizon)
        .map(|r| class_eps(r, class))
        .fold(f64::NEG_INFINITY, f64::max);
    let heading_settle = records[last + 1..]
        .iter()
        .take_while(|r| r.t <= horizon)
        .find(|r| r.heading_error.abs() < HEADING_SETTLED)
        .map(|r| r.t - release);
    Some(DeviationEpisode {
        start: records[first].t,
        release,
        class,
        eps_before: first
            .checked_sub(1)
            .map_or(0.0, |i| class_eps(&records[i], class)),
        eps_min: class_eps(r_min, class),
        t_min: r_min.t,
        eps_recovered,
        mean_torque_during: mean(
            records[first..=last]
                .iter()
                .map(TelemetryRecord::robot_torque),
        ),
        heading_settle,
    })
}

impl RunReport {
    /// Aggregates in record order; running it on re-read telemetry gives
    /// the same numbers bit for bit.
    pub fn from_records(records: &[TelemetryRecord], telemetry: Option<String>) -> Self {
        let mut disengagements = Vec::new();
        let mut open: Option<f64> = None;
        for r in records {
            match (open, r.disengaged) {
                (None, true) => open = Some(r.t),
                (Some(start), false) => {
                    disengagements.push(Interval { start, end: r.t });
                    open = None;
                }
                _ => {}
            }
        }
        if let (Some(start), Some(last)) = (open, records.last()) {
            disengagements.push(Interval { start, end: last.t });
        }
        let duration = match (records.first(), records.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        };
        Self {
            version: REPORT_VERSION,
            telemetry,
            steps: records.len(),
            duration,
            goal_reached: records
                .last()
                .is_some_and(|r| r.goal_distance <= GOAL_TOLERANCE),
            mean_abs_torque: mean(records.iter().map(TelemetryRecord::robot_torque)),
            max_abs_torque: records
                .iter()
                .map(|r| r.tau_r.abs().max(r.tau_l.abs()))
                .fold(0.0, f64::max),
            mean_eps_hat: mean(records.iter().map(|r| r.eps_hat)),
            mean_cross_track: mean(records.iter().map(|r| r.cross_track)),
            max_cross_track: records.iter().map(|r| r.cross_track).fold(0.0, f64::max),
            engaged_fraction: mean(records.iter().map(|r| if r.engaged { 1.0 } else { 0.0 })),
            disengagements,
            deviation: episode(records),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let r: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.version != REPORT_VERSION {
            return Err(HarnessError::Version {
                what: "report",
                found: r.version,
                expected: REPORT_VERSION,
            });
        }
        Ok(r)
    }
}
