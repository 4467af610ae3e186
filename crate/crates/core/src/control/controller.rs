use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::disengage::{update_disengage, DisengageConfig, DisengageState, Zone};
use super::gains::{viscoelastic, ControllerGains, GainConstants};
use super::plant::{inverse_ackermann, PlantParams, WalkerState};
use crate::behmap::{confidence, BehMapError, CellReference, Mission};
use crate::features::{Manoeuvre, PathReconstructor, SampleBuffer, DEFAULT_STEP};
use crate::geometry::{normalize_angle, Point2, Pose2};
use crate::neural::{Autoencoder, ClassifierHead, Confidence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub plant: PlantParams,
    pub angle_gains: GainConstants,
    pub direction_gains: GainConstants,
    /// Length of the moving average applied to error rates.
    pub derivative_samples: usize,
    pub disengage: DisengageConfig,
    pub danger_zones: Vec<Zone>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            angle_gains: GainConstants::STEERING_ANGLE,
            direction_gains: GainConstants::STEERING_DIRECTION,
            derivative_samples: 5,
            disengage: DisengageConfig::default(),
            danger_zones: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredRefs {
    pub kappa: f64,
    pub omega: f64,
    pub theta: f64,
    pub alpha_r: f64,
    pub alpha_l: f64,
}

/// Desired turn rate, heading and wheel angles in a cell. `path_kappa` is
/// the reference path curvature at the walker's abscissa; Straight cells
/// ask for zero curvature.
pub fn desired_refs(
    reference: &CellReference,
    path_kappa: f64,
    v: f64,
    plant: &PlantParams,
) -> DesiredRefs {
    let kappa = if reference.class == Manoeuvre::Straight {
        0.0
    } else {
        path_kappa
    };
    let (alpha_r, alpha_l) = inverse_ackermann(kappa, plant);
    DesiredRefs {
        kappa,
        omega: v * kappa,
        theta: reference.direction,
        alpha_r,
        alpha_l,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TorqueCommand {
    pub tau_r: f64,
    pub tau_l: f64,
    pub tau_alpha_r: f64,
    pub tau_alpha_l: f64,
    pub tau_beta_r: f64,
    pub tau_beta_l: f64,
    pub engaged: bool,
}

impl TorqueCommand {
    /// `τ = λ·τ_α + τ_β` on each wheel.
    pub fn combine(lambda: f64, alpha: (f64, f64), beta: (f64, f64)) -> Self {
        Self {
            tau_r: lambda * alpha.0 + beta.0,
            tau_l: lambda * alpha.1 + beta.1,
            tau_alpha_r: alpha.0,
            tau_alpha_l: alpha.1,
            tau_beta_r: beta.0,
            tau_beta_l: beta.1,
            engaged: true,
        }
    }

    pub fn robot(&self) -> (f64, f64) {
        (self.tau_r, self.tau_l)
    }
}

/// Wheel-angle and wheel-direction errors, right then left.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SteeringErrors {
    pub alpha_r: f64,
    pub alpha_l: f64,
    pub beta_r: f64,
    pub beta_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub torque: TorqueCommand,
    /// Classifier output on the live window, once the buffer is full.
    pub confidence: Option<Confidence>,
    /// Confidence in the reference class; 1 while no window exists.
    pub eps_hat: f64,
    pub angle_gains: ControllerGains,
    pub direction_gains: ControllerGains,
    /// Index into the mission references.
    pub reference: usize,
    pub refs: DesiredRefs,
    pub errors: SteeringErrors,
    pub error_rates: SteeringErrors,
    /// Abscissa of the walker's projection on the reference path.
    pub progress: f64,
    pub disengage: DisengageState,
}

/// Backward difference smoothed by a moving average.
#[derive(Debug, Clone)]
struct RateFilter {
    prev: Option<f64>,
    diffs: VecDeque<f64>,
    len: usize,
}

impl RateFilter {
    fn new(len: usize) -> Self {
        Self {
            prev: None,
            diffs: VecDeque::with_capacity(len),
            len: len.max(1),
        }
    }

    fn push(&mut self, e: f64, dt: f64) -> f64 {
        if let Some(p) = self.prev {
            if self.diffs.len() == self.len {
                self.diffs.pop_front();
            }
            self.diffs.push_back((e - p) / dt);
        }
        self.prev = Some(e);
        if self.diffs.is_empty() {
            0.0
        } else {
            self.diffs.iter().sum::<f64>() / self.diffs.len() as f64
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.diffs.clear();
    }
}

/// Online shared-authority controller. Feed it one walker state per period.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControlConfig,
    reconstructor: PathReconstructor,
    buffer: SampleBuffer,
    progress_index: Option<usize>,
    reference: Option<usize>,
    filters: [RateFilter; 4],
    cached: Option<Confidence>,
    stale: bool,
    disengage: DisengageState,
    position: Point2,
}

/// Samples searched behind and ahead of the previous projection.
const PROGRESS_BACK: usize = 10;
const PROGRESS_AHEAD: usize = 30;

impl Controller {
    /// `window` is the classifier's window length.
    pub fn new(config: ControlConfig, start: Pose2, window: usize) -> Self {
        let n = config.derivative_samples;
        Self {
            config,
            reconstructor: PathReconstructor::new(start, DEFAULT_STEP),
            buffer: SampleBuffer::new(window),
            progress_index: None,
            reference: None,
            filters: [
                RateFilter::new(n),
                RateFilter::new(n),
                RateFilter::new(n),
                RateFilter::new(n),
            ],
            cached: None,
            stale: true,
            disengage: DisengageState::default(),
            position: start.position(),
        }
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn disengage_state(&self) -> DisengageState {
        self.disengage
    }

    /// Switches guidance off on request, unless inside a danger zone.
    pub fn request_disengage(&mut self) {
        let cfg = &self.config.disengage;
        if cfg.enabled && !self.in_danger(self.position) {
            self.disengage.active = true;
            self.disengage.remaining = cfg.duration;
            self.disengage.opposition_integral = 0.0;
        }
    }

    fn in_danger(&self, p: Point2) -> bool {
        self.config.danger_zones.iter().any(|z| z.contains(p))
    }

    /// Projection on the reference path, tracked so that loops and
    /// neighbouring corridors do not make it jump.
    fn project(&mut self, mission: &Mission, p: Point2) -> f64 {
        let samples = &mission.samples;
        let (lo, hi) = match self.progress_index {
            Some(i) => (
                i.saturating_sub(PROGRESS_BACK),
                (i + PROGRESS_AHEAD).min(samples.len() - 1),
            ),
            None => (0, samples.len() - 1),
        };
        let d2 = |i: usize| (samples[i].x - p.x).powi(2) + (samples[i].y - p.y).powi(2);
        let i = (lo..=hi)
            .min_by(|&a, &b| d2(a).total_cmp(&d2(b)))
            .unwrap_or(0);
        self.progress_index = Some(i);
        // refine on the adjoining chord that the point projects onto
        let along = |a: usize, b: usize| {
            let (ax, ay) = (samples[a].x, samples[a].y);
            let (dx, dy) = (samples[b].x - ax, samples[b].y - ay);
            let len2 = dx * dx + dy * dy;
            if len2 == 0.0 {
                return None;
            }
            let t = ((p.x - ax) * dx + (p.y - ay) * dy) / len2;
            (0.0..=1.0)
                .contains(&t)
                .then(|| samples[a].s + t * (samples[b].s - samples[a].s))
        };
        let next = (i + 1 < samples.len()).then(|| along(i, i + 1)).flatten();
        let prev = (i > 0).then(|| along(i - 1, i)).flatten();
        next.or(prev).unwrap_or(samples[i].s)
    }

    fn pick_reference(&self, mission: &Mission, p: Point2, s: f64) -> usize {
        let gap = |r: &CellReference| {
            if s < r.s_start {
                r.s_start - s
            } else {
                (s - r.s_end).max(0.0)
            }
        };
        let nearest = |only_cell: Option<_>| {
            mission
                .references
                .iter()
                .enumerate()
                .filter(|(_, r)| only_cell.is_none_or(|c| r.cell == c))
                .min_by(|a, b| gap(a.1).total_cmp(&gap(b.1)))
                .map(|(i, _)| i)
        };
        mission
            .grid
            .cell_of(p)
            .ok()
            .and_then(|c| nearest(Some(c)))
            .or_else(|| nearest(None))
            .unwrap_or(0)
    }

    /// One control period: cell lookup, confidence, gain schedule and torques.
    pub fn step(
        &mut self,
        mission: &Mission,
        ae: &Autoencoder,
        head: &ClassifierHead,
        state: &WalkerState,
        dt: f64,
    ) -> Result<ControlOutput, BehMapError> {
        let p = state.pose.position();
        self.position = p;
        for sample in self.reconstructor.push_pose(state.pose) {
            self.buffer.push(sample);
            self.stale = true;
        }
        let s = self.project(mission, p);
        let r = self.pick_reference(mission, p, s);
        if self.reference != Some(r) {
            self.reference = Some(r);
            self.stale = true;
            for f in &mut self.filters {
                f.reset();
            }
        }
        let reference = mission.references[r];

        if self.stale {
            let w = self.buffer.window();
            self.cached = confidence(&reference, w.as_ref(), ae, head)?.map(|(_, c)| c);
            self.stale = false;
        }
        let eps_hat = self.cached.map_or(1.0, |c| c.of(reference.class));
        let path_kappa = mission.path.eval(s).map(|c| c.kappa).unwrap_or(0.0);
        let refs = desired_refs(&reference, path_kappa, state.v, &self.config.plant);

        let th = state.pose.theta;
        let errors = SteeringErrors {
            alpha_r: refs.alpha_r - state.alpha_r,
            alpha_l: refs.alpha_l - state.alpha_l,
            beta_r: normalize_angle(refs.theta + refs.alpha_r - th - state.alpha_r),
            beta_l: normalize_angle(refs.theta + refs.alpha_l - th - state.alpha_l),
        };
        let [fa_r, fa_l, fb_r, fb_l] = &mut self.filters;
        let error_rates = SteeringErrors {
            alpha_r: fa_r.push(errors.alpha_r, dt),
            alpha_l: fa_l.push(errors.alpha_l, dt),
            beta_r: fb_r.push(errors.beta_r, dt),
            beta_l: fb_l.push(errors.beta_l, dt),
        };
        let ga = self.config.angle_gains.schedule(eps_hat);
        let gb = self.config.direction_gains.schedule(eps_hat);

        let danger = self.in_danger(p);
        if danger {
            self.disengage.active = false;
            self.disengage.remaining = 0.0;
        }
        self.disengage.danger_zone = danger;
        let torque = if self.cached.is_none() || self.disengage.active {
            TorqueCommand::default()
        } else {
            TorqueCommand::combine(
                ga.lambda,
                (
                    viscoelastic(errors.alpha_r, error_rates.alpha_r, &ga),
                    viscoelastic(errors.alpha_l, error_rates.alpha_l, &ga),
                ),
                (
                    viscoelastic(errors.beta_r, error_rates.beta_r, &gb),
                    viscoelastic(errors.beta_l, error_rates.beta_l, &gb),
                ),
            )
        };
        Ok(ControlOutput {
            torque,
            confidence: self.cached,
            eps_hat,
            angle_gains: ga,
            direction_gains: gb,
            reference: r,
            refs,
            errors,
            error_rates,
            progress: s,
            disengage: self.disengage,
        })
    }

    /// Accounts the human's torque against the robot's for the period just
    /// commanded; may switch guidance off for the configured time.
    pub fn record_opposition(&mut self, human: (f64, f64), robot: (f64, f64), dt: f64) {
        let danger = self.in_danger(self.position);
        self.disengage = update_disengage(
            self.disengage,
            &self.config.disengage,
            human,
            robot,
            dt,
            danger,
        );
    }
}
