//! Scripted and live human steering models.

use std::f64::consts::TAU;
use std::sync::mpsc::Receiver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::behmap::Mission;
use crate::control::{inverse_ackermann, HumanInput, PlantParams, WalkerState};
use crate::features::Manoeuvre;
use crate::geometry::normalize_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Compliant,
    Rough,
    Adversarial,
    Replay,
    External,
}

/// What the adversarial user does in the scheduled stretch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    HoldStraight,
    SteerOpposite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Walking speed, m/s.
    pub speed: f64,
    /// Pure-pursuit lookahead, metres.
    pub lookahead: f64,
    /// Stationary standard deviation of the heading noise, degrees.
    pub heading_noise_deg: f64,
    /// Correlation time of the heading noise, seconds.
    pub noise_correlation: f64,
    /// Sinusoidal heading perturbation of the rough user.
    pub rough_amplitude_deg: f64,
    pub rough_period: f64,
    /// Arm stiffness and damping of the simulated user, N·m/rad and N·m·s/rad.
    pub stiffness: f64,
    pub damping: f64,
    pub deviation: Deviation,
    /// Arm stiffness while deviating; the user insists on their own way.
    pub deviation_stiffness: f64,
    /// The adversarial stretch starts on entering the first mission cell
    /// of this class...
    pub deviation_class: Manoeuvre,
    /// ...and lasts this long, seconds.
    pub deviation_duration: f64,
    /// Distance from the goal at which the user stops.
    pub stop_distance: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Compliant,
            speed: 0.8,
            lookahead: 1.0,
            heading_noise_deg: 1.0,
            noise_correlation: 1.0,
            rough_amplitude_deg: 10.0,
            rough_period: 4.0,
            stiffness: 60.0,
            damping: 5.0,
            deviation: Deviation::HoldStraight,
            deviation_stiffness: 150.0,
            deviation_class: Manoeuvre::Left,
            deviation_duration: 3.0,
            stop_distance: 0.3,
        }
    }
}

/// Live command from a remote driver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriverCommand {
    /// Steering torque applied to both wheels, N·m.
    pub torque: f64,
    /// m/s.
    pub speed: f64,
    pub disengage: bool,
    /// The command was clamped into range on arrival.
    #[serde(default)]
    pub clamped: bool,
}

/// Everything a policy may look at in one step.
pub struct PolicyContext<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a WalkerState,
    pub mission: &'a Mission,
    pub plant: &'a PlantParams,
    /// Abscissa of the walker on the reference path.
    pub progress: f64,
}

/// Human action plus a request to release guidance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HumanAction {
    pub input: HumanInput,
    pub disengage: bool,
}

pub trait HumanPolicy: Send {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> HumanAction;

    /// Whether the scripted deviation is under way at the last call.
    fn deviating(&self) -> bool {
        false
    }

    /// Whether the input of the last call had to be clamped into range.
    fn clamped(&self) -> bool {
        false
    }
}

/// Torque a user with arm stiffness `k` and damping `d` applies to reach
/// the wheel angles of curvature `kappa`.
fn arm_torque(kappa: f64, state: &WalkerState, plant: &PlantParams, k: f64, d: f64) -> (f64, f64) {
    let (ar, al) = inverse_ackermann(kappa, plant);
    (
        k * (ar - state.alpha_r) - d * state.alpha_dot_r,
        k * (al - state.alpha_l) - d * state.alpha_dot_l,
    )
}

fn goal_reached(ctx: &PolicyContext<'_>, stop: f64) -> bool {
    ctx.state.pose.position().distance(&ctx.mission.pf) <= stop
}

/// Pure pursuit of the mission path with optional perturbations. The
/// heading noise is an Ornstein-Uhlenbeck process, so it wanders slowly
/// rather than jittering every step.
pub struct PursuitPolicy {
    cfg: PolicyConfig,
    rng: ChaCha8Rng,
    unit: Normal<f64>,
    noise: f64,
    last_t: Option<f64>,
    deviation_window: Option<(f64, f64)>,
    deviating: bool,
}

impl PursuitPolicy {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            unit: Normal::new(0.0, 1.0).expect("unit normal"),
            noise: 0.0,
            last_t: None,
            deviation_window: None,
            deviating: false,
        }
    }

    /// Start and end time of the adversarial stretch, once it has begun.
    pub fn deviation_window(&self) -> Option<(f64, f64)> {
        self.deviation_window
    }
}

impl HumanPolicy for PursuitPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> HumanAction {
        let sigma = self.cfg.heading_noise_deg.to_radians();
        let draw = self.unit.sample(&mut self.rng);
        let dt = self.last_t.map_or(0.0, |t| ctx.t - t);
        self.last_t = Some(ctx.t);
        if self.cfg.noise_correlation > 0.0 {
            let decay = (-dt / self.cfg.noise_correlation).exp();
            self.noise = self.noise * decay + sigma * (1.0 - decay * decay).sqrt() * draw;
        } else {
            self.noise = sigma * draw;
        }
        let noise = self.noise;
        let pose = ctx.state.pose;
        let path = &ctx.mission.path;
        let target = (ctx.progress + self.cfg.lookahead).min(path.length());
        let aim = path.eval(target).map(|c| c.pose).unwrap_or(pose);
        let mut eta = normalize_angle((aim.y - pose.y).atan2(aim.x - pose.x) - pose.theta) + noise;
        if self.cfg.kind == PolicyKind::Rough {
            eta += self.cfg.rough_amplitude_deg.to_radians()
                * (TAU * ctx.t / self.cfg.rough_period).sin();
        }
        let mut kappa = 2.0 * eta.sin() / self.cfg.lookahead;

        self.deviating = false;
        if self.cfg.kind == PolicyKind::Adversarial {
            if self.deviation_window.is_none() {
                let start = ctx
                    .mission
                    .references
                    .iter()
                    .find(|r| r.class == self.cfg.deviation_class)
                    .map(|r| r.s_start);
                if start.is_some_and(|s| ctx.progress >= s) {
                    self.deviation_window = Some((ctx.t, ctx.t + self.cfg.deviation_duration));
                }
            }
            if let Some((t0, t1)) = self.deviation_window {
                if ctx.t >= t0 && ctx.t < t1 {
                    self.deviating = true;
                    kappa = match self.cfg.deviation {
                        Deviation::HoldStraight => 0.0,
                        Deviation::SteerOpposite => -kappa,
                    };
                }
            }
        }
        let v = if goal_reached(ctx, self.cfg.stop_distance) {
            0.0
        } else {
            self.cfg.speed
        };
        let k = if self.deviating {
            self.cfg.deviation_stiffness
        } else {
            self.cfg.stiffness
        };
        let (tau_r, tau_l) = arm_torque(kappa, ctx.state, ctx.plant, k, self.cfg.damping);
        HumanAction {
            input: HumanInput { v, tau_r, tau_l },
            disengage: false,
        }
    }

    fn deviating(&self) -> bool {
        self.deviating
    }
}

/// Plays back recorded human inputs step by step; zero input afterwards.
pub struct ReplayPolicy {
    inputs: Vec<HumanInput>,
}

impl ReplayPolicy {
    pub fn new(inputs: Vec<HumanInput>) -> Self {
        Self { inputs }
    }
}

impl HumanPolicy for ReplayPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> HumanAction {
        HumanAction {
            input: self.inputs.get(ctx.step).copied().unwrap_or_default(),
            disengage: false,
        }
    }
}

/// Commands arriving from a live driver. Until the first command the user
/// applies no torque and stands still; afterwards the latest command holds.
pub struct ExternalPolicy {
    commands: Receiver<DriverCommand>,
    latest: DriverCommand,
    clamped: bool,
}

impl ExternalPolicy {
    pub fn new(commands: Receiver<DriverCommand>) -> Self {
        Self {
            commands,
            latest: DriverCommand::default(),
            clamped: false,
        }
    }
}

impl HumanPolicy for ExternalPolicy {
    fn act(&mut self, _ctx: &PolicyContext<'_>) -> HumanAction {
        let mut disengage = false;
        self.clamped = false;
        while let Ok(c) = self.commands.try_recv() {
            disengage |= c.disengage;
            self.clamped |= c.clamped;
            self.latest = c;
        }
        HumanAction {
            input: HumanInput {
                v: self.latest.speed,
                tau_r: self.latest.torque,
                tau_l: self.latest.torque,
            },
            disengage,
        }
    }

    fn clamped(&self) -> bool {
        self.clamped
    }
}
