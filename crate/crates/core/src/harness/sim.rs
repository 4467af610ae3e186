//! Closed-loop simulation of walker, controller and user.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::policy::{HumanPolicy, PolicyConfig, PolicyContext, PolicyKind, PursuitPolicy};
use super::report::{RunReport, GOAL_TOLERANCE};
use super::telemetry::{write_telemetry, TelemetryRecord};
use super::HarnessError;
use crate::behmap::{plan_mission, BehaviouralMap, Mission};
use crate::control::{opposition, step_plant, ControlConfig, Controller, WalkerState};
use crate::geometry::{normalize_angle, Point2, Pose2};
use crate::neural::{Autoencoder, ClassifierHead};
use crate::roadmap::Roadmap;
use crate::worldmap::OccupancyGrid;

/// Everything built offline that a run needs.
#[derive(Debug, Clone)]
pub struct Artefacts {
    pub grid: OccupancyGrid,
    pub roadmap: Roadmap,
    pub behmap: BehaviouralMap,
    pub ae: Autoencoder,
    pub head: ClassifierHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub p0: Point2,
    pub pf: Point2,
    /// Simulated seconds.
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Standard deviation of the position noise fed to the controller, metres.
    pub localisation_noise: f64,
    pub control: ControlConfig,
    pub policy: PolicyConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            p0: Point2::new(1.0, 8.0),
            pf: Point2::new(8.0, 15.0),
            duration: 30.0,
            dt: 0.02,
            seed: 0,
            localisation_noise: 0.0,
            control: ControlConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

/// Pursuit-based policy for the scripted kinds; `None` for replay and external.
pub fn scripted_policy(cfg: &PolicyConfig, seed: u64) -> Option<Box<dyn HumanPolicy>> {
    match cfg.kind {
        PolicyKind::Compliant | PolicyKind::Rough | PolicyKind::Adversarial => {
            Some(Box::new(PursuitPolicy::new(*cfg, seed)))
        }
        PolicyKind::Replay | PolicyKind::External => None,
    }
}

/// Stepwise closed loop. The walker starts at rest on the mission start
/// pose with straight wheels.
pub struct Simulation<'a> {
    art: &'a Artefacts,
    settings: RunSettings,
    mission: Mission,
    state: WalkerState,
    controller: Controller,
    policy: Box<dyn HumanPolicy + 'a>,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    step: usize,
    finished: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(
        art: &'a Artefacts,
        settings: RunSettings,
        policy: Box<dyn HumanPolicy + 'a>,
    ) -> Result<Self, HarnessError> {
        if !(settings.dt > 0.0) {
            return Err(HarnessError::Config(format!(
                "time step must be positive, got {}",
                settings.dt
            )));
        }
        let mission = plan_mission(
            &art.grid,
            &art.roadmap,
            &art.behmap,
            &art.ae,
            &art.head,
            settings.p0,
            settings.pf,
        )?;
        let start = mission
            .path
            .start()
            .unwrap_or(Pose2::new(settings.p0.x, settings.p0.y, 0.0));
        let controller = Controller::new(settings.control.clone(), start, art.ae.config().window);
        let noise = (settings.localisation_noise > 0.0).then(|| {
            // separate stream so that noise does not shift the policy's draws
            let rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x6c6f_6361_6c69_7365);
            (
                rng,
                Normal::new(0.0, settings.localisation_noise).expect("finite noise level"),
            )
        });
        Ok(Self {
            art,
            mission,
            state: WalkerState::at(start),
            controller,
            policy,
            noise,
            step: 0,
            finished: false,
            settings,
        })
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn state(&self) -> &WalkerState {
        &self.state
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.settings.dt
    }

    /// Goal reached or time is up.
    pub fn finished(&self) -> bool {
        self.finished || self.time() > self.settings.duration + 1e-9
    }

    pub fn goal_reached(&self) -> bool {
        self.finished
    }

    /// Advances one period and returns the record of the state it started from.
    pub fn step(&mut self) -> Result<TelemetryRecord, HarnessError> {
        let dt = self.settings.dt;
        let t = self.time();
        let mut measured = self.state;
        if let Some((rng, normal)) = &mut self.noise {
            measured.pose.x += normal.sample(rng);
            measured.pose.y += normal.sample(rng);
        }
        let out =
            self.controller
                .step(&self.mission, &self.art.ae, &self.art.head, &measured, dt)?;
        let ctx = PolicyContext {
            step: self.step,
            t,
            state: &self.state,
            mission: &self.mission,
            plant: &self.settings.control.plant,
            progress: out.progress,
        };
        let action = self.policy.act(&ctx);
        let human = (action.input.tau_r, action.input.tau_l);
        let robot = out.torque.robot();
        self.controller.record_opposition(human, robot, dt);
        if action.disengage {
            self.controller.request_disengage();
        }

        let pose = self.state.pose;
        let reference = &self.mission.references[out.reference];
        let on_path = self
            .mission
            .path
            .eval(out.progress)
            .map(|c| c.pose.position())
            .unwrap_or(pose.position());
        let goal_distance = pose.position().distance(&self.mission.pf);
        let eps = out.confidence.map_or([0.0; 3], |c| c.0);
        let record = TelemetryRecord {
            step: self.step,
            t,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            v: self.state.v,
            omega: self.state.omega,
            alpha_r: self.state.alpha_r,
            alpha_l: self.state.alpha_l,
            eps_left: eps[0],
            eps_right: eps[1],
            eps_straight: eps[2],
            eps_hat: out.eps_hat,
            reference: out.reference,
            reference_class: reference.class.name().to_string(),
            theta_ref: out.refs.theta,
            kappa_ref: out.refs.kappa,
            alpha_ref_r: out.refs.alpha_r,
            alpha_ref_l: out.refs.alpha_l,
            lambda: out.angle_gains.lambda,
            a: out.angle_gains.a,
            b: out.angle_gains.b,
            tau_alpha_r: out.torque.tau_alpha_r,
            tau_alpha_l: out.torque.tau_alpha_l,
            tau_beta_r: out.torque.tau_beta_r,
            tau_beta_l: out.torque.tau_beta_l,
            tau_r: out.torque.tau_r,
            tau_l: out.torque.tau_l,
            engaged: out.torque.engaged,
            disengaged: out.disengage.active,
            opposition: opposition(human, robot),
            human_v: action.input.v,
            human_tau_r: action.input.tau_r,
            human_tau_l: action.input.tau_l,
            deviating: self.policy.deviating(),
            clamped: self.policy.clamped(),
            progress: out.progress,
            cross_track: pose.position().distance(&on_path),
            heading_error: normalize_angle(out.refs.theta - pose.theta),
            goal_distance,
        };
        if goal_distance <= GOAL_TOLERANCE {
            self.finished = true;
        }
        self.state = step_plant(
            &self.state,
            action.input,
            robot,
            &self.settings.control.plant,
            dt,
        );
        self.step += 1;
        Ok(record)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mission: Mission,
    pub records: Vec<TelemetryRecord>,
    pub report: RunReport,
}

/// File names used inside a run's output directory.
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const REPORT_FILE: &str = "report.json";

/// Runs to the goal or the time limit. With `out_dir`, writes the telemetry
/// CSV and the report JSON there.
pub fn run_experiment(
    art: &Artefacts,
    settings: &RunSettings,
    policy: Box<dyn HumanPolicy + '_>,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, HarnessError> {
    let mut sim = Simulation::new(art, settings.clone(), policy)?;
    let mut records = Vec::new();
    while !sim.finished() {
        records.push(sim.step()?);
    }
    let telemetry = out_dir.map(|d| d.join(TELEMETRY_FILE));
    let report = RunReport::from_records(
        &records,
        telemetry.as_ref().map(|p| p.display().to_string()),
    );
    if let (Some(dir), Some(tpath)) = (out_dir, &telemetry) {
        std::fs::create_dir_all(dir)?;
        write_telemetry(tpath, &records)?;
        report.save(&dir.join(REPORT_FILE))?;
    }
    Ok(RunOutcome {
        mission: sim.mission,
        records,
        report,
    })
}
