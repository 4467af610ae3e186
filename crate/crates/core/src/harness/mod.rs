//! Experiments: scripted users, the closed-loop runner, telemetry and reports.

mod config;
mod pipeline;
mod policy;
mod report;
mod session;
mod sim;
mod telemetry;

use thiserror::Error;

use crate::behmap::BehMapError;
use crate::neural::NeuralError;
use crate::roadmap::RoadmapError;
use crate::worldmap::MapError;

pub use config::{
    ArtefactPaths, ExperimentConfig, FileOverrides, RoadmapSettings, SynthSettings, TrainSettings,
    ARTEFACT_DIR_ENV,
};
pub use pipeline::{
    behmap, configured_policy, describe, load_artefacts, load_grid, map_build, recorded_inputs,
    report, run, synth, train, SynthSummary, TrainingSummary, PIPELINE_FILE_VERSION,
};
pub use policy::{
    Deviation, DriverCommand, ExternalPolicy, HumanAction, HumanPolicy, PolicyConfig,
    PolicyContext, PolicyKind, PursuitPolicy, ReplayPolicy,
};
pub use report::{
    DeviationEpisode, Interval, RunReport, GOAL_TOLERANCE, HEADING_SETTLED, REPORT_VERSION,
};
pub use session::{
    clamp_command, frame_stride, run_live, session_info, ClientMessage, ConnectionId, DriverLimits,
    ErrorCode, MapInfo, Role, ServerMessage, SessionHub, SessionInfo, DEFAULT_TAU_MAX,
    MAX_FRAME_RATE, SCHEMA_VERSION,
};
pub use sim::{
    run_experiment, scripted_policy, Artefacts, RunOutcome, RunSettings, Simulation, REPORT_FILE,
    TELEMETRY_FILE,
};
pub use telemetry::{read_telemetry, write_telemetry, TelemetryRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what} file version {found}, expected {expected}")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error(transparent)]
    BehMap(#[from] BehMapError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
