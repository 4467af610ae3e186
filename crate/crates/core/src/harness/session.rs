//! Live session protocol: JSON text frames between a running simulation and
//! its clients. Transport-agnostic; the CLI carries the frames over a
//! WebSocket.
//!
//! Every frame is an object with a `type` field. Client to server:
//!
//! * `hello {version, role}` with role `driver` or `viewer`. Must come first.
//! * `command {torque, speed, disengage}`: steering torque on both wheels in
//!   N·m, walking speed in m/s, release request. Drivers only. Out-of-range
//!   values are clamped and the next state frame has `clamped = true`.
//!
//! Server to client:
//!
//! * `welcome {version, role, session}`: static metadata, sent once.
//! * `state {seq, record}`: one telemetry record per frame, in order.
//! * `finished {report}`: the run is over.
//! * `error {code, message}`: the offending frame had no effect.

use std::collections::BTreeMap;
use std::sync::mpsc::Sender;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::policy::DriverCommand;
use super::report::RunReport;
use super::sim::{Artefacts, RunSettings, Simulation};
use super::telemetry::TelemetryRecord;
use super::{HarnessError, HumanPolicy};
use crate::behmap::{BehaviouralMap, Mission};
use crate::worldmap::{Occupancy, OccupancyGrid};

pub const SCHEMA_VERSION: u32 = 1;
/// Upper bound on the state frame rate, Hz.
pub const MAX_FRAME_RATE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Viewer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        version: u32,
        role: Role,
    },
    Command {
        torque: f64,
        speed: f64,
        #[serde(default)]
        disengage: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    VersionMismatch,
    HelloRequired,
    DriverConflict,
    NotDriver,
    OutOfRange,
    /// The simulation itself failed; the session is over.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        version: u32,
        role: Role,
        session: Box<SessionInfo>,
    },
    State {
        seq: u64,
        record: Box<TelemetryRecord>,
    },
    Finished {
        report: Box<RunReport>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server frames always serialise")
    }
}

/// Occupancy raster as text: one string per row from the top, `#` occupied,
/// `.` free, `?` unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub rows: Vec<String>,
}

impl MapInfo {
    pub fn of(grid: &OccupancyGrid) -> Self {
        let rows = (0..grid.height())
            .rev()
            .map(|row| {
                (0..grid.width())
                    .map(|col| match grid.get(col, row) {
                        Some(Occupancy::Free) => '.',
                        Some(Occupancy::Occupied) => '#',
                        _ => '?',
                    })
                    .collect()
            })
            .collect();
        let o = grid.origin();
        Self {
            width: grid.width(),
            height: grid.height(),
            resolution: grid.resolution(),
            origin_x: o.x,
            origin_y: o.y,
            rows,
        }
    }
}

/// Bounds on live driver commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverLimits {
    /// N·m.
    pub tau_max: f64,
    /// m/s.
    pub v_max: f64,
}

/// Default bound on the driver's steering torque, N·m.
pub const DEFAULT_TAU_MAX: f64 = 30.0;

/// Everything static a client needs to draw the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub dt: f64,
    pub limits: DriverLimits,
    /// Driving is refused while a recording is played back.
    pub replay: bool,
    pub map: MapInfo,
    pub behaviour_map: BehaviouralMap,
    pub mission: Mission,
}

/// Checks a command against the limits. Non-finite values are rejected;
/// finite ones are clamped and flagged.
pub fn clamp_command(
    torque: f64,
    speed: f64,
    disengage: bool,
    limits: &DriverLimits,
) -> Result<DriverCommand, ServerMessage> {
    if !torque.is_finite() || !speed.is_finite() {
        return Err(ServerMessage::error(
            ErrorCode::OutOfRange,
            "torque and speed must be finite numbers",
        ));
    }
    let t = torque.clamp(-limits.tau_max, limits.tau_max);
    let v = speed.clamp(0.0, limits.v_max);
    Ok(DriverCommand {
        torque: t,
        speed: v,
        disengage,
        clamped: t != torque || v != speed,
    })
}

pub type ConnectionId = u64;

/// Per-connection protocol state. One driver at a time; when the driver
/// leaves, a zero command is queued so the walker coasts.
pub struct SessionHub {
    info: SessionInfo,
    commands: Sender<DriverCommand>,
    connections: BTreeMap<ConnectionId, Option<Role>>,
    driver: Option<ConnectionId>,
    next_id: ConnectionId,
}

impl SessionHub {
    pub fn new(info: SessionInfo, commands: Sender<DriverCommand>) -> Self {
        Self {
            info,
            commands,
            connections: BTreeMap::new(),
            driver: None,
            next_id: 0,
        }
    }

    pub fn info(&self) -> &SessionInfo {
        &self.info
    }

    pub fn connect(&mut self) -> ConnectionId {
        let id = self.next_id;
        self.next_id += 1;
        self.connections.insert(id, None);
        id
    }

    pub fn disconnect(&mut self, id: ConnectionId) {
        self.connections.remove(&id);
        if self.driver == Some(id) {
            self.driver = None;
            let _ = self.commands.send(DriverCommand::default());
        }
    }

    pub fn driver(&self) -> Option<ConnectionId> {
        self.driver
    }

    /// Handles one inbound text frame; the reply, if any, goes back to the
    /// sender only.
    pub fn handle(&mut self, id: ConnectionId, text: &str) -> Option<ServerMessage> {
        let msg = match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => m,
            Err(e) => return Some(ServerMessage::error(ErrorCode::Malformed, e.to_string())),
        };
        let role = *self.connections.get(&id)?;
        match (msg, role) {
            (ClientMessage::Hello { version, .. }, _) if version != SCHEMA_VERSION => {
                Some(ServerMessage::error(
                    ErrorCode::VersionMismatch,
                    format!("server speaks schema version {SCHEMA_VERSION}, client sent {version}"),
                ))
            }
            (ClientMessage::Hello { .. }, Some(_)) => Some(ServerMessage::error(
                ErrorCode::Malformed,
                "hello already received",
            )),
            (ClientMessage::Hello { role, .. }, None) => {
                if role == Role::Driver {
                    if self.info.replay {
                        return Some(ServerMessage::error(
                            ErrorCode::DriverConflict,
                            "a recording is playing; connect as viewer",
                        ));
                    }
                    if self.driver.is_some() {
                        return Some(ServerMessage::error(
                            ErrorCode::DriverConflict,
                            "another driver is connected",
                        ));
                    }
                    self.driver = Some(id);
                }
                self.connections.insert(id, Some(role));
                Some(ServerMessage::Welcome {
                    version: SCHEMA_VERSION,
                    role,
                    session: Box::new(self.info.clone()),
                })
            }
            (ClientMessage::Command { .. }, None) => Some(ServerMessage::error(
                ErrorCode::HelloRequired,
                "send hello first",
            )),
            (ClientMessage::Command { .. }, Some(Role::Viewer)) => Some(ServerMessage::error(
                ErrorCode::NotDriver,
                "viewers cannot send commands",
            )),
            (
                ClientMessage::Command {
                    torque,
                    speed,
                    disengage,
                },
                Some(Role::Driver),
            ) => match clamp_command(torque, speed, disengage, &self.info.limits) {
                Ok(c) => {
                    let _ = self.commands.send(c);
                    None
                }
                Err(e) => Some(e),
            },
        }
    }
}

/// Static metadata of a live run.
pub fn session_info(
    art: &Artefacts,
    mission: &Mission,
    settings: &RunSettings,
    tau_max: f64,
    replay: bool,
) -> SessionInfo {
    SessionInfo {
        dt: settings.dt,
        limits: DriverLimits {
            tau_max,
            v_max: settings.control.plant.v_max,
        },
        replay,
        map: MapInfo::of(&art.grid),
        behaviour_map: art.behmap.clone(),
        mission: mission.clone(),
    }
}

/// Steps between state frames so that the rate stays at or below
/// [`MAX_FRAME_RATE`].
pub fn frame_stride(dt: f64) -> usize {
    ((1.0 / (MAX_FRAME_RATE * dt)) - 1e-9).ceil().max(1.0) as usize
}

/// Runs the loop, emitting state frames and a final `finished` frame.
/// With `realtime`, each step waits for its wall-clock slot. Stops early
/// when `emit` returns false.
pub fn run_live(
    art: &Artefacts,
    settings: &RunSettings,
    policy: Box<dyn HumanPolicy + '_>,
    realtime: bool,
    mut emit: impl FnMut(ServerMessage) -> bool,
) -> Result<RunReport, HarnessError> {
    let mut sim = Simulation::new(art, settings.clone(), policy)?;
    let stride = frame_stride(settings.dt);
    let start = Instant::now();
    let mut records = Vec::new();
    let mut seq = 0;
    while !sim.finished() {
        if realtime {
            let due = start + Duration::from_secs_f64(sim.time());
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let r = sim.step()?;
        if r.step % stride == 0 {
            if !emit(ServerMessage::State {
                seq,
                record: Box::new(r.clone()),
            }) {
                break;
            }
            seq += 1;
        }
        records.push(r);
    }
    let report = RunReport::from_records(&records, None);
    emit(ServerMessage::Finished {
        report: Box::new(report.clone()),
    });
    Ok(report)
}
