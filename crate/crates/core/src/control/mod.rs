//! Walker steering plant and the confidence-scheduled visco-elastic
//! controller that shares steering authority with the user.

mod controller;
mod disengage;
mod gains;
mod plant;

pub use controller::{
    desired_refs, ControlConfig, ControlOutput, Controller, DesiredRefs, SteeringErrors,
    TorqueCommand,
};
pub use disengage::{opposition, update_disengage, DisengageConfig, DisengageState, Zone};
pub use gains::{viscoelastic, ControllerGains, GainConstants};
pub use plant::{inverse_ackermann, step_plant, HumanInput, PlantParams, WalkerState};
