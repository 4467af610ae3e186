//! Behavioural map: per-cell manoeuvre clusters learned from synthetic
//! trajectories, missions planned against it, and the online confidence.

mod map;
mod mission;
mod synth;

use thiserror::Error;

use crate::features::FeatureError;
use crate::geometry::GeometryError;
use crate::neural::NeuralError;
use crate::roadmap::RoadmapError;
use crate::worldmap::MapError;

pub use map::{
    build_behavioural_map, cell_crossings, BehaviouralMap, CellBehaviour, Crossing, Provenance,
    MERGE_THRESHOLD_DEG,
};
pub use mission::{confidence, plan_mission, CellReference, Mission};
pub use synth::{
    generate_trajectories, labelled_windows, plan_route, prune, uniform_samples, DatasetOptions,
    SyntheticPath, MAX_PATH_CURVATURE, MIN_PAIR_DISTANCE,
};

#[derive(Debug, Error)]
pub enum BehMapError {
    #[error("only {made} trajectories could be generated")]
    NoPairs { made: usize },
    #[error("route collapsed to a single point")]
    DegenerateRoute,
    #[error("no collision-free smoothing of the route")]
    Collision,
    #[error("a class has no windows (left/right/straight = {0:?})")]
    Unbalanced([usize; 3]),
    #[error("behavioural map built for model {found}, loaded with {expected}")]
    Provenance { found: String, expected: String },
    #[error("behavioural map file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt behavioural map file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
