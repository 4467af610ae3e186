use serde::{Deserialize, Serialize};

use super::map::{cell_crossings, crossing_window};
use super::synth::{plan_route, uniform_samples};
use super::{BehMapError, BehaviouralMap};
use crate::features::{FeatureWindow, Manoeuvre, DEFAULT_STEP};
use crate::geometry::{normalize_angle, ClothoidPath, PathSample, Point2};
use crate::neural::{Autoencoder, ClassifierHead, Confidence};
use crate::roadmap::Roadmap;
use crate::worldmap::{BehaviourGrid, CellIndex, OccupancyGrid};

/// Expected behaviour in one cell of a mission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellReference {
    pub cell: CellIndex,
    pub class: Manoeuvre,
    pub direction: f64,
    /// False when the map had no matching cluster and the reference path's
    /// own label and direction are used instead.
    pub from_map: bool,
    /// Arc-length span of the reference path inside the cell.
    pub s_start: f64,
    pub s_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub p0: Point2,
    pub pf: Point2,
    pub waypoints: Vec<Point2>,
    pub path: ClothoidPath,
    pub samples: Vec<PathSample>,
    pub grid: BehaviourGrid,
    /// In path order; a cell visited twice appears twice.
    pub references: Vec<CellReference>,
}

impl Mission {
    /// First reference for `cell`.
    pub fn reference(&self, cell: CellIndex) -> Option<&CellReference> {
        self.references.iter().find(|r| r.cell == cell)
    }

    /// Reference whose span contains arc length `s` (clamped to the path).
    pub fn reference_at(&self, s: f64) -> Option<&CellReference> {
        let s = s.clamp(0.0, self.path.length());
        self.references
            .iter()
            .find(|r| s >= r.s_start && s <= r.s_end)
            .or_else(|| {
                self.references
                    .iter()
                    .min_by(|a, b| gap(a, s).total_cmp(&gap(b, s)))
            })
    }
}

fn gap(r: &CellReference, s: f64) -> f64 {
    if s < r.s_start {
        r.s_start - s
    } else {
        (s - r.s_end).max(0.0)
    }
}

/// Plans the reference path and assigns every crossed cell its expected
/// (class, direction): the map cluster matching the path's own classified
/// label that lies nearest the path's direction, else the path's own pair.
#[allow(clippy::too_many_arguments)]
pub fn plan_mission(
    grid: &OccupancyGrid,
    rm: &Roadmap,
    bm: &BehaviouralMap,
    ae: &Autoencoder,
    head: &ClassifierHead,
    p0: Point2,
    pf: Point2,
) -> Result<Mission, BehMapError> {
    let (waypoints, path) = plan_route(grid, rm, p0, pf)?;
    let samples = uniform_samples(&path, DEFAULT_STEP)?;
    let n = ae.config().window;
    let mut references = Vec::new();
    let crossings = cell_crossings(&samples, &bm.grid);
    for (i, c) in crossings.iter().enumerate() {
        let own = match crossing_window(&samples, c, n) {
            Some(w) => head.classify(&ae.encode(&w)?).argmax(),
            None => {
                let turn: f64 = (c.first + 1..=c.last)
                    .map(|k| normalize_angle(samples[k].theta - samples[k - 1].theta))
                    .sum();
                Manoeuvre::from_turn(turn)
            }
        };
        let (class, direction, from_map) = match bm.lookup(c.cell, own, c.direction) {
            Some(cluster) => (cluster.class, cluster.direction, true),
            None => (own, c.direction, false),
        };
        // Spans meet halfway between the last sample of one cell and the
        // first of the next.
        let s_start = if i == 0 {
            0.0
        } else {
            0.5 * (samples[c.first - 1].s + samples[c.first].s)
        };
        let s_end = match crossings.get(i + 1) {
            Some(next) => 0.5 * (samples[c.last].s + samples[next.first].s),
            None => path.length(),
        };
        references.push(CellReference {
            cell: c.cell,
            class,
            direction,
            from_map,
            s_start,
            s_end,
        });
    }
    Ok(Mission {
        p0,
        pf,
        waypoints,
        path,
        samples,
        grid: bm.grid,
        references,
    })
}

/// Confidence that the live window shows the reference behaviour.
///
/// The window is first rotated so its mean heading matches the reference
/// direction. Returns `None` while no window is available.
pub fn confidence(
    reference: &CellReference,
    live: Option<&FeatureWindow>,
    ae: &Autoencoder,
    head: &ClassifierHead,
) -> Result<Option<(f64, Confidence)>, BehMapError> {
    let Some(w) = live else {
        return Ok(None);
    };
    let aligned = w.rotated(normalize_angle(reference.direction - w.mean_heading()));
    let eps = head.classify(&ae.encode(&aligned)?);
    Ok(Some((eps.of(reference.class), eps)))
}
