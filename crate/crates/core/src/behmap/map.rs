use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BehMapError, SyntheticPath};
use crate::features::{window, FeatureWindow, Manoeuvre};
use crate::geometry::{normalize_angle, PathSample, Point2};
use crate::neural::{Autoencoder, ClassifierHead, LATENT};
use crate::worldmap::{BehaviourGrid, CellIndex};

/// Same-class crossings closer than this in direction share a cluster.
pub const MERGE_THRESHOLD_DEG: f64 = 45.0;
const FORMAT_VERSION: u32 = 1;

/// One maximal run of consecutive samples inside a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub cell: CellIndex,
    pub first: usize,
    pub last: usize,
    /// Sample closest to the cell centre; windows end here.
    pub anchor: usize,
    /// Circular mean heading of the run.
    pub direction: f64,
}

pub fn cell_crossings(samples: &[PathSample], bg: &BehaviourGrid) -> Vec<Crossing> {
    let mut out: Vec<Crossing> = Vec::new();
    let mut current: Option<(CellIndex, usize)> = None;
    let close = |cell: CellIndex, first: usize, last: usize| {
        let c = bg.cell_center(cell);
        let run = &samples[first..=last];
        let anchor = first
            + run
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = Point2::new(a.1.x, a.1.y).distance(&c);
                    let db = Point2::new(b.1.x, b.1.y).distance(&c);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
        let (sc, ss) = run.iter().fold((0.0, 0.0), |(c, s), p| {
            (c + p.theta.cos(), s + p.theta.sin())
        });
        Crossing {
            cell,
            first,
            last,
            anchor,
            direction: ss.atan2(sc),
        }
    };
    for (i, p) in samples.iter().enumerate() {
        let cell = bg.cell_of(Point2::new(p.x, p.y)).ok();
        match (current, cell) {
            (Some((c, _)), Some(now)) if c == now => {}
            (prev, now) => {
                if let Some((c, first)) = prev {
                    out.push(close(c, first, i - 1));
                }
                current = now.map(|c| (c, i));
            }
        }
    }
    if let Some((c, first)) = current {
        out.push(close(c, first, samples.len() - 1));
    }
    out
}

/// Window of `n` samples ending at the crossing's anchor, if enough history exists.
pub(crate) fn crossing_window(
    samples: &[PathSample],
    c: &Crossing,
    n: usize,
) -> Option<FeatureWindow> {
    (c.anchor + 1 >= n)
        .then(|| window(samples, c.anchor, n).ok())
        .flatten()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBehaviour {
    pub cell: CellIndex,
    pub class: Manoeuvre,
    /// Mean travel direction of the members, map frame.
    pub direction: f64,
    /// Mean latent feature of the members.
    pub centroid: [f64; LATENT],
    pub member_count: usize,
    sum_cos: f64,
    sum_sin: f64,
    latent_sum: [f64; LATENT],
}

impl CellBehaviour {
    fn seed(cell: CellIndex, class: Manoeuvre, direction: f64, z: &[f64; LATENT]) -> Self {
        let mut c = Self {
            cell,
            class,
            direction,
            centroid: *z,
            member_count: 0,
            sum_cos: 0.0,
            sum_sin: 0.0,
            latent_sum: [0.0; LATENT],
        };
        c.add(direction, z);
        c
    }

    fn add(&mut self, direction: f64, z: &[f64; LATENT]) {
        self.sum_cos += direction.cos();
        self.sum_sin += direction.sin();
        for (s, v) in self.latent_sum.iter_mut().zip(z) {
            *s += v;
        }
        self.member_count += 1;
        self.refresh();
    }

    fn absorb(&mut self, other: &CellBehaviour) {
        self.sum_cos += other.sum_cos;
        self.sum_sin += other.sum_sin;
        for (s, v) in self.latent_sum.iter_mut().zip(&other.latent_sum) {
            *s += v;
        }
        self.member_count += other.member_count;
        self.refresh();
    }

    fn refresh(&mut self) {
        self.direction = self.sum_sin.atan2(self.sum_cos);
        let n = self.member_count as f64;
        self.centroid = self.latent_sum.map(|s| s / n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub trajectory_count: usize,
    /// Fingerprint of the encoder and classifier used.
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviouralMap {
    pub grid: BehaviourGrid,
    pub provenance: Provenance,
    /// Crossings that contributed a member.
    pub crossings: usize,
    /// Sorted by cell, then class, then direction.
    clusters: Vec<CellBehaviour>,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    version: u32,
    map: BehaviouralMap,
}

fn angle_gap(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

struct Observation {
    cell: CellIndex,
    class: Manoeuvre,
    direction: f64,
    latent: [f64; LATENT],
}

/// Classifies the window at every cell crossing and groups the results
/// into (class, direction) clusters per cell.
///
/// Observations are processed in a canonical order, so the result does not
/// depend on the order of `paths`.
pub fn build_behavioural_map(
    paths: &[SyntheticPath],
    ae: &Autoencoder,
    head: &ClassifierHead,
    grid: BehaviourGrid,
    provenance: Provenance,
) -> Result<BehaviouralMap, BehMapError> {
    let n = ae.config().window;
    let mut windows = Vec::new();
    let mut meta = Vec::new();
    for p in paths {
        for c in cell_crossings(&p.samples, &grid) {
            if let Some(w) = crossing_window(&p.samples, &c, n) {
                windows.push(w);
                meta.push((c.cell, c.direction));
            }
        }
    }
    let z = ae.encode_batch(&windows)?;
    let mut obs: Vec<Observation> = meta
        .into_iter()
        .enumerate()
        .map(|(i, (cell, direction))| {
            let mut latent = [0.0; LATENT];
            latent.copy_from_slice(z.row(i).as_slice().expect("standard layout"));
            Observation {
                cell,
                class: head.classify(&latent).argmax(),
                direction,
                latent,
            }
        })
        .collect();
    obs.sort_by(|a, b| {
        (a.cell, a.class)
            .cmp(&(b.cell, b.class))
            .then(a.direction.total_cmp(&b.direction))
            .then_with(|| {
                a.latent
                    .iter()
                    .zip(&b.latent)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });

    let threshold = MERGE_THRESHOLD_DEG.to_radians();
    let mut clusters: Vec<CellBehaviour> = Vec::new();
    let mut group_start = 0;
    for o in &obs {
        if clusters
            .last()
            .is_none_or(|c| (c.cell, c.class) != (o.cell, o.class))
        {
            group_start = clusters.len();
        }
        let nearest = clusters[group_start..]
            .iter_mut()
            .map(|c| (angle_gap(c.direction, o.direction), c))
            .filter(|(d, _)| *d < threshold)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match nearest {
            Some((_, c)) => c.add(o.direction, &o.latent),
            None => clusters.push(CellBehaviour::seed(o.cell, o.class, o.direction, &o.latent)),
        }
    }
    merge_close(&mut clusters, threshold);
    clusters.sort_by(|a, b| {
        (a.cell, a.class)
            .cmp(&(b.cell, b.class))
            .then(a.direction.total_cmp(&b.direction))
    });
    Ok(BehaviouralMap {
        grid,
        provenance,
        crossings: obs.len(),
        clusters,
    })
}

/// Fuses same-cell, same-class clusters whose means drifted within the threshold.
fn merge_close(clusters: &mut Vec<CellBehaviour>, threshold: f64) {
    loop {
        let mut pair = None;
        'outer: for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (a, b) = (&clusters[i], &clusters[j]);
                if a.cell == b.cell
                    && a.class == b.class
                    && angle_gap(a.direction, b.direction) < threshold
                {
                    pair = Some((i, j));
                    break 'outer;
                }
            }
        }
        match pair {
            Some((i, j)) => {
                let other = clusters.remove(j);
                clusters[i].absorb(&other);
            }
            None => return,
        }
    }
}

impl BehaviouralMap {
    pub fn clusters(&self) -> &[CellBehaviour] {
        &self.clusters
    }

    pub fn cell(&self, cell: CellIndex) -> &[CellBehaviour] {
        let lo = self.clusters.partition_point(|c| c.cell < cell);
        let hi = self.clusters.partition_point(|c| c.cell <= cell);
        &self.clusters[lo..hi]
    }

    /// Same-class cluster nearest in direction.
    pub fn lookup(
        &self,
        cell: CellIndex,
        class: Manoeuvre,
        direction: f64,
    ) -> Option<&CellBehaviour> {
        self.cell(cell)
            .iter()
            .filter(|c| c.class == class)
            .min_by(|a, b| {
                angle_gap(a.direction, direction).total_cmp(&angle_gap(b.direction, direction))
            })
    }

    pub fn save(&self, path: &Path) -> Result<(), BehMapError> {
        let file = MapFile {
            version: FORMAT_VERSION,
            map: self.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| BehMapError::Corrupt(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads a map; with `expected_model` set, refuses maps built from other models.
    pub fn load(path: &Path, expected_model: Option<&str>) -> Result<Self, BehMapError> {
        let text = fs::read_to_string(path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BehMapError::Corrupt(e.to_string()))?;
        let found = v
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(BehMapError::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let file: MapFile =
            serde_json::from_value(v).map_err(|e| BehMapError::Corrupt(e.to_string()))?;
        if let Some(expected) = expected_model {
            if file.map.provenance.model_version != expected {
                return Err(BehMapError::Provenance {
                    found: file.map.provenance.model_version,
                    expected: expected.to_string(),
                });
            }
        }
        Ok(file.map)
    }

    /// One row per cluster: cell, class, direction in degrees, members.
    pub fn write_summary_csv(&self, path: &Path) -> Result<(), BehMapError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell_x", "cell_y", "class", "direction_deg", "members"])?;
        for c in &self.clusters {
            w.write_record([
                c.cell.ix.to_string(),
                c.cell.iy.to_string(),
                c.class.name().to_string(),
                format!("{:.1}", c.direction.to_degrees()),
                c.member_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
