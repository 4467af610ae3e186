//! Probabilistic roadmap over the free space of an occupancy grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::worldmap::OccupancyGrid;

/// Sampling density, nodes per square metre of free space.
pub const NODE_DENSITY: f64 = 4.0;
/// Neighbours each node tries to connect to.
pub const K_NEAREST: usize = 8;
/// Roadmap nodes a query point is attached to.
pub const QUERY_LINKS: usize = 5;

const FORMAT_VERSION: u32 = 1;
const MAX_DRAWS_PER_NODE: usize = 2000;

#[derive(Debug, Error)]
pub enum RoadmapError {
    #[error("free space too small for a roadmap ({0} nodes placed)")]
    NoFreeSpace(usize),
    #[error("{which} point ({x:.3}, {y:.3}) cannot be connected to the roadmap")]
    Unconnectable { which: &'static str, x: f64, y: f64 },
    #[error("no path between the query points")]
    NoPath,
    #[error("roadmap file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt roadmap file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roadmap {
    nodes: Vec<Point2>,
    /// Sorted by neighbour index; symmetric.
    adjacency: Vec<Vec<(usize, f64)>>,
    clearance: f64,
    seed: u64,
}

pub fn build_prm(grid: &OccupancyGrid, clearance: f64, seed: u64) -> Result<Roadmap, RoadmapError> {
    let target = (NODE_DENSITY * grid.free_area()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = grid.bounds();
    let mut nodes = Vec::with_capacity(target);
    let mut draws = 0usize;
    let budget = MAX_DRAWS_PER_NODE * target.max(2);
    while nodes.len() < target && draws < budget {
        draws += 1;
        let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if grid.is_free(p, clearance) {
            nodes.push(p);
        }
    }
    if nodes.len() < 2 || nodes.len() < target {
        return Err(RoadmapError::NoFreeSpace(nodes.len()));
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for i in 0..nodes.len() {
        let mut linked = 0;
        for (j, d) in nearest(&nodes, nodes[i], Some(i)) {
            if linked == K_NEAREST {
                break;
            }
            if grid.segment_is_free(nodes[i], nodes[j], clearance) {
                linked += 1;
                adjacency[i].push((j, d));
                adjacency[j].push((i, d));
            }
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|a| a.0);
        list.dedup_by_key(|e| e.0);
    }
    Ok(Roadmap {
        nodes,
        adjacency,
        clearance,
        seed,
    })
}

/// All nodes ordered by distance to `p`, ties by index.
fn nearest(nodes: &[Point2], p: Point2, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = nodes
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(j, q)| (j, p.distance(q)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Roadmap {
    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Each node's connected-component label (smallest member index).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.nodes.len()];
        for start in 0..self.nodes.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = start;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = start;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }

    fn attach(
        &self,
        grid: &OccupancyGrid,
        p: Point2,
        which: &'static str,
    ) -> Result<Vec<(usize, f64)>, RoadmapError> {
        if !grid.is_free(p, self.clearance) {
            return Err(RoadmapError::Unconnectable {
                which,
                x: p.x,
                y: p.y,
            });
        }
        let links: Vec<_> = nearest(&self.nodes, p, None)
            .into_iter()
            .filter(|&(j, _)| grid.segment_is_free(p, self.nodes[j], self.clearance))
            .take(QUERY_LINKS)
            .collect();
        if links.is_empty() {
            return Err(RoadmapError::Unconnectable {
                which,
                x: p.x,
                y: p.y,
            });
        }
        Ok(links)
    }

    /// Shortest polyline `p0, nodes…, pf` through the graph. The query points
    /// join the graph through their nearest visible nodes, and directly to
    /// each other when mutually visible.
    pub fn shortest_path(
        &self,
        grid: &OccupancyGrid,
        p0: Point2,
        pf: Point2,
    ) -> Result<Vec<Point2>, RoadmapError> {
        if p0 == pf {
            return Ok(vec![p0]);
        }
        let src_links = self.attach(grid, p0, "start")?;
        let dst_links = self.attach(grid, pf, "goal")?;
        let n = self.nodes.len();
        let (src, dst) = (n, n + 1);
        let mut adj: Vec<Vec<(usize, f64)>> = self.adjacency.clone();
        adj.push(src_links.clone());
        adj.push(Vec::new());
        for &(j, d) in &dst_links {
            adj[j].push((dst, d));
        }
        if grid.segment_is_free(p0, pf, self.clearance) {
            adj[src].push((dst, p0.distance(&pf)));
        }
        let pred = dijkstra(&adj, src).1;
        if pred[dst].is_none() {
            return Err(RoadmapError::NoPath);
        }
        let mut chain = vec![dst];
        while let Some(p) = pred[*chain.last().unwrap()] {
            chain.push(p);
        }
        chain.reverse();
        Ok(chain
            .into_iter()
            .map(|i| match i {
                i if i == src => p0,
                i if i == dst => pf,
                i => self.nodes[i],
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), RoadmapError> {
        let file = RoadmapFile {
            version: FORMAT_VERSION,
            seed: self.seed,
            clearance: self.clearance,
            nodes: self.nodes.iter().map(|p| [p.x, p.y]).collect(),
            edges: self
                .adjacency
                .iter()
                .enumerate()
                .flat_map(|(i, l)| l.iter().filter(move |e| e.0 > i).map(move |e| [i, e.0]))
                .collect(),
        };
        let text =
            serde_json::to_string(&file).map_err(|e| RoadmapError::Corrupt(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RoadmapError> {
        let text = fs::read_to_string(path)?;
        let file: RoadmapFile =
            serde_json::from_str(&text).map_err(|e| RoadmapError::Corrupt(e.to_string()))?;
        if file.version != FORMAT_VERSION {
            return Err(RoadmapError::Version {
                found: file.version,
                expected: FORMAT_VERSION,
            });
        }
        let nodes: Vec<Point2> = file.nodes.iter().map(|p| Point2::new(p[0], p[1])).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for [i, j] in file.edges {
            if i >= nodes.len() || j >= nodes.len() || i == j {
                return Err(RoadmapError::Corrupt(format!(
                    "edge ({i}, {j}) out of range"
                )));
            }
            let d = nodes[i].distance(&nodes[j]);
            adjacency[i].push((j, d));
            adjacency[j].push((i, d));
        }
        for list in &mut adjacency {
            list.sort_by_key(|a| a.0);
        }
        Ok(Self {
            nodes,
            adjacency,
            clearance: file.clearance,
            seed: file.seed,
        })
    }
}

/// Distances and predecessors from `src`. Among equal-length routes the
/// predecessor with the lower index wins.
pub(crate) fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut pred = vec![None; adj.len()];
    let mut done = vec![false; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: src,
    });
    while let Some(Frontier { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adj[u] {
            if done[v] {
                continue;
            }
            let nd = d + w;
            let better = nd < dist[v] || (nd == dist[v] && pred[v].is_some_and(|p| u < p));
            if better {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(Frontier { dist: nd, node: v });
            }
        }
    }
    (dist, pred)
}

#[derive(Serialize, Deserialize)]
struct RoadmapFile {
    version: u32,
    seed: u64,
    clearance: f64,
    nodes: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
}

/// Polyline length.
pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}
