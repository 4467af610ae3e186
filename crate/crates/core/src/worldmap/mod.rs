//! Static environment: occupancy grid, collision queries and the square
//! behaviour-cell grid.

mod io;
pub mod scenarios;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sample_path, ClothoidPath, Point2, Pose2};

pub use io::{load_map, load_map_files, save_map, MapMeta};

/// Robot clearance used for planning unless configured otherwise.
pub const DEFAULT_CLEARANCE: f64 = 0.3;
/// Default occupancy resolution, metres per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("cell data has {got} entries, expected {width}x{height}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("cannot read map image {path}: {message}")]
    Image { path: String, message: String },
    #[error("map metadata: {0}")]
    Meta(String),
    #[error("point ({x:.3}, {y:.3}) is outside the behaviour grid")]
    OutOfExtent { x: f64, y: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Occupied,
    Unknown,
}

/// Row-major occupancy raster; row 0 is the bottom row (world +y is up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2,
        cells: Vec<Occupancy>,
    ) -> Result<Self, MapError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::BadResolution(resolution));
        }
        if width * height != cells.len() {
            return Err(MapError::DimensionMismatch {
                width,
                height,
                got: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    /// All-free grid covering `[0, w] × [0, h]` metres.
    pub fn empty(width_m: f64, height_m: f64, resolution: f64) -> Result<Self, MapError> {
        let w = (width_m / resolution).round() as usize;
        let h = (height_m / resolution).round() as usize;
        Self::new(
            w,
            h,
            resolution,
            Pose2::new(0.0, 0.0, 0.0),
            vec![Occupancy::Free; w * h],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2 {
        self.origin
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn get(&self, col: usize, row: usize) -> Option<Occupancy> {
        (col < self.width && row < self.height).then(|| self.cells[row * self.width + col])
    }

    pub fn set(&mut self, col: usize, row: usize, value: Occupancy) {
        if col < self.width && row < self.height {
            self.cells[row * self.width + col] = value;
        }
    }

    /// Marks every cell whose centre lies in the axis-aligned world rectangle.
    pub fn fill_rect(&mut self, min: Point2, max: Point2, value: Occupancy) {
        for row in 0..self.height {
            for col in 0..self.width {
                let c = self.cell_center(col, row);
                if c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y {
                    self.cells[row * self.width + col] = value;
                }
            }
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        let local = Pose2::new(
            (col as f64 + 0.5) * self.resolution,
            (row as f64 + 0.5) * self.resolution,
            0.0,
        );
        self.origin.compose(&local).position()
    }

    fn to_local(&self, p: Point2) -> Point2 {
        self.origin
            .inverse()
            .compose(&Pose2::new(p.x, p.y, 0.0))
            .position()
    }

    /// Free area in square metres (unknown counts as blocked).
    pub fn free_area(&self) -> f64 {
        let n = self.cells.iter().filter(|c| **c == Occupancy::Free).count();
        n as f64 * self.resolution * self.resolution
    }

    /// World-frame bounding box of the raster.
    pub fn bounds(&self) -> (Point2, Point2) {
        let w = self.width as f64 * self.resolution;
        let h = self.height as f64 * self.resolution;
        let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .map(|(x, y)| self.origin.compose(&Pose2::new(x, y, 0.0)).position());
        let min = Point2::new(
            corners.iter().map(|c| c.x).fold(f64::INFINITY, f64::min),
            corners.iter().map(|c| c.y).fold(f64::INFINITY, f64::min),
        );
        let max = Point2::new(
            corners
                .iter()
                .map(|c| c.x)
                .fold(f64::NEG_INFINITY, f64::max),
            corners
                .iter()
                .map(|c| c.y)
                .fold(f64::NEG_INFINITY, f64::max),
        );
        (min, max)
    }

    /// True iff every cell meeting the closed disc of radius `clearance`
    /// around `p` exists and is free.
    pub fn is_free(&self, p: Point2, clearance: f64) -> bool {
        if !p.x.is_finite() || !p.y.is_finite() {
            return false;
        }
        let clearance = clearance.max(0.0);
        let q = self.to_local(p);
        let res = self.resolution;
        let (w, h) = (self.width as f64 * res, self.height as f64 * res);
        if q.x - clearance < 0.0
            || q.y - clearance < 0.0
            || q.x + clearance > w
            || q.y + clearance > h
        {
            return false;
        }
        let c0 = ((q.x - clearance) / res).floor().max(0.0) as usize;
        let c1 = (((q.x + clearance) / res).floor() as usize).min(self.width - 1);
        let r0 = ((q.y - clearance) / res).floor().max(0.0) as usize;
        let r1 = (((q.y + clearance) / res).floor() as usize).min(self.height - 1);
        let r2 = clearance * clearance;
        for row in r0..=r1 {
            let y0 = row as f64 * res;
            let dy = if q.y < y0 {
                y0 - q.y
            } else if q.y > y0 + res {
                q.y - y0 - res
            } else {
                0.0
            };
            for col in c0..=c1 {
                let x0 = col as f64 * res;
                let dx = if q.x < x0 {
                    x0 - q.x
                } else if q.x > x0 + res {
                    q.x - x0 - res
                } else {
                    0.0
                };
                if dx * dx + dy * dy <= r2 && self.cells[row * self.width + col] != Occupancy::Free
                {
                    return false;
                }
            }
        }
        true
    }

    /// Straight segment check at half-cell spacing.
    pub fn segment_is_free(&self, a: Point2, b: Point2, clearance: f64) -> bool {
        let step = 0.5 * self.resolution;
        let n = (a.distance(&b) / step).ceil().max(1.0) as usize;
        (0..=n).all(|k| self.is_free(a.lerp(&b, k as f64 / n as f64), clearance))
    }

    /// `is_free` at every arc-length sample; `step` is capped at the resolution.
    pub fn path_is_free(&self, path: &ClothoidPath, clearance: f64, step: f64) -> bool {
        let step = if step > 0.0 {
            step.min(self.resolution)
        } else {
            self.resolution
        };
        match sample_path(path, step) {
            Ok(samples) => samples
                .iter()
                .all(|s| self.is_free(Point2::new(s.x, s.y), clearance)),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: usize,
    pub iy: usize,
}

impl CellIndex {
    pub const fn new(ix: usize, iy: usize) -> Self {
        Self { ix, iy }
    }
}

/// Square behaviour cells (1 m by default) laid over the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviourGrid {
    pub cell_size: f64,
    pub origin: Point2,
    pub nx: usize,
    pub ny: usize,
}

impl BehaviourGrid {
    pub const CELL_SIZE: f64 = 1.0;

    /// Unit cells covering the occupancy grid's bounding box.
    pub fn covering(grid: &OccupancyGrid) -> Self {
        let (min, max) = grid.bounds();
        let nx = ((max.x - min.x) / Self::CELL_SIZE).ceil().max(1.0) as usize;
        let ny = ((max.y - min.y) / Self::CELL_SIZE).ceil().max(1.0) as usize;
        Self {
            cell_size: Self::CELL_SIZE,
            origin: min,
            nx,
            ny,
        }
    }

    /// `floor((p - origin) / cell_size)`; points on a shared edge go to the
    /// upper/right cell.
    pub fn cell_of(&self, p: Point2) -> Result<CellIndex, MapError> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if !(fx >= 0.0 && fy >= 0.0 && fx < self.nx as f64 && fy < self.ny as f64) {
            return Err(MapError::OutOfExtent { x: p.x, y: p.y });
        }
        Ok(CellIndex::new(fx as usize, fy as usize))
    }

    pub fn cell_center(&self, c: CellIndex) -> Point2 {
        Point2::new(
            self.origin.x + (c.ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (c.iy as f64 + 0.5) * self.cell_size,
        )
    }
}
