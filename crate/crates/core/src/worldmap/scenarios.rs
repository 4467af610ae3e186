//! Built-in maps used by the experiments and tests.

use super::{Occupancy, OccupancyGrid, DEFAULT_RESOLUTION};
use crate::geometry::{Point2, Pose2};

/// Side length of the cross-intersection map, metres.
pub const CROSS_SIZE: f64 = 16.0;
/// Corridor width of the cross-intersection map, metres.
pub const CROSS_CORRIDOR: f64 = 3.0;

/// Two 3 m corridors crossing at the centre of a 16 × 16 m square.
pub fn cross_intersection() -> OccupancyGrid {
    let n = (CROSS_SIZE / DEFAULT_RESOLUTION).round() as usize;
    let mut g = OccupancyGrid::new(
        n,
        n,
        DEFAULT_RESOLUTION,
        Pose2::new(0.0, 0.0, 0.0),
        vec![Occupancy::Occupied; n * n],
    )
    .expect("static dimensions");
    let lo = 0.5 * (CROSS_SIZE - CROSS_CORRIDOR);
    let hi = lo + CROSS_CORRIDOR;
    g.fill_rect(
        Point2::new(0.0, lo),
        Point2::new(CROSS_SIZE, hi),
        Occupancy::Free,
    );
    g.fill_rect(
        Point2::new(lo, 0.0),
        Point2::new(hi, CROSS_SIZE),
        Occupancy::Free,
    );
    g
}

/// Obstacle-free room.
pub fn empty_room(width: f64, height: f64) -> OccupancyGrid {
    OccupancyGrid::empty(width, height, DEFAULT_RESOLUTION).expect("positive resolution")
}

/// Two 5 × 5 m rooms joined by a 2 m long, 1.2 m wide corridor.
pub fn two_rooms() -> OccupancyGrid {
    let mut g = OccupancyGrid::empty(12.0, 5.0, DEFAULT_RESOLUTION).expect("positive resolution");
    g.fill_rect(
        Point2::new(5.0, 0.0),
        Point2::new(7.0, 5.0),
        Occupancy::Occupied,
    );
    g.fill_rect(
        Point2::new(5.0, 1.9),
        Point2::new(7.0, 3.1),
        Occupancy::Free,
    );
    g
}
