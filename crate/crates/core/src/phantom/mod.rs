//! The vascular phantom: occupancy grid, exact distance field, traversal
//! costmap and per-pose safety signals.

mod costmap;
mod edt;
mod generator;
mod grid;
pub mod pgm;
mod safety;

use thiserror::Error;

pub use costmap::{build_costmap, CostMap, CostParams};
pub use edt::{distance_transform, squared_edt, DistanceField, UNREACHABLE};
pub use generator::{generate_tree_phantom, Channel, Target, TreePhantom, TreeSpec};
pub use grid::{Cell, OccupancyGrid};
pub use pgm::load_grid;
pub use safety::{
    footprint_samples, rod_min_wall_dist, safety_snapshot, visible_fraction, Disk, SafetyParams,
    SafetySnapshot, NO_BRANCH_DIST_MM,
};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("resolution must be a positive number of mm per cell, got {0}")]
    InvalidResolution(f64),
    #[error("expected {expected} cells, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("infeasible phantom spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid costmap parameters: {0}")]
    InvalidParams(String),
    #[error("robot outside the grid")]
    OutOfBounds,
}
