//! Centerline planning on the costmap and rigid-rod tip waypoints.

mod astar;
mod branch;
mod follow;
mod rod;

use thiserror::Error;

use crate::geometry::Vec2;

pub use astar::{edge_cost_units, path_cost_units, plan_centerline, Path, COST_UNITS_PER_MM};
pub use branch::{flag_branch_vertices, medial_degree};
pub use follow::{path_follow_command, ArmPair, FollowParams, PathFollower};
pub use rod::{check_arm_separation, derive_tip_waypoints, DualArmPlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("endpoint {0:?} is not on a free cell")]
    BlockedEndpoint(Vec2),
    #[error("no path between start and goal")]
    NoPath,
    #[error("path of {length} mm is shorter than the {rod_length} mm rod")]
    PathTooShort { length: f64, rod_length: f64 },
    #[error("no path point at rod chord distance behind arc length {arc} mm")]
    ChordInfeasible { arc: f64 },
    #[error("tip waypoint {0:?} lies outside free space")]
    LeavesFreeSpace(Vec2),
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
}
