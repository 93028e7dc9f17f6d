use serde::{Deserialize, Serialize};

use super::edt::DistanceField;
use super::PhantomError;
use crate::geometry::{circumscribed_curvature, Vec2};
use crate::planner::DualArmPlan;
use crate::sim::RobotState;

/// Reported bifurcation distance when the plan has no branch vertex.
pub const NO_BRANCH_DIST_MM: f64 = 1.0e3;

/// Per-tick risk signals around the millirobot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetySnapshot {
    /// Smallest wall distance along the rod (mm).
    pub min_wall_dist: f64,
    /// Visible fraction of the robot footprint, in `[0, 1]`.
    pub occlusion_iou: f64,
    /// Curvature of the planned path near the robot (1/mm).
    pub curvature: f64,
    /// Arc length to the nearest branch vertex of the plan (mm).
    pub bifurcation_dist: f64,
}

impl Default for SafetySnapshot {
    fn default() -> Self {
        Self {
            min_wall_dist: 0.0,
            occlusion_iou: 1.0,
            curvature: 0.0,
            bifurcation_dist: NO_BRANCH_DIST_MM,
        }
    }
}

/// Disk that hides part of the robot from the camera (a manipulator tip).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyParams {
    /// Half-width of the robot footprint capsule (mm).
    pub body_radius_mm: f64,
    /// Chord spacing of the three curvature sample points (mm).
    pub curvature_span_mm: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            body_radius_mm: 0.5,
            curvature_span_mm: 1.0,
        }
    }
}

const FOOTPRINT_ALONG: usize = 32;
const FOOTPRINT_ACROSS: usize = 8;

/// Deterministic sample points covering the robot's capsule footprint.
pub fn footprint_samples(robot: &RobotState, body_radius: f64) -> Vec<Vec2> {
    let axis = robot.head - robot.tail;
    let len = axis.norm();
    let dir = axis.normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let normal = dir.perp();
    let mid = (robot.head + robot.tail) * 0.5;
    let half_extent = len / 2.0 + body_radius;
    let mut out = Vec::with_capacity(FOOTPRINT_ALONG * FOOTPRINT_ACROSS);
    for i in 0..FOOTPRINT_ALONG {
        let u = -half_extent + (i as f64 + 0.5) * (2.0 * half_extent / FOOTPRINT_ALONG as f64);
        for j in 0..FOOTPRINT_ACROSS {
            let v = -body_radius + (j as f64 + 0.5) * (2.0 * body_radius / FOOTPRINT_ACROSS as f64);
            // inside the capsule: distance to the axis segment within body radius
            let along = u.clamp(-len / 2.0, len / 2.0);
            if (u - along).hypot(v) <= body_radius {
                out.push(mid + dir * u + normal * v);
            }
        }
    }
    out
}

/// Fraction of footprint samples not covered by any occluder.
pub fn visible_fraction(samples: &[Vec2], occluders: &[Disk]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let visible = samples
        .iter()
        .filter(|s| {
            !occluders
                .iter()
                .any(|d| s.distance(d.center) <= d.radius)
        })
        .count();
    visible as f64 / samples.len() as f64
}

/// Minimum interpolated wall distance over points spaced at most one cell
/// apart along the rod (head and tail included).
pub fn rod_min_wall_dist(field: &DistanceField, robot: &RobotState) -> f64 {
    let len = robot.head.distance(robot.tail);
    let n = (len / field.resolution()).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| field.sample(robot.tail.lerp(robot.head, i as f64 / n as f64)))
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Compute the safety snapshot for the current robot pose.
pub fn safety_snapshot(
    field: &DistanceField,
    robot: &RobotState,
    plan: &DualArmPlan,
    occluders: &[Disk],
    params: &SafetyParams,
) -> Result<SafetySnapshot, PhantomError> {
    let extent = Vec2::new(
        field.width() as f64 * field.resolution(),
        field.height() as f64 * field.resolution(),
    );
    let inside = |p: Vec2| p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x < extent.x && p.y < extent.y;
    if !inside(robot.head) || !inside(robot.tail) {
        return Err(PhantomError::OutOfBounds);
    }

    let min_wall_dist = rod_min_wall_dist(field, robot);
    let occlusion_iou = visible_fraction(&footprint_samples(robot, params.body_radius_mm), occluders);

    let (curvature, bifurcation_dist) = if plan.is_empty() {
        (0.0, NO_BRANCH_DIST_MM)
    } else {
        let k = plan.nearest_head_index(robot.head);
        let step = (params.curvature_span_mm / plan.step_mm()).round().max(1.0) as usize;
        let last = plan.len() - 1;
        let (a, c) = (k.saturating_sub(step), (k + step).min(last));
        let curvature = if a < k && k < c {
            circumscribed_curvature(plan.head[a], plan.head[k], plan.head[c])
        } else {
            0.0
        };
        let s = plan.head_arc[k];
        let bif = plan
            .branch_arcs
            .iter()
            .map(|b| (b - s).abs())
            .fold(NO_BRANCH_DIST_MM, f64::min);
        (curvature, bif)
    };

    Ok(SafetySnapshot {
        min_wall_dist,
        occlusion_iou,
        curvature,
        bifurcation_dist,
    })
}
