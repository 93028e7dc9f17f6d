use serde::{Deserialize, Serialize};

use super::{Path, PlanError};
use crate::geometry::{cumulative_arc_length, point_at_arc_length, Vec2};
use crate::phantom::OccupancyGrid;

/// Tip waypoint sequences for the two arms of a rigid-rod robot.
///
/// The left arm drives the head, the right arm the tail. Index `k` of both
/// sequences is one pose of the rod: `‖head[k] − tail[k]‖ == rod_length`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualArmPlan {
    #[serde(rename = "head_waypoints")]
    pub head: Vec<Vec2>,
    #[serde(rename = "tail_waypoints")]
    pub tail: Vec<Vec2>,
    pub rod_length: f64,
    /// Arc-length spacing of head samples along the centerline (mm).
    pub step: f64,
    /// Centerline arc length of each head sample.
    pub head_arc: Vec<f64>,
    /// Centerline arc lengths of branch vertices.
    pub branch_arcs: Vec<f64>,
}

impl DualArmPlan {
    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }

    pub fn step_mm(&self) -> f64 {
        self.step
    }

    /// Index of the head sample closest to `p`; the earliest wins ties.
    pub fn nearest_head_index(&self, p: Vec2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, h) in self.head.iter().enumerate() {
            let d = (*h - p).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Largest `t ∈ [0, t_max]` with `‖a + t(b − a) − c‖ = r`, if any.
fn last_circle_crossing(a: Vec2, b: Vec2, c: Vec2, r: f64, t_max: f64) -> Option<f64> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    if qa == 0.0 {
        return ((f.norm() - r).abs() <= 1e-12).then_some(0.0);
    }
    let qb = 2.0 * f.dot(d);
    let qc = f.norm_squared() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut roots = [q / qa, if q != 0.0 { qc / q } else { -qb / (2.0 * qa) }];
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .rev()
        .find(|&t| (-1e-12..=t_max + 1e-12).contains(&t))
        .map(|t| t.clamp(0.0, t_max))
}

/// Largest arc length `s' ≤ s_hi` on the polyline whose point lies at chord
/// distance `r` from `c`.
fn solve_chord_backward(points: &[Vec2], arc: &[f64], s_hi: f64, c: Vec2, r: f64) -> Option<(f64, Vec2)> {
    if points.len() < 2 {
        return None;
    }
    let s_hi = s_hi.clamp(0.0, arc[arc.len() - 1]);
    let mut seg = crate::geometry::segment_index_at(arc, s_hi);
    loop {
        let (a, b) = (points[seg], points[seg + 1]);
        let len = arc[seg + 1] - arc[seg];
        let t_max = if len > 0.0 {
            ((s_hi - arc[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if let Some(t) = last_circle_crossing(a, b, c, r, t_max) {
            return Some((arc[seg] + t * len, a.lerp(b, t)));
        }
        if seg == 0 {
            return None;
        }
        seg -= 1;
    }
}

/// Smallest arc length at which the path point is at chord distance `r` from
/// the path start.
fn first_chord_forward(points: &[Vec2], arc: &[f64], r: f64) -> Option<f64> {
    let p0 = points[0];
    for seg in 0..points.len() - 1 {
        let (a, b) = (points[seg], points[seg + 1]);
        if b.distance(p0) < r {
            continue;
        }
        // entering the circle's exterior on this segment: smallest crossing
        let d = b - a;
        let f = a - p0;
        let qa = d.norm_squared();
        let qb = 2.0 * f.dot(d);
        let qc = f.norm_squared() - r * r;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let t = ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
        return Some(arc[seg] + t * (arc[seg + 1] - arc[seg]));
    }
    None
}

/// Sample head positions along `path` every `step` mm and place each tail on
/// the path at exact chord distance `rod_length` behind it.
///
/// The first head sample is the first point at chord distance `rod_length`
/// from the path start; the last is the path end.
pub fn derive_tip_waypoints(
    path: &Path,
    rod_length: f64,
    step: f64,
    grid: &OccupancyGrid,
) -> Result<DualArmPlan, PlanError> {
    if !(rod_length > 0.0 && rod_length.is_finite()) {
        return Err(PlanError::InvalidParams(format!("rod length must be positive, got {rod_length}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(PlanError::InvalidParams(format!("sample step must be positive, got {step}")));
    }
    let points = &path.waypoints;
    if points.len() < 2 {
        return Err(PlanError::PathTooShort {
            length: 0.0,
            rod_length,
        });
    }
    let arc = cumulative_arc_length(points);
    let total = arc[arc.len() - 1];
    let too_short = PlanError::PathTooShort {
        length: total,
        rod_length,
    };
    if total < rod_length {
        return Err(too_short);
    }
    let s0 = first_chord_forward(points, &arc, rod_length).ok_or(too_short)?;

    let mut samples = Vec::new();
    let mut k = 0usize;
    loop {
        let s = s0 + k as f64 * step;
        if s >= total - 1e-9 {
            break;
        }
        samples.push(s);
        k += 1;
    }
    samples.push(total);

    let mut plan = DualArmPlan {
        rod_length,
        step,
        ..Default::default()
    };
    for &s in &samples {
        let head = point_at_arc_length(points, &arc, s);
        let (_, tail) = solve_chord_backward(points, &arc, s - rod_length, head, rod_length)
            .ok_or(PlanError::ChordInfeasible { arc: s })?;
        for p in [head, tail] {
            if !grid.is_free_at(p) {
                return Err(PlanError::LeavesFreeSpace(p));
            }
        }
        plan.head.push(head);
        plan.tail.push(tail);
        plan.head_arc.push(s);
    }
    plan.branch_arcs = path
        .branch
        .iter()
        .zip(&arc)
        .filter(|(b, _)| **b)
        .map(|(_, s)| *s)
        .collect();
    Ok(plan)
}

/// True when every rod pose keeps the tips at least `min_sep` apart and the
/// two tip disks of radius `tip_radius` do not overlap.
pub fn check_arm_separation(plan: &DualArmPlan, min_sep: f64, tip_radius: f64) -> bool {
    plan.head.iter().zip(&plan.tail).all(|(h, t)| {
        let d = h.distance(*t);
        d >= min_sep && d >= 2.0 * tip_radius
    })
}
