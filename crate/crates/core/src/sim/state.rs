use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Vec2;
use crate::phantom::{DistanceField, OccupancyGrid};
use crate::planner::ArmPair;

/// The millirobot as a rigid rod.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub head: Vec2,
    pub tail: Vec2,
    pub rod_length: f64,
}

impl RobotState {
    /// Rod with the length implied by its endpoints.
    pub fn new(head: Vec2, tail: Vec2) -> Self {
        Self {
            head,
            tail,
            rod_length: head.distance(tail),
        }
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.head + self.tail) * 0.5
    }

    pub fn chord(&self) -> f64 {
        self.head.distance(self.tail)
    }
}

/// Manipulator tips, each confined to a square box around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorState {
    pub left: Vec2,
    pub right: Vec2,
    pub center: Vec2,
    pub half_range: f64,
}

impl ManipulatorState {
    pub fn new(left: Vec2, right: Vec2, center: Vec2, half_range: f64) -> Self {
        let mut s = Self {
            left,
            right,
            center,
            half_range,
        };
        s.left = s.clamp(left);
        s.right = s.clamp(right);
        s
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        let h = self.half_range;
        Vec2::new(
            p.x.clamp(self.center.x - h, self.center.x + h),
            p.y.clamp(self.center.y - h, self.center.y + h),
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (p.x - self.center.x).abs() <= self.half_range && (p.y - self.center.y).abs() <= self.half_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Rod length (mm).
    pub rod_length: f64,
    /// First-order lag of the robot behind the tips (s).
    pub tau_m: f64,
    /// Half side of the tip workspace box (mm).
    pub workspace_half_range: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            rod_length: 4.0,
            tau_m: 0.05,
            workspace_half_range: 10.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("rod_length", self.rod_length),
            ("tau_m", self.tau_m),
            ("workspace_half_range", self.workspace_half_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub robot: RobotState,
    pub tips: ManipulatorState,
    /// Endpoints that were stopped by a wall during this step.
    pub contacts: Vec<Endpoint>,
}

/// True when every point of segment `a`-`b`, sampled at half-cell spacing,
/// lies in a free cell.
pub fn segment_is_free(grid: &OccupancyGrid, a: Vec2, b: Vec2) -> bool {
    let step = grid.resolution() / 2.0;
    let n = (a.distance(b) / step).ceil() as usize;
    (0..=n).all(|i| {
        let t = if n == 0 { 1.0 } else { i as f64 / n as f64 };
        grid.is_free_at(a.lerp(b, t))
    })
}

fn project_rod(head: Vec2, tail: Vec2, fallback_dir: Vec2, length: f64) -> (Vec2, Vec2) {
    let mid = (head + tail) * 0.5;
    let dir = (head - tail).normalized().unwrap_or(fallback_dir);
    (mid + dir * (length / 2.0), mid - dir * (length / 2.0))
}

fn slide(field: &DistanceField, from: Vec2, to: Vec2) -> Vec2 {
    let disp = to - from;
    match field.wall_normal(from) {
        Some(n) => {
            let into = disp.dot(n);
            if into < 0.0 {
                from + (disp - n * into)
            } else {
                to
            }
        }
        None => from,
    }
}

/// Advance the tips and the rod by one tick.
///
/// Tips integrate `u` and stay in their box; head and tail relax toward the
/// left and right tips; the rod length is restored about the midpoint. An
/// endpoint whose motion would cross an occupied cell loses its into-wall
/// component and reports a contact. If no admissible pose is found the rod
/// stays where it was.
pub fn step(
    robot: &RobotState,
    tips: &ManipulatorState,
    u: ArmPair,
    dt: f64,
    grid: &OccupancyGrid,
    field: &DistanceField,
    params: &SimParams,
) -> Result<StepOutcome, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidDt(dt));
    }
    let u = if u.is_finite() { u } else { ArmPair::ZERO };
    let mut new_tips = *tips;
    new_tips.left = tips.clamp(tips.left + u.left * dt);
    new_tips.right = tips.clamp(tips.right + u.right * dt);

    let gain = 1.0 - (-dt / params.tau_m).exp();
    let head = robot.head + (new_tips.left - robot.head) * gain;
    let tail = robot.tail + (new_tips.right - robot.tail) * gain;
    let old_dir = (robot.head - robot.tail).normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let l = params.rod_length;
    let (h1, t1) = project_rod(head, tail, old_dir, l);

    let head_ok = segment_is_free(grid, robot.head, h1);
    let tail_ok = segment_is_free(grid, robot.tail, t1);
    let mut contacts = Vec::new();
    if !head_ok {
        contacts.push(Endpoint::Head);
    }
    if !tail_ok {
        contacts.push(Endpoint::Tail);
    }
    let admissible = |h: Vec2, t: Vec2| segment_is_free(grid, robot.head, h) && segment_is_free(grid, robot.tail, t);

    let next = if contacts.is_empty() {
        (h1, t1)
    } else {
        let hs = if head_ok { h1 } else { slide(field, robot.head, h1) };
        let ts = if tail_ok { t1 } else { slide(field, robot.tail, t1) };
        let mut chosen = None;
        for f in [1.0, 0.5, 0.25, 0.125] {
            let (h, t) = project_rod(robot.head.lerp(hs, f), robot.tail.lerp(ts, f), old_dir, l);
            if admissible(h, t) {
                chosen = Some((h, t));
                break;
            }
        }
        chosen.unwrap_or((robot.head, robot.tail))
    };

    Ok(StepOutcome {
        robot: RobotState {
            head: next.0,
            tail: next.1,
            rod_length: l,
        },
        tips: new_tips,
        contacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::distance_transform;

    fn channel() -> (OccupancyGrid, DistanceField) {
        // 40 x 8 mm channel, 4 mm wide, at 0.2 mm cells
        let (w, h) = (200, 40);
        let mut g = OccupancyGrid::open(w, h, 0.2).unwrap();
        for y in 0..h {
            for x in 0..w {
                let cy = (y as f64 + 0.5) * 0.2;
                if (cy - 4.0).abs() > 2.0 {
                    g.set_occupied((x, y), true);
                }
            }
        }
        let f = distance_transform(&g);
        (g, f)
    }

    fn at_rest() -> (RobotState, ManipulatorState) {
        let r = RobotState::new(Vec2::new(14.0, 4.0), Vec2::new(10.0, 4.0));
        let tips = ManipulatorState::new(r.head, r.tail, Vec2::new(20.0, 4.0), 10.0);
        (r, tips)
    }

    #[test]
    fn rest_is_fixed_point() {
        let (g, f) = channel();
        let (r, tips) = at_rest();
        let out = step(&r, &tips, ArmPair::ZERO, 1.0 / 30.0, &g, &f, &SimParams::default()).unwrap();
        assert!((out.robot.head - r.head).norm() < 1e-12);
        assert!((out.robot.tail - r.tail).norm() < 1e-12);
        assert!(out.contacts.is_empty());
    }

    #[test]
    fn converges_to_tips_with_large_dt() {
        let (g, f) = channel();
        let (r, mut tips) = at_rest();
        tips.left = Vec2::new(16.0, 4.0);
        tips.right = Vec2::new(11.0, 4.0);
        let out = step(&r, &tips, ArmPair::ZERO, 10.0, &g, &f, &SimParams::default()).unwrap();
        assert!((out.robot.chord() - 4.0).abs() < 1e-9);
        assert!((out.robot.midpoint() - Vec2::new(13.5, 4.0)).norm() < 1e-9);
    }

    #[test]
    fn long_run_keeps_rod_length() {
        let (g, f) = channel();
        let (mut r, mut tips) = at_rest();
        let u = ArmPair::new(Vec2::new(1.0, 0.3), Vec2::new(1.0, -0.2));
        for _ in 0..1000 {
            let out = step(&r, &tips, u, 1.0 / 30.0, &g, &f, &SimParams::default()).unwrap();
            r = out.robot;
            tips = out.tips;
            assert!((r.chord() - 4.0).abs() <= 1e-6);
            assert!(g.is_free_at(r.head) && g.is_free_at(r.tail));
            assert!(tips.contains(tips.left) && tips.contains(tips.right));
        }
    }

    #[test]
    fn wall_contact_slides() {
        let (g, f) = channel();
        let (r, tips) = at_rest();
        // drive the head into the upper wall
        let u = ArmPair::new(Vec2::new(3.0, 6.0), Vec2::new(3.0, 0.0));
        let mut state = (r, tips);
        let mut contacts = 0;
        for _ in 0..90 {
            let out = step(&state.0, &state.1, u, 1.0 / 30.0, &g, &f, &SimParams::default()).unwrap();
            contacts += out.contacts.len();
            state = (out.robot, out.tips);
            assert!(g.is_free_at(state.0.head));
        }
        assert!(contacts > 0);
        // slid along +x rather than stopping dead
        assert!(state.0.head.x > 15.0, "{:?}", state.0.head);
    }

    #[test]
    fn rejects_bad_dt() {
        let (g, f) = channel();
        let (r, tips) = at_rest();
        for dt in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                step(&r, &tips, ArmPair::ZERO, dt, &g, &f, &SimParams::default()),
                Err(SimError::InvalidDt(_))
            ));
        }
    }
}
