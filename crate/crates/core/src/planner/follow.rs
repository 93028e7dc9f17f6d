use serde::{Deserialize, Serialize};

use super::DualArmPlan;
use crate::geometry::Vec2;

/// Velocity command for both arms (mm/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmPair {
    pub left: Vec2,
    pub right: Vec2,
}

impl ArmPair {
    pub const ZERO: ArmPair = ArmPair {
        left: Vec2::ZERO,
        right: Vec2::ZERO,
    };

    pub fn new(left: Vec2, right: Vec2) -> Self {
        Self { left, right }
    }

    pub fn map(self, f: impl Fn(Vec2) -> Vec2) -> Self {
        Self::new(f(self.left), f(self.right))
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowParams {
    /// Proportional gain (1/s).
    pub gain: f64,
    /// Speed limit per arm (mm/s).
    pub v_max: f64,
    /// How far ahead of the nearest sample the target sits (mm).
    pub lookahead_mm: f64,
    /// Forward search range for the progress cursor (mm).
    pub search_mm: f64,
}

impl Default for FollowParams {
    fn default() -> Self {
        Self {
            gain: 3.0,
            v_max: 4.0,
            lookahead_mm: 1.5,
            search_mm: 3.0,
        }
    }
}

/// Monotone progress cursors of both arms along a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathFollower {
    pub left_cursor: usize,
    pub right_cursor: usize,
}

fn advance(points: &[Vec2], cursor: usize, p: Vec2, window: usize) -> usize {
    let end = (cursor + window).min(points.len() - 1);
    let mut best = (f64::INFINITY, cursor);
    for (i, q) in points.iter().enumerate().take(end + 1).skip(cursor) {
        let d = (*q - p).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn steer(target: Vec2, tip: Vec2, gain: f64, v_max: f64) -> Vec2 {
    ((target - tip) * gain).clamp_norm(v_max)
}

impl PathFollower {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advance the cursors to the nearest samples ahead of the tips and
    /// return the proportional command toward the lookahead targets.
    pub fn command(&mut self, plan: &DualArmPlan, left_tip: Vec2, right_tip: Vec2, params: &FollowParams) -> ArmPair {
        if plan.is_empty() {
            return ArmPair::ZERO;
        }
        let step = plan.step_mm().max(f64::MIN_POSITIVE);
        let window = (params.search_mm / step).ceil() as usize;
        let ahead = (params.lookahead_mm / step).round() as usize;
        let last = plan.len() - 1;
        self.left_cursor = advance(&plan.head, self.left_cursor.min(last), left_tip, window);
        self.right_cursor = advance(&plan.tail, self.right_cursor.min(last), right_tip, window);
        let lt = plan.head[(self.left_cursor + ahead).min(last)];
        let rt = plan.tail[(self.right_cursor + ahead).min(last)];
        ArmPair::new(
            steer(lt, left_tip, params.gain, params.v_max),
            steer(rt, right_tip, params.gain, params.v_max),
        )
    }
}

/// One follower step from fresh cursors; see [`PathFollower::command`].
pub fn path_follow_command(plan: &DualArmPlan, left_tip: Vec2, right_tip: Vec2, params: &FollowParams) -> ArmPair {
    PathFollower::new().command(plan, left_tip, right_tip, params)
}
