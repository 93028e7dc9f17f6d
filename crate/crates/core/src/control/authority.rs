use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geometry::Vec2;
use crate::planner::ArmPair;

/// Upper bound on autonomous authority; the operator always keeps 10%.
pub const ALPHA_MAX: f64 = 0.9;

/// Per-arm authority, each in `[0, ALPHA_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuthorityPair {
    pub left: f64,
    pub right: f64,
}

impl AuthorityPair {
    pub fn new(left: f64, right: f64) -> Result<Self, ControlError> {
        for a in [left, right] {
            check_alpha(a)?;
        }
        Ok(Self { left, right })
    }

    pub fn splat(alpha: f64) -> Result<Self, ControlError> {
        Self::new(alpha, alpha)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.left, self.right]
    }
}

pub(crate) fn check_alpha(a: f64) -> Result<f64, ControlError> {
    if (0.0..=ALPHA_MAX).contains(&a) {
        Ok(a)
    } else {
        Err(ControlError::AlphaOutOfRange(a))
    }
}

fn between(v: f64, a: f64, b: f64) -> f64 {
    v.clamp(a.min(b), a.max(b))
}

fn blend_one(alpha: f64, robot: Vec2, human: Vec2) -> Vec2 {
    if alpha == 0.0 {
        return human;
    }
    let mix = robot * alpha + human * (1.0 - alpha);
    // rounding may land one ulp outside the inputs
    Vec2::new(between(mix.x, robot.x, human.x), between(mix.y, robot.y, human.y))
}

/// `u_i = α_i·u_robot,i + (1 − α_i)·u_human,i` for each arm.
pub fn blend_commands(alpha: AuthorityPair, u_robot: ArmPair, u_human: ArmPair) -> Result<ArmPair, ControlError> {
    check_alpha(alpha.left)?;
    check_alpha(alpha.right)?;
    Ok(ArmPair::new(
        blend_one(alpha.left, u_robot.left, u_human.left),
        blend_one(alpha.right, u_robot.right, u_human.right),
    ))
}

/// `0.9·σ(logit)`.
pub fn bound_alpha(logit: f64) -> f64 {
    let s = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    ALPHA_MAX * s
}
