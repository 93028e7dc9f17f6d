use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Vec2;
use crate::planner::{ArmPair, DualArmPlan, FollowParams, PathFollower};

/// One tick of operator command: velocities per arm and grip forces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorInput {
    pub v_left: Vec2,
    pub v_right: Vec2,
    pub fsr_left: f64,
    pub fsr_right: f64,
}

impl OperatorInput {
    pub fn velocities(&self) -> ArmPair {
        ArmPair::new(self.v_left, self.v_right)
    }

    pub fn is_finite(&self) -> bool {
        self.v_left.is_finite() && self.v_right.is_finite() && self.fsr_left.is_finite() && self.fsr_right.is_finite()
    }
}

/// How hard the synthetic operator grips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GripProfile {
    /// Resting grip throughout.
    Relaxed,
    /// Override grip once the goal is closer than `radius_mm`.
    OverrideNearTarget { radius_mm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorModel {
    /// Per-axis standard deviation of the velocity noise (mm/s).
    pub noise_std: f64,
    /// Correlation time of the noise (s); 0 gives white noise.
    pub noise_corr_s: f64,
    /// Ticks between perceiving the scene and acting on it.
    pub reaction_delay: usize,
    /// Speed limit of the operator command per arm (mm/s).
    pub max_speed: f64,
    /// The operator's own path tracking.
    pub follow: FollowParams,
    pub grip: GripProfile,
    pub f_baseline: f64,
    pub f_override: f64,
}

impl Default for OperatorModel {
    fn default() -> Self {
        Self {
            noise_std: 2.0,
            noise_corr_s: 0.0,
            reaction_delay: 0,
            max_speed: 5.5,
            follow: FollowParams::default(),
            grip: GripProfile::Relaxed,
            f_baseline: 0.5,
            f_override: 5.0,
        }
    }
}

impl OperatorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SimError::InvalidParams("operator noise_std must be non-negative".into()));
        }
        if !(self.noise_corr_s >= 0.0 && self.noise_corr_s.is_finite()) {
            return Err(SimError::InvalidParams("operator noise_corr_s must be non-negative".into()));
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(SimError::InvalidParams("operator max_speed must be positive".into()));
        }
        if !(self.f_override > self.f_baseline) {
            return Err(SimError::InvalidParams("operator override grip must exceed baseline".into()));
        }
        Ok(())
    }
}

/// Seeded synthetic operator following the plan with delay and noise.
#[derive(Debug, Clone)]
pub struct SyntheticOperator {
    model: OperatorModel,
    dt: f64,
    rng: ChaCha8Rng,
    follower: PathFollower,
    pending: VecDeque<ArmPair>,
    noise: Option<[Vec2; 2]>,
}

impl SyntheticOperator {
    pub fn new(model: OperatorModel, dt: f64, seed: u64) -> Self {
        Self {
            model,
            dt,
            rng: ChaCha8Rng::seed_from_u64(seed),
            follower: PathFollower::new(),
            pending: VecDeque::with_capacity(model.reaction_delay + 1),
            noise: None,
        }
    }

    pub fn model(&self) -> &OperatorModel {
        &self.model
    }

    fn gaussian(&mut self) -> Vec2 {
        let x: f64 = StandardNormal.sample(&mut self.rng);
        let y: f64 = StandardNormal.sample(&mut self.rng);
        Vec2::new(x, y)
    }

    fn next_noise(&mut self) -> [Vec2; 2] {
        let s = self.model.noise_std;
        let fresh = [self.gaussian() * s, self.gaussian() * s];
        let n = match self.noise {
            Some(prev) if self.model.noise_corr_s > 0.0 => {
                let rho = (-self.dt / self.model.noise_corr_s).exp();
                let k = (1.0 - rho * rho).sqrt();
                [prev[0] * rho + fresh[0] * k, prev[1] * rho + fresh[1] * k]
            }
            _ => fresh,
        };
        self.noise = Some(n);
        n
    }

    /// Command for the current tick given the tip positions.
    pub fn input(&mut self, plan: &DualArmPlan, left_tip: Vec2, right_tip: Vec2, goal_dist: f64) -> OperatorInput {
        let seen = self.follower.command(plan, left_tip, right_tip, &self.model.follow);
        self.pending.push_back(seen);
        let acted = if self.pending.len() > self.model.reaction_delay {
            self.pending.pop_front().expect("non-empty")
        } else {
            ArmPair::ZERO
        };
        let noise = self.next_noise();
        let v = |base: Vec2, n: Vec2| {
            let out = if self.model.noise_std > 0.0 { base + n } else { base };
            out.clamp_norm(self.model.max_speed)
        };
        let grip = match self.model.grip {
            GripProfile::OverrideNearTarget { radius_mm } if goal_dist < radius_mm => self.model.f_override,
            _ => self.model.f_baseline,
        };
        OperatorInput {
            v_left: v(acted.left, noise[0]),
            v_right: v(acted.right, noise[1]),
            fsr_left: grip,
            fsr_right: grip,
        }
    }
}
