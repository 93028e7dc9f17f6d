use serde::{Deserialize, Serialize};

use super::external::{ExternalParams, ExternalPolicy};
use super::{bound_alpha, AuthorityChunk, AuthorityPair, ControlError, IntentSignal};
use crate::phantom::SafetySnapshot;

pub const FIXED_ALPHA: f64 = 0.5;
pub const DISCRETE_ALPHA: f64 = 0.7;
pub const DISCRETE_SWITCH_MM: f64 = 5.0;

/// Everything a policy sees at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub tick: u64,
    pub safety: SafetySnapshot,
    /// Left hand, right hand.
    pub intent: [IntentSignal; 2],
    /// Head-to-goal distance (mm).
    pub goal_dist: f64,
}

/// Source of authority chunks for one trial.
pub trait AuthorityPolicy: Send {
    fn name(&self) -> &'static str;

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk;

    /// Warnings raised since the last call (e.g. adapter fallbacks).
    fn take_warnings(&mut self) -> Vec<String> {
        Vec::new()
    }
}

fn constant(alpha: f64, len: usize, tick: u64) -> AuthorityChunk {
    AuthorityChunk::constant(AuthorityPair { left: alpha, right: alpha }, len, tick)
        .expect("policy constants are in range")
}

/// Chunk of the constant shared-control level.
pub fn policy_fixed(len: usize, tick: u64) -> AuthorityChunk {
    constant(FIXED_ALPHA, len, tick)
}

/// 0.7 until the goal is strictly closer than 5 mm, then manual.
pub fn policy_discrete(goal_dist: f64, len: usize, tick: u64) -> AuthorityChunk {
    let alpha = if goal_dist < DISCRETE_SWITCH_MM { 0.0 } else { DISCRETE_ALPHA };
    constant(alpha, len, tick)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextParams {
    pub bias: f64,
    pub w_wall: f64,
    /// Decay scale of the wall-proximity term (mm).
    pub wall_scale_mm: f64,
    pub w_curvature: f64,
    /// Curvature is normalized as `min(κ·scale, 1)`.
    pub curvature_scale_mm: f64,
    pub w_bifurcation: f64,
    pub bifurcation_scale_mm: f64,
    pub w_occlusion: f64,
}

impl Default for ContextParams {
    fn default() -> Self {
        Self {
            bias: -1.0,
            w_wall: 4.0,
            wall_scale_mm: 1.5,
            w_curvature: 1.0,
            curvature_scale_mm: 2.0,
            w_bifurcation: 1.0,
            bifurcation_scale_mm: 1.5,
            w_occlusion: 2.0,
        }
    }
}

impl ContextParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let all = [
            self.bias,
            self.w_wall,
            self.wall_scale_mm,
            self.w_curvature,
            self.curvature_scale_mm,
            self.w_bifurcation,
            self.bifurcation_scale_mm,
            self.w_occlusion,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::InvalidParams("context weights must be finite".into()));
        }
        if self.wall_scale_mm <= 0.0 || self.bifurcation_scale_mm <= 0.0 || self.curvature_scale_mm < 0.0 {
            return Err(ControlError::InvalidParams("context scales must be positive".into()));
        }
        Ok(())
    }

    /// Context logit before the intent override.
    pub fn logit(&self, s: &SafetySnapshot) -> f64 {
        let g = |x: f64, scale: f64| (-x.max(0.0) / scale).exp();
        let curvature = (s.curvature.abs() * self.curvature_scale_mm).min(1.0);
        let occluded = 1.0 - s.occlusion_iou.clamp(0.0, 1.0);
        self.bias
            + self.w_wall * g(s.min_wall_dist, self.wall_scale_mm)
            + self.w_curvature * curvature
            + self.w_bifurcation * g(s.bifurcation_dist, self.bifurcation_scale_mm)
            + self.w_occlusion * occluded
    }
}

/// Context heuristic: bounded logit of the safety signals, scaled per arm by
/// `1 − Ī`. The chunk is constant over its horizon.
pub fn policy_context(params: &ContextParams, input: &PolicyInput, len: usize) -> AuthorityChunk {
    let base = bound_alpha(params.logit(&input.safety));
    let arm = |i: &IntentSignal| (base * (1.0 - i.smoothed.clamp(0.0, 1.0))).clamp(0.0, super::ALPHA_MAX);
    let pair = AuthorityPair {
        left: arm(&input.intent[0]),
        right: arm(&input.intent[1]),
    };
    AuthorityChunk::constant(pair, len, input.tick).expect("bounded by construction")
}

/// Operator has full authority.
#[derive(Debug, Clone)]
pub struct ManualPolicy {
    pub chunk_size: usize,
}

impl AuthorityPolicy for ManualPolicy {
    fn name(&self) -> &'static str {
        "manual"
    }

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk {
        constant(0.0, self.chunk_size, input.tick)
    }
}

#[derive(Debug, Clone)]
pub struct FixedPolicy {
    pub chunk_size: usize,
}

impl AuthorityPolicy for FixedPolicy {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk {
        policy_fixed(self.chunk_size, input.tick)
    }
}

#[derive(Debug, Clone)]
pub struct DiscretePolicy {
    pub chunk_size: usize,
}

impl AuthorityPolicy for DiscretePolicy {
    fn name(&self) -> &'static str {
        "discrete"
    }

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk {
        policy_discrete(input.goal_dist, self.chunk_size, input.tick)
    }
}

#[derive(Debug, Clone)]
pub struct ContextPolicy {
    pub params: ContextParams,
    pub chunk_size: usize,
}

impl AuthorityPolicy for ContextPolicy {
    fn name(&self) -> &'static str {
        "context"
    }

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk {
        policy_context(&self.params, input, self.chunk_size)
    }
}

/// Policy selection as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Manual,
    Fixed,
    Discrete,
    Context(ContextParams),
    External(ExternalParams),
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Manual => "manual",
            PolicySpec::Fixed => "fixed",
            PolicySpec::Discrete => "discrete",
            PolicySpec::Context(_) => "context",
            PolicySpec::External(_) => "external",
        }
    }

    /// Spec for a policy name with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "manual" => PolicySpec::Manual,
            "fixed" => PolicySpec::Fixed,
            "discrete" => PolicySpec::Discrete,
            "context" => PolicySpec::Context(ContextParams::default()),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        match self {
            PolicySpec::Context(params) => params.validate(),
            PolicySpec::External(params) => params.validate(),
            _ => Ok(()),
        }
    }
}

pub fn build_policy(spec: &PolicySpec, chunk_size: usize) -> Result<Box<dyn AuthorityPolicy>, ControlError> {
    if chunk_size == 0 {
        return Err(ControlError::InvalidParams("chunk size must be at least 1".into()));
    }
    spec.validate()?;
    Ok(match spec {
        PolicySpec::Manual => Box::new(ManualPolicy { chunk_size }),
        PolicySpec::Fixed => Box::new(FixedPolicy { chunk_size }),
        PolicySpec::Discrete => Box::new(DiscretePolicy { chunk_size }),
        PolicySpec::Context(params) => Box::new(ContextPolicy {
            params: *params,
            chunk_size,
        }),
        PolicySpec::External(params) => Box::new(ExternalPolicy::new(params.clone(), chunk_size)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{aggregate_chunks, exponential_weights, ChunkBuffer};

    fn input(safety: SafetySnapshot, smoothed: f64) -> PolicyInput {
        let i = IntentSignal {
            smoothed,
            ..Default::default()
        };
        PolicyInput {
            tick: 7,
            safety,
            intent: [i, i],
            goal_dist: 10.0,
        }
    }

    #[test]
    fn fixed_aggregates_to_half() {
        let w = exponential_weights(5, 1.0).unwrap();
        let mut b = ChunkBuffer::new(5).unwrap();
        for t in 0..8 {
            let c = policy_fixed(5, t);
            assert!(c.values.iter().all(|v| *v == [0.5, 0.5]));
            b.push(c).unwrap();
            let a = aggregate_chunks(&b, &w).unwrap();
            assert!((a.left - 0.5).abs() < 1e-15 && (a.right - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_threshold() {
        assert_eq!(policy_discrete(6.0, 3, 0).values[0], [0.7, 0.7]);
        assert_eq!(policy_discrete(4.9, 3, 0).values[0], [0.0, 0.0]);
        assert_eq!(policy_discrete(5.0, 3, 0).values[0], [0.7, 0.7]);
    }

    #[test]
    fn context_examples() {
        let p = ContextParams::default();
        let full_grip = policy_context(&p, &input(SafetySnapshot::default(), 1.0), 5);
        assert!(full_grip.values.iter().all(|v| *v == [0.0, 0.0]));

        let open = SafetySnapshot {
            min_wall_dist: 5.0,
            occlusion_iou: 1.0,
            curvature: 0.0,
            bifurcation_dist: 1000.0,
        };
        assert!(p.logit(&open) < 0.0);
        let c = policy_context(&p, &input(open, 0.0), 5);
        assert!(c.values[0][0] < 0.45);

        let danger = SafetySnapshot {
            min_wall_dist: 0.0,
            occlusion_iou: 0.0,
            curvature: 0.0,
            bifurcation_dist: 1000.0,
        };
        let c = policy_context(&p, &input(danger, 0.0), 5);
        assert!(c.values[0][0] >= 0.9 * 0.99, "{}", c.values[0][0]);
        assert_eq!(c, policy_context(&p, &input(danger, 0.0), 5));
    }

    #[test]
    fn spec_names_round_trip() {
        for n in ["manual", "fixed", "discrete", "context"] {
            let s = PolicySpec::from_name(n).unwrap();
            assert_eq!(s.name(), n);
            let p = build_policy(&s, 5).unwrap();
            assert_eq!(p.name(), n);
        }
        assert!(PolicySpec::from_name("nope").is_none());
    }
}
