//! Authority blending, chunked authority prediction and operator intent.

mod authority;
mod chunk;
mod external;
mod intent;
mod policy;

use thiserror::Error;

pub use authority::{blend_commands, bound_alpha, AuthorityPair, ALPHA_MAX};
pub use chunk::{
    aggregate_chunks, chunk_smoothness_penalty, exponential_weights, AuthorityChunk, ChunkBuffer,
};
pub use external::{AdapterRequest, ExternalPolicy, ExternalParams, FALLBACK_ALPHA};
pub use intent::{normalize_intent, smooth_intent, IntentFilter, IntentParams, IntentSignal};
pub use policy::{
    build_policy, policy_context, policy_discrete, policy_fixed, AuthorityPolicy, ContextParams,
    ContextPolicy, DiscretePolicy, FixedPolicy, ManualPolicy, PolicyInput, PolicySpec,
    DISCRETE_ALPHA, DISCRETE_SWITCH_MM, FIXED_ALPHA,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("authority {0} outside [0, 0.9]")]
    AlphaOutOfRange(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("chunk buffer is empty")]
    EmptyBuffer,
    #[error("override force {f_override} N must exceed baseline {f_baseline} N")]
    DegenerateCalibration { f_baseline: f64, f_override: f64 },
    #[error("policy adapter did not answer within {0} ms")]
    AdapterTimeout(u64),
    #[error("malformed adapter reply: {0}")]
    MalformedReply(String),
    #[error("policy adapter i/o: {0}")]
    Io(#[from] std::io::Error),
}
