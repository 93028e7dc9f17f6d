use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::authority::check_alpha;
use super::{AuthorityPair, ControlError};

/// Authority predicted for the next `C` ticks, both arms.
///
/// `values[k]` targets tick `issued_at + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorityChunk {
    pub values: Vec<[f64; 2]>,
    pub issued_at: u64,
}

impl AuthorityChunk {
    pub fn new(values: Vec<[f64; 2]>, issued_at: u64) -> Result<Self, ControlError> {
        if values.is_empty() {
            return Err(ControlError::InvalidParams("chunk needs at least one step".into()));
        }
        for v in &values {
            check_alpha(v[0])?;
            check_alpha(v[1])?;
        }
        Ok(Self { values, issued_at })
    }

    /// Chunk repeating `pair` for `len` steps.
    pub fn constant(pair: AuthorityPair, len: usize, issued_at: u64) -> Result<Self, ControlError> {
        Self::new(vec![pair.as_array(); len.max(1)], issued_at)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The last `capacity` chunks, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkBuffer {
    capacity: usize,
    chunks: VecDeque<AuthorityChunk>,
}

impl ChunkBuffer {
    pub fn new(capacity: usize) -> Result<Self, ControlError> {
        if capacity == 0 {
            return Err(ControlError::InvalidParams("chunk size must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            chunks: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn clear(&mut self) {
        self.chunks.clear();
    }

    pub fn chunks(&self) -> impl Iterator<Item = &AuthorityChunk> {
        self.chunks.iter()
    }

    /// Append a chunk; its issue tick must exceed the newest one held.
    pub fn push(&mut self, chunk: AuthorityChunk) -> Result<(), ControlError> {
        if let Some(last) = self.chunks.back() {
            if chunk.issued_at <= last.issued_at {
                return Err(ControlError::InvalidParams(format!(
                    "chunk issued at {} after one issued at {}",
                    chunk.issued_at, last.issued_at
                )));
            }
        }
        if self.chunks.len() == self.capacity {
            self.chunks.pop_front();
        }
        self.chunks.push_back(chunk);
        Ok(())
    }
}

/// `ω_k ∝ exp(−k/τ)` for `k = 0..C`, normalized to sum to one.
pub fn exponential_weights(c: usize, tau: f64) -> Result<Vec<f64>, ControlError> {
    if c == 0 {
        return Err(ControlError::InvalidParams("chunk size must be at least 1".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ControlError::InvalidParams(format!("tau must be positive, got {tau}")));
    }
    let raw: Vec<f64> = (0..c).map(|k| (-(k as f64) / tau).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Authority for the newest tick in `buffer`: `Σ_k ω_k·chunk(t − k)[k]`.
///
/// Chunks missing from the history (warm-up or skipped ticks) drop out and
/// the remaining weights are renormalized.
pub fn aggregate_chunks(buffer: &ChunkBuffer, omega: &[f64]) -> Result<AuthorityPair, ControlError> {
    let t = buffer.chunks.back().ok_or(ControlError::EmptyBuffer)?.issued_at;
    if omega.len() != buffer.capacity {
        return Err(ControlError::InvalidParams(format!(
            "{} weights for chunk size {}",
            omega.len(),
            buffer.capacity
        )));
    }
    // deviations from the first contribution, so constant histories come back exactly
    let mut base: Option<[f64; 2]> = None;
    let mut acc = [0.0f64; 2];
    let mut wsum = 0.0;
    for chunk in buffer.chunks.iter().rev() {
        let k = (t - chunk.issued_at) as usize;
        if k >= omega.len() || k >= chunk.values.len() {
            continue;
        }
        let w = omega[k];
        let v = chunk.values[k];
        let b = *base.get_or_insert(v);
        acc[0] += w * (v[0] - b[0]);
        acc[1] += w * (v[1] - b[1]);
        wsum += w;
    }
    let b = base.unwrap_or_default();
    if wsum <= 0.0 {
        return Err(ControlError::InvalidParams("weights of available chunks sum to zero".into()));
    }
    let l = (b[0] + acc[0] / wsum).clamp(0.0, super::ALPHA_MAX);
    let r = (b[1] + acc[1] / wsum).clamp(0.0, super::ALPHA_MAX);
    AuthorityPair::new(l, r)
}

/// `Σ_arm Σ_k (α_{k+1} − α_k)²`.
pub fn chunk_smoothness_penalty(chunk: &AuthorityChunk) -> f64 {
    chunk
        .values
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2))
        .sum()
}
