use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntentParams {
    /// Resting grip force (N).
    pub f_baseline: f64,
    /// Deliberate override grip force (N).
    pub f_override: f64,
    /// Moving-average window for the smoothed intent.
    pub window: usize,
    /// Window for the force standard deviation feature.
    pub sigma_window: usize,
}

impl Default for IntentParams {
    fn default() -> Self {
        Self {
            f_baseline: 0.5,
            f_override: 5.0,
            window: 3,
            sigma_window: 10,
        }
    }
}

impl IntentParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.f_override > self.f_baseline) || !self.f_baseline.is_finite() || !self.f_override.is_finite() {
            return Err(ControlError::DegenerateCalibration {
                f_baseline: self.f_baseline,
                f_override: self.f_override,
            });
        }
        if self.window == 0 || self.sigma_window == 0 {
            return Err(ControlError::InvalidParams("intent windows must be at least 1".into()));
        }
        Ok(())
    }
}

/// Grip-force intent of one hand at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntentSignal {
    /// Raw force (N).
    pub force: f64,
    pub f_baseline: f64,
    pub f_override: f64,
    /// Normalized intent in `[0, 1]`.
    pub normalized: f64,
    /// Moving average of the normalized intent.
    pub smoothed: f64,
    /// Force derivative (N/s).
    pub d_force: f64,
    /// Force standard deviation over the recent window (N).
    pub sigma: f64,
}

impl IntentSignal {
    /// `[F, ΔF, σ]`.
    pub fn features(&self) -> [f64; 3] {
        [self.force, self.d_force, self.sigma]
    }
}

/// `clamp((F − F_baseline) / (F_override − F_baseline), 0, 1)`.
pub fn normalize_intent(f: f64, f_baseline: f64, f_override: f64) -> Result<f64, ControlError> {
    if !(f_override > f_baseline) {
        return Err(ControlError::DegenerateCalibration { f_baseline, f_override });
    }
    let i = (f - f_baseline) / (f_override - f_baseline);
    Ok(if i.is_nan() { 0.0 } else { i.clamp(0.0, 1.0) })
}

/// Arithmetic mean of the samples; 0 for none.
pub fn smooth_intent(history: &[f64]) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    // shifted so a constant history returns its value exactly
    let first = history[0];
    let dev: f64 = history.iter().map(|v| v - first).sum();
    (first + dev / history.len() as f64).clamp(0.0, 1.0)
}

/// Streaming intent pipeline for one hand.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentFilter {
    params: IntentParams,
    intents: VecDeque<f64>,
    forces: VecDeque<f64>,
    last_force: Option<f64>,
}

impl IntentFilter {
    pub fn new(params: IntentParams) -> Result<Self, ControlError> {
        params.validate()?;
        Ok(Self {
            params,
            intents: VecDeque::with_capacity(params.window),
            forces: VecDeque::with_capacity(params.sigma_window),
            last_force: None,
        })
    }

    pub fn params(&self) -> &IntentParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.intents.clear();
        self.forces.clear();
        self.last_force = None;
    }

    /// Feed one force sample taken `dt` seconds after the previous one.
    pub fn update(&mut self, force: f64, dt: f64) -> IntentSignal {
        let force = if force.is_finite() { force } else { 0.0 };
        let p = &self.params;
        let normalized = normalize_intent(force, p.f_baseline, p.f_override).unwrap_or(0.0);
        if self.intents.len() == p.window {
            self.intents.pop_front();
        }
        self.intents.push_back(normalized);
        if self.forces.len() == p.sigma_window {
            self.forces.pop_front();
        }
        self.forces.push_back(force);
        let d_force = match self.last_force {
            Some(prev) if dt > 0.0 => (force - prev) / dt,
            _ => 0.0,
        };
        self.last_force = Some(force);

        let smoothed = smooth_intent(self.intents.make_contiguous());
        let n = self.forces.len();
        let sigma = if n < 2 {
            0.0
        } else {
            let mean = self.forces.iter().sum::<f64>() / n as f64;
            let ss: f64 = self.forces.iter().map(|f| (f - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        IntentSignal {
            force,
            f_baseline: p.f_baseline,
            f_override: p.f_override,
            normalized,
            smoothed,
            d_force,
            sigma,
        }
    }
}
