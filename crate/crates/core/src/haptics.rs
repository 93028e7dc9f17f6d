//! Haptic forces rendered to each operator hand: wall repulsion plus path
//! guidance that fades with autonomous authority.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ALPHA_MAX;
use crate::geometry::{project_onto_segment, Vec2};
use crate::phantom::DistanceField;

/// Force in newtons.
pub type ForceVector = Vec2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HapticError {
    #[error("wall distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("wall normal is not a unit vector (norm {0})")]
    NonUnitNormal(f64),
    #[error("authority {0} outside [0, 0.9]")]
    AlphaOutOfRange(f64),
    #[error("reference path is empty")]
    EmptyPath,
    #[error("invalid haptic parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HapticParams {
    /// Influence distance of the wall repulsion (mm).
    pub d0: f64,
    /// Repulsive gain (N·mm²).
    pub k_rep: f64,
    /// Guidance stiffness (N/mm).
    pub k_guide: f64,
    /// Largest rendered force (N).
    pub f_cap: f64,
}

impl Default for HapticParams {
    fn default() -> Self {
        Self {
            d0: 1.0,
            k_rep: 0.05,
            k_guide: 0.5,
            f_cap: 3.3,
        }
    }
}

impl HapticParams {
    pub fn validate(&self) -> Result<(), HapticError> {
        for (name, v) in [("d0", self.d0), ("k_rep", self.k_rep), ("k_guide", self.k_guide), ("f_cap", self.f_cap)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HapticError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Scale `f` down to magnitude `cap` if it is longer; direction is kept.
pub fn cap_force(f: ForceVector, cap: f64) -> ForceVector {
    let n = f.norm();
    if n > cap && n > 0.0 {
        f * (cap / n)
    } else {
        f
    }
}

/// `k_rep·(1/d − 1/d0)·(1/d²)·n̂` inside the influence distance, else zero.
pub fn repulsive_force(d: f64, n_hat: Vec2, params: &HapticParams) -> Result<ForceVector, HapticError> {
    if !(d > 0.0) {
        return Err(HapticError::NonPositiveDistance(d));
    }
    let norm = n_hat.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(HapticError::NonUnitNormal(norm));
    }
    if d > params.d0 {
        return Ok(Vec2::ZERO);
    }
    let mag = params.k_rep * (1.0 / d - 1.0 / params.d0) / (d * d);
    Ok(cap_force(n_hat * mag, params.f_cap))
}

/// `k_guide·e_path`.
pub fn guidance_force(e_path: Vec2, k_guide: f64) -> ForceVector {
    e_path * k_guide
}

/// `F_rep + (1 − α)·F_guide`, capped at `f_cap`.
pub fn combined_haptic(
    f_rep: ForceVector,
    f_guide: ForceVector,
    alpha: f64,
    f_cap: f64,
) -> Result<ForceVector, HapticError> {
    if !(0.0..=ALPHA_MAX).contains(&alpha) {
        return Err(HapticError::AlphaOutOfRange(alpha));
    }
    Ok(cap_force(f_rep + f_guide * (1.0 - alpha), f_cap))
}

/// Vector from `position` to the closest point of the polyline; the earliest
/// segment wins ties.
pub fn nearest_path_deviation(path: &[Vec2], position: Vec2) -> Result<Vec2, HapticError> {
    match path {
        [] => Err(HapticError::EmptyPath),
        [only] => Ok(*only - position),
        _ => {
            let mut best = (f64::INFINITY, Vec2::ZERO);
            for seg in path.windows(2) {
                let (q, _) = project_onto_segment(position, seg[0], seg[1]);
                let d = (q - position).norm_squared();
                if d < best.0 {
                    best = (d, q - position);
                }
            }
            Ok(best.1)
        }
    }
}

/// Full per-hand force for an endpoint at `position` under authority `alpha`.
pub fn render_force(
    field: &DistanceField,
    path: &[Vec2],
    position: Vec2,
    alpha: f64,
    params: &HapticParams,
) -> Result<ForceVector, HapticError> {
    let d = field.sample(position);
    let f_rep = match field.wall_normal(position) {
        Some(n) if d > 0.0 => repulsive_force(d, n, params)?,
        _ => Vec2::ZERO,
    };
    let f_guide = match path.is_empty() {
        true => Vec2::ZERO,
        false => guidance_force(nearest_path_deviation(path, position)?, params.k_guide),
    };
    combined_haptic(f_rep, f_guide, alpha, params.f_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(k_rep: f64, d0: f64) -> HapticParams {
        HapticParams {
            d0,
            k_rep,
            ..Default::default()
        }
    }

    #[test]
    fn repulsion_examples() {
        let x = Vec2::new(1.0, 0.0);
        assert_eq!(repulsive_force(2.5, x, &p(1.0, 2.0)).unwrap(), Vec2::ZERO);
        assert_eq!(repulsive_force(2.0, x, &p(1.0, 2.0)).unwrap(), Vec2::ZERO);
        let f = repulsive_force(1.0, x, &p(1.0, 2.0)).unwrap();
        assert!((f.x - 0.5).abs() < 1e-12 && f.y == 0.0);
        assert!(matches!(repulsive_force(0.0, x, &p(1.0, 2.0)), Err(HapticError::NonPositiveDistance(_))));
        assert!(matches!(
            repulsive_force(1.0, Vec2::new(2.0, 0.0), &p(1.0, 2.0)),
            Err(HapticError::NonUnitNormal(_))
        ));
        // capped near the wall
        let f = repulsive_force(1e-4, x, &p(1.0, 2.0)).unwrap();
        assert!((f.norm() - 3.3).abs() < 1e-12);
    }

    #[test]
    fn guidance_and_combination() {
        assert_eq!(guidance_force(Vec2::new(0.0, 2.0), 0.5), Vec2::new(0.0, 1.0));
        let f = combined_haptic(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.9, 3.3).unwrap();
        assert!((f.x - 0.1).abs() < 1e-15);
        let r = Vec2::new(0.2, -0.1);
        assert_eq!(combined_haptic(r, Vec2::ZERO, 0.4, 3.3).unwrap(), r);
        assert_eq!(combined_haptic(r, Vec2::new(1.0, 1.0), 0.0, 3.3).unwrap(), r + Vec2::new(1.0, 1.0));
        assert!(combined_haptic(r, r, 0.95, 3.3).is_err());
    }

    #[test]
    fn deviation() {
        let path = [Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0)];
        assert_eq!(nearest_path_deviation(&path, Vec2::new(2.0, 0.0)).unwrap(), Vec2::ZERO);
        assert_eq!(nearest_path_deviation(&path, Vec2::new(2.0, 1.0)).unwrap(), Vec2::new(0.0, -1.0));
        // corner: equidistant from both legs, first leg wins
        let bend = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0)];
        let e = nearest_path_deviation(&bend, Vec2::new(1.0, 1.0)).unwrap();
        assert_eq!(e, Vec2::new(0.0, -1.0));
        assert!(matches!(nearest_path_deviation(&[], Vec2::ZERO), Err(HapticError::EmptyPath)));
    }
}
