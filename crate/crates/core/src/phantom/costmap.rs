use serde::{Deserialize, Serialize};

use super::edt::DistanceField;
use super::grid::Cell;
use super::PhantomError;

/// Parameters of the wall-proximity cost `base + wall_weight·exp(−d / decay_mm)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    pub base: f64,
    pub wall_weight: f64,
    pub decay_mm: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            base: 1.0,
            wall_weight: 10.0,
            decay_mm: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let ok = self.base.is_finite()
            && self.base > 0.0
            && self.wall_weight.is_finite()
            && self.wall_weight >= 0.0
            && self.decay_mm.is_finite()
            && self.decay_mm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(PhantomError::InvalidParams(format!("{self:?}")))
        }
    }

    /// Cost of a free cell at wall distance `d` mm.
    pub fn cost_at(&self, d: f64) -> f64 {
        self.base + self.wall_weight * (-d / self.decay_mm).exp()
    }
}

/// Traversal cost per cell. Occupied cells are blocked (`None` from [`CostMap::cost`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    params: CostParams,
    field: DistanceField,
    cost: Vec<f64>,
    min_free_cost: f64,
}

/// Build the traversal costmap from a distance field.
pub fn build_costmap(field: &DistanceField, params: CostParams) -> Result<CostMap, PhantomError> {
    params.validate()?;
    let cost: Vec<f64> = field
        .values()
        .iter()
        .zip(field.squared_cells())
        .map(|(&d, &sq)| if sq == 0 { f64::INFINITY } else { params.cost_at(d) })
        .collect();
    let min_free_cost = cost
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    Ok(CostMap {
        params,
        field: field.clone(),
        cost,
        min_free_cost,
    })
}

impl CostMap {
    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn field(&self) -> &DistanceField {
        &self.field
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    pub fn resolution(&self) -> f64 {
        self.field.resolution()
    }

    /// Raw row-major costs; blocked cells hold `f64::INFINITY`.
    pub fn values(&self) -> &[f64] {
        &self.cost
    }

    pub fn cost(&self, (x, y): Cell) -> Option<f64> {
        let c = self.cost[y * self.width() + x];
        c.is_finite().then_some(c)
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.cost(cell).is_none()
    }

    /// Smallest finite cell cost (`+inf` when every cell is blocked).
    pub fn min_free_cost(&self) -> f64 {
        self.min_free_cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{distance_transform, OccupancyGrid};

    fn field() -> DistanceField {
        distance_transform(&OccupancyGrid::open(9, 9, 0.5).unwrap())
    }

    #[test]
    fn zero_wall_weight_is_uniform() {
        let cm = build_costmap(
            &field(),
            CostParams {
                wall_weight: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        for y in 1..8 {
            for x in 1..8 {
                assert_eq!(cm.cost((x, y)), Some(1.0));
            }
        }
        assert_eq!(cm.cost((0, 0)), None);
    }

    #[test]
    fn cost_at_decay_distance() {
        let p = CostParams {
            base: 1.0,
            wall_weight: 1.0,
            decay_mm: 2.0,
        };
        assert!((p.cost_at(2.0) - (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((p.cost_at(2.0) - 1.3679).abs() < 1e-4);
        assert!((p.cost_at(1e6) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        for bad in [
            CostParams { decay_mm: 0.0, ..Default::default() },
            CostParams { wall_weight: -1.0, ..Default::default() },
            CostParams { base: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(
                build_costmap(&field(), bad),
                Err(PhantomError::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn cost_decreases_away_from_walls() {
        let cm = build_costmap(&field(), CostParams::default()).unwrap();
        let f = cm.field();
        let mut free: Vec<(f64, f64)> = (0..81)
            .filter_map(|i| {
                let c = (i % 9, i / 9);
                cm.cost(c).map(|k| (f.at(c), k))
            })
            .collect();
        free.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in free.windows(2) {
            if w[0].0 < w[1].0 {
                assert!(w[0].1 > w[1].1);
            }
        }
        assert!((cm.min_free_cost() - CostParams::default().cost_at(2.0)).abs() < 1e-12);
    }
}
