use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::branch::flag_branch_vertices;
use super::PlanError;
use crate::geometry::Vec2;
use crate::phantom::{Cell, CostMap};

/// Fixed-point scale of path costs: one unit is 1e-9 mm·cost.
///
/// Edge costs are rounded up to whole units so path costs are exact integer
/// sums and every search that minimizes them agrees bit-for-bit.
pub const COST_UNITS_PER_MM: f64 = 1.0e9;

/// Planned centerline through cell centers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Vec2>,
    /// True where the waypoint sits at a bifurcation of the free space.
    pub branch: Vec<bool>,
    /// Total arc length (mm).
    pub length_mm: f64,
    /// Accumulated traversal cost in fixed-point units.
    pub cost_units: u64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn cost(&self) -> f64 {
        self.cost_units as f64 / COST_UNITS_PER_MM
    }
}

/// Cost of the 8-connected step between neighbouring free cells:
/// step length × mean endpoint cost, rounded up to fixed-point units.
pub fn edge_cost_units(costmap: &CostMap, a: Cell, b: Cell) -> Option<u64> {
    let ca = costmap.cost(a)?;
    let cb = costmap.cost(b)?;
    let diagonal = a.0 != b.0 && a.1 != b.1;
    let step = if diagonal {
        std::f64::consts::SQRT_2
    } else {
        1.0
    } * costmap.resolution();
    Some((step * 0.5 * (ca + cb) * COST_UNITS_PER_MM).ceil() as u64)
}

fn endpoint_cell(costmap: &CostMap, p: Vec2) -> Result<Cell, PlanError> {
    let res = costmap.resolution();
    if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
        return Err(PlanError::BlockedEndpoint(p));
    }
    let cell = ((p.x / res).floor() as usize, (p.y / res).floor() as usize);
    if cell.0 >= costmap.width() || cell.1 >= costmap.height() || costmap.is_blocked(cell) {
        return Err(PlanError::BlockedEndpoint(p));
    }
    Ok(cell)
}

/// A* over the 8-connected costmap from `start` to `goal` (positions in mm).
///
/// The heuristic is the straight-line distance times the smallest free-cell
/// cost, so the returned path has the optimal total cost. Ties on the queue
/// resolve by `(f, h, cell index)` which makes paths reproducible.
pub fn plan_centerline(costmap: &CostMap, start: Vec2, goal: Vec2) -> Result<Path, PlanError> {
    let s = endpoint_cell(costmap, start)?;
    let g = endpoint_cell(costmap, goal)?;
    let w = costmap.width();
    let h = costmap.height();
    let res = costmap.resolution();
    let idx = |(x, y): Cell| y * w + x;
    let cell_of = |i: usize| (i % w, i / w);
    let center = |(x, y): Cell| Vec2::new((x as f64 + 0.5) * res, (y as f64 + 0.5) * res);

    let goal_center = center(g);
    let cmin = costmap.min_free_cost();
    // slightly deflated so float rounding can never make it overestimate
    let heuristic = |c: Cell| -> u64 {
        let d = center(c).distance(goal_center);
        (d * cmin * COST_UNITS_PER_MM * (1.0 - 1e-12)).floor() as u64
    };

    let n = w * h;
    let mut best = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    best[idx(s)] = 0;
    let h0 = heuristic(s);
    heap.push(Reverse((h0, h0, idx(s))));

    let mut found = false;
    while let Some(Reverse((f, hc, i))) = heap.pop() {
        let gi = f - hc;
        if gi > best[i] {
            continue;
        }
        if i == idx(g) {
            found = true;
            break;
        }
        let cell = cell_of(i);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = cell.0 as isize + dx;
                let ny = cell.1 as isize + dy;
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let nb = (nx as usize, ny as usize);
                let Some(step) = edge_cost_units(costmap, cell, nb) else {
                    continue;
                };
                let ng = gi + step;
                let ni = idx(nb);
                if ng < best[ni] {
                    best[ni] = ng;
                    parent[ni] = i;
                    let hn = heuristic(nb);
                    heap.push(Reverse((ng + hn, hn, ni)));
                }
            }
        }
    }
    if !found {
        return Err(PlanError::NoPath);
    }

    let mut cells = vec![g];
    let mut cur = idx(g);
    while cur != idx(s) {
        cur = parent[cur];
        cells.push(cell_of(cur));
    }
    cells.reverse();
    let waypoints: Vec<Vec2> = cells.iter().map(|&c| center(c)).collect();
    let length_mm = waypoints.windows(2).map(|p| p[0].distance(p[1])).sum();
    let branch = flag_branch_vertices(costmap.field(), &cells);
    Ok(Path {
        waypoints,
        branch,
        length_mm,
        cost_units: best[idx(g)],
    })
}

/// Recompute the cost of a cell sequence (used to check returned paths).
pub fn path_cost_units(costmap: &CostMap, cells: &[Cell]) -> Option<u64> {
    cells
        .windows(2)
        .map(|p| edge_cost_units(costmap, p[0], p[1]))
        .sum()
}
