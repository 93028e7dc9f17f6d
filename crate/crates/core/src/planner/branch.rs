//! Bifurcation detection on the free-space medial axis.
//!
//! A centerline vertex sits on the ridge of the distance field. Around it we
//! sample a circle of radius twice the local wall distance and count the
//! separate arcs of free space the circle crosses: two for a plain channel,
//! one at a dead end, three or more at a junction.

use crate::geometry::Vec2;
use crate::phantom::{Cell, DistanceField};

const CIRCLE_SAMPLES: usize = 360;
/// Arcs shorter than this many samples are treated as noise.
const MIN_ARC_SAMPLES: usize = 3;

/// Number of free-space channels leaving the neighbourhood of `cell`.
pub fn medial_degree(field: &DistanceField, cell: Cell) -> usize {
    let res = field.resolution();
    let d = field.at(cell);
    if d <= 0.0 || !d.is_finite() {
        return 0;
    }
    let center = Vec2::new((cell.0 as f64 + 0.5) * res, (cell.1 as f64 + 0.5) * res);
    let radius = (2.0 * d).max(2.0 * res);
    let (w, h) = (field.width(), field.height());
    let free: Vec<bool> = (0..CIRCLE_SAMPLES)
        .map(|i| {
            let theta = i as f64 * std::f64::consts::TAU / CIRCLE_SAMPLES as f64;
            let p = center + Vec2::from_angle(theta) * radius;
            if p.x < 0.0 || p.y < 0.0 {
                return false;
            }
            let (x, y) = ((p.x / res).floor() as usize, (p.y / res).floor() as usize);
            x < w && y < h && field.is_free((x, y))
        })
        .collect();

    let Some(first_blocked) = free.iter().position(|f| !f) else {
        // open all around: no walls within reach
        return 0;
    };
    let mut arcs = 0;
    let mut run = 0;
    for k in 1..=CIRCLE_SAMPLES {
        if free[(first_blocked + k) % CIRCLE_SAMPLES] {
            run += 1;
        } else {
            if run >= MIN_ARC_SAMPLES {
                arcs += 1;
            }
            run = 0;
        }
    }
    arcs
}

/// Flag path cells whose medial degree exceeds two.
pub fn flag_branch_vertices(field: &DistanceField, cells: &[Cell]) -> Vec<bool> {
    cells.iter().map(|&c| medial_degree(field, c) > 2).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{distance_transform, generate_tree_phantom, OccupancyGrid, TreeSpec};

    #[test]
    fn straight_channel_has_degree_two() {
        let mut g = OccupancyGrid::open(60, 21, 0.2).unwrap();
        for x in 0..60 {
            for y in 0..21 {
                if !(7..=13).contains(&y) {
                    g.set_occupied((x, y), true);
                }
            }
        }
        let f = distance_transform(&g);
        assert_eq!(medial_degree(&f, (30, 10)), 2);
        assert_eq!(medial_degree(&f, (0, 0)), 0);
    }

    #[test]
    fn y_junction_has_degree_three() {
        let spec = TreeSpec {
            branch_count: 1,
            angle_jitter_deg: 0.0,
            length_jitter: 0.0,
            turn_angles_deg: vec![45.0],
            ..Default::default()
        };
        let t = generate_tree_phantom(&spec, 0).unwrap();
        let f = distance_transform(&t.grid);
        let j = t.grid.cell_at(t.junctions[0]).unwrap();
        assert!(medial_degree(&f, j) >= 3, "degree {}", medial_degree(&f, j));
        // partway down the trunk the channel is plain
        let trunk = t.grid.cell_at(t.start + Vec2::new(0.0, 2.0)).unwrap();
        assert_eq!(medial_degree(&f, trunk), 2);
    }
}
