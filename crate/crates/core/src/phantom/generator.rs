//! Procedural branching-vessel phantoms.
//!
//! The tree is a main line that bifurcates `branch_count` times. At every
//! junction one child continues the main line and the other ends in a side
//! target, so the phantom carries one target per bifurcation depth plus the
//! terminal main-line target. Channels narrow by `narrowing` per generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OccupancyGrid, PhantomError};
use crate::geometry::{project_onto_segment, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSpec {
    /// Square phantom side length (mm).
    pub size_mm: f64,
    pub resolution_mm: f64,
    pub trunk_width_mm: f64,
    pub trunk_length_mm: f64,
    pub branch_length_mm: f64,
    pub branch_count: usize,
    /// Width ratio child / parent, in `(0, 1]`.
    pub narrowing: f64,
    /// Deflection of each child from its parent heading, per generation; the
    /// last entry repeats for deeper generations.
    pub turn_angles_deg: Vec<f64>,
    /// Uniform jitter applied to each turn angle (±deg).
    pub angle_jitter_deg: f64,
    /// Uniform relative jitter applied to each branch length (±fraction).
    pub length_jitter: f64,
    /// Channel end points are kept this far inside the phantom edge (mm).
    pub edge_margin_mm: f64,
    /// Distance of the run start point from the inlet edge (mm).
    pub start_offset_mm: f64,
}

impl Default for TreeSpec {
    /// Three bifurcations of increasing sharpness with progressive narrowing,
    /// giving an easy, medium and hard target in a 24 mm phantom.
    fn default() -> Self {
        Self {
            size_mm: 24.0,
            resolution_mm: 0.2,
            trunk_width_mm: 3.0,
            trunk_length_mm: 9.0,
            branch_length_mm: 5.5,
            branch_count: 3,
            narrowing: 0.8,
            turn_angles_deg: vec![35.0, 55.0, 75.0],
            angle_jitter_deg: 4.0,
            length_jitter: 0.08,
            edge_margin_mm: 2.5,
            start_offset_mm: 2.5,
        }
    }
}

/// One channel of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub from: Vec2,
    pub to: Vec2,
    pub width_mm: f64,
    pub generation: usize,
}

/// Terminal point of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: Vec2,
    /// Number of bifurcations passed from the inlet.
    pub depth: usize,
    pub width_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreePhantom {
    pub grid: OccupancyGrid,
    /// Suggested run start on the trunk centerline.
    pub start: Vec2,
    pub junctions: Vec<Vec2>,
    pub channels: Vec<Channel>,
    /// Side targets by increasing depth, then the terminal main-line target.
    pub targets: Vec<Target>,
}

impl TreePhantom {
    /// Shallowest target (one bifurcation).
    pub fn easy_target(&self) -> Target {
        self.targets[0]
    }

    /// Second side target, or the shallowest one for single-junction trees.
    pub fn medium_target(&self) -> Target {
        let n = self.targets.len();
        if n > 2 {
            self.targets[1]
        } else {
            self.targets[0]
        }
    }

    /// Terminal main-line target: deepest, narrowest.
    pub fn hard_target(&self) -> Target {
        *self.targets.last().expect("tree has targets")
    }
}

fn validate(spec: &TreeSpec) -> Result<(), PhantomError> {
    let infeasible = |m: &str| Err(PhantomError::InfeasibleSpec(m.to_string()));
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    if !finite_pos(spec.resolution_mm) {
        return infeasible("resolution must be positive");
    }
    if !finite_pos(spec.size_mm) || spec.size_mm < 4.0 * spec.resolution_mm {
        return infeasible("phantom too small");
    }
    if spec.branch_count == 0 {
        return infeasible("branch count must be at least 1");
    }
    if !(spec.narrowing > 0.0 && spec.narrowing <= 1.0) {
        return infeasible("narrowing must lie in (0, 1]");
    }
    if spec.turn_angles_deg.is_empty() || spec.turn_angles_deg.iter().any(|a| !a.is_finite()) {
        return infeasible("turn angles required");
    }
    if !finite_pos(spec.trunk_length_mm) || !finite_pos(spec.branch_length_mm) {
        return infeasible("channel lengths must be positive");
    }
    if !(spec.trunk_width_mm >= 2.0 * spec.resolution_mm) {
        return infeasible("trunk narrower than two cells");
    }
    let deepest = spec.trunk_width_mm * spec.narrowing.powi(spec.branch_count as i32);
    if deepest < spec.resolution_mm {
        return infeasible(&format!(
            "generation {} channels are {deepest:.3} mm wide, below one cell",
            spec.branch_count
        ));
    }
    Ok(())
}

/// Shorten a ray so its end stays inside `[margin, size - margin]²`.
fn clip_length(from: Vec2, dir: Vec2, len: f64, lo: f64, hi: f64) -> f64 {
    let mut t = len;
    for (p, d) in [(from.x, dir.x), (from.y, dir.y)] {
        if d > 1e-12 {
            t = t.min((hi - p) / d);
        } else if d < -1e-12 {
            t = t.min((lo - p) / d);
        }
    }
    t.max(0.0)
}

/// Generate a branching phantom; identical `(spec, seed)` give identical grids.
pub fn generate_tree_phantom(spec: &TreeSpec, seed: u64) -> Result<TreePhantom, PhantomError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = spec.size_mm;
    let (lo, hi) = (spec.edge_margin_mm, size - spec.edge_margin_mm);
    let jitter_len = |base: f64, rng: &mut ChaCha8Rng| {
        let j = if spec.length_jitter > 0.0 {
            rng.random_range(-spec.length_jitter..=spec.length_jitter)
        } else {
            0.0
        };
        base * (1.0 + j)
    };

    let inlet = Vec2::new(size / 2.0, 0.0);
    let mut heading = std::f64::consts::FRAC_PI_2;
    let trunk_len = jitter_len(spec.trunk_length_mm, &mut rng);
    let mut junction =
        inlet + Vec2::from_angle(heading) * clip_length(inlet, Vec2::from_angle(heading), trunk_len, lo, hi);
    let mut channels = vec![Channel {
        from: inlet,
        to: junction,
        width_mm: spec.trunk_width_mm,
        generation: 0,
    }];
    let mut junctions = Vec::new();
    let mut side_targets = Vec::new();
    let mut main_target = None;

    for g in 0..spec.branch_count {
        junctions.push(junction);
        let width = spec.trunk_width_mm * spec.narrowing.powi(g as i32 + 1);
        let base_angle = spec.turn_angles_deg[g.min(spec.turn_angles_deg.len() - 1)];
        let sign = if g % 2 == 0 { 1.0 } else { -1.0 };
        let angle = |rng: &mut ChaCha8Rng| {
            let j = if spec.angle_jitter_deg > 0.0 {
                rng.random_range(-spec.angle_jitter_deg..=spec.angle_jitter_deg)
            } else {
                0.0
            };
            (base_angle + j).to_radians()
        };
        let main_heading = heading + sign * angle(&mut rng);
        let side_heading = heading - sign * angle(&mut rng);

        let side_dir = Vec2::from_angle(side_heading);
        let side_len = clip_length(junction, side_dir, jitter_len(spec.branch_length_mm, &mut rng), lo, hi);
        let side_end = junction + side_dir * side_len;
        channels.push(Channel {
            from: junction,
            to: side_end,
            width_mm: width,
            generation: g + 1,
        });
        side_targets.push(Target {
            position: side_end,
            depth: g + 1,
            width_mm: width,
        });

        let main_dir = Vec2::from_angle(main_heading);
        let main_len = clip_length(junction, main_dir, jitter_len(spec.branch_length_mm, &mut rng), lo, hi);
        let main_end = junction + main_dir * main_len;
        channels.push(Channel {
            from: junction,
            to: main_end,
            width_mm: width,
            generation: g + 1,
        });
        heading = main_heading;
        junction = main_end;
        if g + 1 == spec.branch_count {
            main_target = Some(Target {
                position: main_end,
                depth: g + 1,
                width_mm: width,
            });
        }
    }

    let n = (size / spec.resolution_mm).round() as usize;
    let res = spec.resolution_mm;
    let mut occupied = vec![true; n * n];
    for y in 0..n {
        for x in 0..n {
            let c = Vec2::new((x as f64 + 0.5) * res, (y as f64 + 0.5) * res);
            let inside = channels.iter().any(|ch| {
                let (p, _) = project_onto_segment(c, ch.from, ch.to);
                p.distance(c) <= ch.width_mm / 2.0
            });
            if inside {
                occupied[y * n + x] = false;
            }
        }
    }
    let grid = OccupancyGrid::new(n, n, res, occupied)?;

    let mut targets = side_targets;
    targets.extend(main_target);
    let start = Vec2::new(size / 2.0, spec.start_offset_mm);
    Ok(TreePhantom {
        grid,
        start,
        junctions,
        channels,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let spec = TreeSpec::default();
        let a = generate_tree_phantom(&spec, 11).unwrap();
        let b = generate_tree_phantom(&spec, 11).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.targets, b.targets);
        let c = generate_tree_phantom(&spec, 12).unwrap();
        assert_ne!(a.grid, c.grid);
    }

    #[test]
    fn single_y_junction() {
        let spec = TreeSpec {
            branch_count: 1,
            narrowing: 1.0,
            angle_jitter_deg: 0.0,
            length_jitter: 0.0,
            ..Default::default()
        };
        let t = generate_tree_phantom(&spec, 0).unwrap();
        assert_eq!(t.junctions.len(), 1);
        assert_eq!(t.targets.len(), 2);
        assert_eq!(t.targets[0].width_mm, t.targets[1].width_mm);
        assert_eq!(t.targets[0].width_mm, spec.trunk_width_mm);
        // mirror-symmetric about the trunk axis
        let mid = spec.size_mm / 2.0;
        assert!(((t.targets[0].position.x - mid) + (t.targets[1].position.x - mid)).abs() < 1e-9);
    }

    #[test]
    fn widths_narrow_per_generation() {
        let t = generate_tree_phantom(&TreeSpec::default(), 3).unwrap();
        let w: Vec<f64> = t.targets.iter().map(|t| t.width_mm).collect();
        assert!((w[0] - 2.4).abs() < 1e-12);
        assert!((w[1] - 1.92).abs() < 1e-12);
        assert!((w[2] - 1.536).abs() < 1e-12);
        assert_eq!(t.hard_target().depth, 3);
        assert_eq!(t.easy_target().depth, 1);
        assert_eq!(t.medium_target().depth, 2);
    }

    #[test]
    fn too_narrow_is_infeasible() {
        let spec = TreeSpec {
            narrowing: 0.3,
            ..Default::default()
        };
        assert!(matches!(
            generate_tree_phantom(&spec, 0),
            Err(PhantomError::InfeasibleSpec(_))
        ));
        let spec = TreeSpec {
            trunk_width_mm: 0.3,
            ..Default::default()
        };
        assert!(matches!(
            generate_tree_phantom(&spec, 0),
            Err(PhantomError::InfeasibleSpec(_))
        ));
        let spec = TreeSpec {
            branch_count: 0,
            ..Default::default()
        };
        assert!(generate_tree_phantom(&spec, 0).is_err());
    }
}
