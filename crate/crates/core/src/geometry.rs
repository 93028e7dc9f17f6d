//! Planar vector type and polyline helpers shared by every module.
//!
//! All positions are in millimetres in the phantom frame: `x` grows to the
//! right, `y` grows with the row index of the occupancy grid.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A 2D vector or point, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > f64::EPSILON {
            Some(self / n)
        } else {
            None
        }
    }

    /// Rescale so the norm does not exceed `max`, keeping the direction.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn from_angle(radians: f64) -> Vec2 {
        Vec2::new(radians.cos(), radians.sin())
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closest point to `p` on segment `a`-`b`, with its parameter in `[0, 1]`.
pub fn project_onto_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Cumulative arc length at each vertex of a polyline; first entry is 0.
pub fn cumulative_arc_length(points: &[Vec2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += p.distance(points[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Point on a polyline at arc length `s` (clamped to the polyline extent).
///
/// `arc` must be the output of [`cumulative_arc_length`] for `points`.
pub fn point_at_arc_length(points: &[Vec2], arc: &[f64], s: f64) -> Vec2 {
    debug_assert_eq!(points.len(), arc.len());
    match points.len() {
        0 => Vec2::ZERO,
        1 => points[0],
        n => {
            if s <= 0.0 {
                return points[0];
            }
            if s >= arc[n - 1] {
                return points[n - 1];
            }
            let seg = segment_index_at(arc, s);
            let len = arc[seg + 1] - arc[seg];
            if len == 0.0 {
                points[seg]
            } else {
                points[seg].lerp(points[seg + 1], (s - arc[seg]) / len)
            }
        }
    }
}

/// Index `i` of the segment `[arc[i], arc[i + 1]]` containing `s`.
pub fn segment_index_at(arc: &[f64], s: f64) -> usize {
    let n = arc.len();
    debug_assert!(n >= 2);
    // first vertex strictly beyond s
    let upper = arc.partition_point(|&a| a <= s);
    upper.clamp(1, n - 1) - 1
}

/// Curvature (1/length) of the circle through three points; zero when collinear.
pub fn circumscribed_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom <= f64::EPSILON {
        return 0.0;
    }
    let twice_area = (b - a).cross(c - a).abs();
    2.0 * twice_area / denom
}
