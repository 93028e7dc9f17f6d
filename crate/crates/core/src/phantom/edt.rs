//! Exact Euclidean distance transform.
//!
//! Two separable passes of the lower-envelope-of-parabolas construction
//! (Felzenszwalb & Huttenlocher). Squared distances stay in integer cell
//! units throughout and envelope breakpoints are compared as exact rationals,
//! so the result is bit-identical to a brute-force nearest-occupied scan.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid};
use crate::geometry::Vec2;

/// Sentinel for "no occupied cell reachable" in the squared-distance buffers.
pub const UNREACHABLE: i64 = i64::MAX / 4;

#[derive(Clone, Copy, Debug)]
enum Breakpoint {
    NegInf,
    At { num: i64, den: i64 },
    PosInf,
}

impl Breakpoint {
    fn cmp_rational(&self, num: i64, den: i64) -> Ordering {
        match *self {
            Breakpoint::NegInf => Ordering::Less,
            Breakpoint::PosInf => Ordering::Greater,
            Breakpoint::At { num: n, den: d } => {
                (n as i128 * den as i128).cmp(&(num as i128 * d as i128))
            }
        }
    }
}

/// 1D squared distance transform of a sampled function `f` (lower envelope of
/// parabolas rooted at each finite sample). `out[q] = min_p (q - p)² + f[p]`.
fn envelope_1d(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<Breakpoint>) {
    v.clear();
    z.clear();
    for (q, &fq) in f.iter().enumerate() {
        if fq >= UNREACHABLE {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.push(Breakpoint::NegInf);
            z.push(Breakpoint::PosInf);
            continue;
        }
        let qi = q as i64;
        loop {
            let k = v.len() - 1;
            let p = v[k] as i64;
            // intersection abscissa s = num / den of parabolas rooted at p and q
            let num = (fq + qi * qi) - (f[v[k]] + p * p);
            let den = 2 * (qi - p);
            if z[k].cmp_rational(num, den) != Ordering::Less {
                // s <= z[k]: parabola at p is hidden
                // (z[0] is -inf, so the first parabola is never popped)
                v.pop();
                z.pop();
            } else {
                let last = z.len() - 1;
                z[last] = Breakpoint::At { num, den };
                break;
            }
        }
        v.push(q);
        z.push(Breakpoint::PosInf);
    }

    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = UNREACHABLE);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qi = q as i64;
        // advance while z[k+1] < q
        while z[k + 1].cmp_rational(qi, 1) == Ordering::Less {
            k += 1;
        }
        let p = v[k] as i64;
        *o = (qi - p) * (qi - p) + f[v[k]];
    }
}

/// Squared EDT in cell units of a row-major occupancy mask.
///
/// Cells with no occupied cell anywhere in the grid get [`UNREACHABLE`].
pub fn squared_edt(occupied: &[bool], width: usize, height: usize) -> Vec<i64> {
    assert_eq!(occupied.len(), width * height, "mask size mismatch");
    if width == 0 || height == 0 {
        return Vec::new();
    }

    // column pass, stored column-major so each column is contiguous
    let mut cols = vec![0i64; width * height];
    let column = |x: usize, out: &mut [i64]| {
        let f: Vec<i64> = (0..height)
            .map(|y| {
                if occupied[y * width + x] {
                    0
                } else {
                    UNREACHABLE
                }
            })
            .collect();
        let (mut v, mut z) = (Vec::new(), Vec::new());
        envelope_1d(&f, out, &mut v, &mut z);
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cols.par_chunks_mut(height)
            .enumerate()
            .for_each(|(x, out)| column(x, out));
    }
    #[cfg(not(feature = "parallel"))]
    cols.chunks_mut(height)
        .enumerate()
        .for_each(|(x, out)| column(x, out));

    // row pass over the column results
    let mut sq = vec![0i64; width * height];
    let row = |y: usize, out: &mut [i64]| {
        let f: Vec<i64> = (0..width).map(|x| cols[x * height + y]).collect();
        let (mut v, mut z) = (Vec::new(), Vec::new());
        envelope_1d(&f, out, &mut v, &mut z);
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sq.par_chunks_mut(width)
            .enumerate()
            .for_each(|(y, out)| row(y, out));
    }
    #[cfg(not(feature = "parallel"))]
    sq.chunks_mut(width)
        .enumerate()
        .for_each(|(y, out)| row(y, out));

    sq
}

/// Per-cell Euclidean distance (mm) from each cell center to the nearest
/// occupied cell center. Zero exactly on occupied cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    width: usize,
    height: usize,
    resolution: f64,
    squared_cells: Vec<i64>,
    dist: Vec<f64>,
}

/// Compute the exact distance field of a grid.
pub fn distance_transform(grid: &OccupancyGrid) -> DistanceField {
    let squared_cells = squared_edt(grid.cells(), grid.width(), grid.height());
    let res = grid.resolution();
    let dist = squared_cells
        .iter()
        .map(|&s| {
            if s >= UNREACHABLE {
                f64::INFINITY
            } else {
                (s as f64).sqrt() * res
            }
        })
        .collect();
    DistanceField {
        width: grid.width(),
        height: grid.height(),
        resolution: res,
        squared_cells,
        dist,
    }
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Distances in mm, row-major.
    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    /// Exact squared distances in cell units, row-major.
    pub fn squared_cells(&self) -> &[i64] {
        &self.squared_cells
    }

    pub fn at(&self, (x, y): Cell) -> f64 {
        self.dist[y * self.width + x]
    }

    pub fn is_free(&self, (x, y): Cell) -> bool {
        self.squared_cells[y * self.width + x] > 0
    }

    /// Bilinear interpolation between cell centers; queries are clamped to the grid.
    pub fn sample(&self, p: Vec2) -> f64 {
        let u = (p.x / self.resolution - 0.5).clamp(0.0, (self.width - 1) as f64);
        let v = (p.y / self.resolution - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = u - x0 as f64;
        let ty = v - y0 as f64;
        let d00 = self.at((x0, y0));
        let d10 = self.at((x1, y0));
        let d01 = self.at((x0, y1));
        let d11 = self.at((x1, y1));
        let top = d00 + (d10 - d00) * tx;
        let bottom = d01 + (d11 - d01) * tx;
        top + (bottom - top) * ty
    }

    /// Gradient of the interpolated field by central differences at half a cell.
    pub fn gradient(&self, p: Vec2) -> Vec2 {
        let h = self.resolution * 0.5;
        let dx = (self.sample(p + Vec2::new(h, 0.0)) - self.sample(p - Vec2::new(h, 0.0))) / (2.0 * h);
        let dy = (self.sample(p + Vec2::new(0.0, h)) - self.sample(p - Vec2::new(0.0, h))) / (2.0 * h);
        Vec2::new(dx, dy)
    }

    /// Center of the nearest occupied cell to `p` (ties resolved by scan order).
    pub fn nearest_occupied_center(&self, p: Vec2) -> Option<Vec2> {
        let cx = ((p.x / self.resolution).floor() as isize).clamp(0, self.width as isize - 1);
        let cy = ((p.y / self.resolution).floor() as isize).clamp(0, self.height as isize - 1);
        let max_r = self.width.max(self.height) as isize;
        let mut best: Option<(f64, Vec2)> = None;
        for r in 0..=max_r {
            for y in (cy - r)..=(cy + r) {
                for x in (cx - r)..=(cx + r) {
                    let on_ring = (y - cy).abs() == r || (x - cx).abs() == r;
                    if !on_ring
                        || x < 0
                        || y < 0
                        || x >= self.width as isize
                        || y >= self.height as isize
                    {
                        continue;
                    }
                    let (xu, yu) = (x as usize, y as usize);
                    if self.squared_cells[yu * self.width + xu] != 0 {
                        continue;
                    }
                    let c = Vec2::new(
                        (xu as f64 + 0.5) * self.resolution,
                        (yu as f64 + 0.5) * self.resolution,
                    );
                    let d = c.distance(p);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, c));
                    }
                }
            }
            // any cell on a later ring is at least (r - 1) cells away
            if let Some((bd, _)) = best {
                if bd <= (r as f64 - 1.0).max(0.0) * self.resolution {
                    break;
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Unit vector pointing away from the nearest wall at `p`.
    ///
    /// Uses the normalized field gradient; where the gradient vanishes it
    /// falls back to the direction away from the nearest occupied cell center.
    pub fn wall_normal(&self, p: Vec2) -> Option<Vec2> {
        self.gradient(p).normalized().or_else(|| {
            self.nearest_occupied_center(p)
                .and_then(|c| (p - c).normalized())
        })
    }
}
