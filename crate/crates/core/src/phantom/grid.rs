use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::geometry::Vec2;

/// Integer cell coordinate `(x, y)`; `x` is the column, `y` the row.
pub type Cell = (usize, usize);

/// Binary occupancy map of the phantom. The outer ring of cells is always
/// occupied so every grid has a closed workspace and a non-empty obstacle set.
///
/// Cell `(x, y)` covers `[x·res, (x+1)·res) × [y·res, (y+1)·res)` in mm and its
/// center sits at `((x + ½)·res, (y + ½)·res)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// Build a grid from row-major occupancy flags; the boundary ring is forced occupied.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        mut occupied: Vec<bool>,
    ) -> Result<Self, PhantomError> {
        if width == 0 || height == 0 {
            return Err(PhantomError::EmptyGrid);
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(PhantomError::InvalidResolution(resolution));
        }
        if occupied.len() != width * height {
            return Err(PhantomError::SizeMismatch {
                expected: width * height,
                actual: occupied.len(),
            });
        }
        for x in 0..width {
            occupied[x] = true;
            occupied[(height - 1) * width + x] = true;
        }
        for y in 0..height {
            occupied[y * width] = true;
            occupied[y * width + width - 1] = true;
        }
        Ok(Self {
            width,
            height,
            resolution,
            occupied,
        })
    }

    /// Grid with every interior cell free.
    pub fn open(width: usize, height: usize, resolution: f64) -> Result<Self, PhantomError> {
        Self::new(width, height, resolution, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Row-major occupancy flags.
    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    pub fn index(&self, (x, y): Cell) -> usize {
        y * self.width + x
    }

    pub fn cell_of_index(&self, idx: usize) -> Cell {
        (idx % self.width, idx / self.width)
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn set_occupied(&mut self, cell: Cell, occupied: bool) {
        let (x, y) = cell;
        let on_boundary = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
        let idx = self.index(cell);
        self.occupied[idx] = occupied || on_boundary;
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    /// Physical extent `(width_mm, height_mm)`.
    pub fn extent(&self) -> Vec2 {
        Vec2::new(
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn cell_center(&self, (x, y): Cell) -> Vec2 {
        Vec2::new(
            (x as f64 + 0.5) * self.resolution,
            (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing a point, or `None` outside the grid.
    pub fn cell_at(&self, p: Vec2) -> Option<Cell> {
        if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let x = (p.x / self.resolution).floor() as usize;
        let y = (p.y / self.resolution).floor() as usize;
        (x < self.width && y < self.height).then_some((x, y))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.cell_at(p).is_some()
    }

    /// True when `p` lies in a free cell. Points outside the grid count as blocked.
    pub fn is_free_at(&self, p: Vec2) -> bool {
        self.cell_at(p).is_some_and(|c| self.is_free(c))
    }

    /// 8-connected neighbours inside the grid, with their step length in cells.
    pub fn neighbors8(&self, (x, y): Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        const OFFSETS: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx < 0 || ny < 0 || nx as usize >= self.width || ny as usize >= self.height {
                None
            } else {
                Some(((nx as usize, ny as usize), dx != 0 && dy != 0))
            }
        })
    }

    /// Labels of 8-connected free components; occupied cells get `None`.
    pub fn free_components(&self) -> Vec<Option<u32>> {
        let mut labels = vec![None; self.len()];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..self.len() {
            if self.occupied[start] || labels[start].is_some() {
                continue;
            }
            labels[start] = Some(next);
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let cell = self.cell_of_index(idx);
                for (n, _) in self.neighbors8(cell) {
                    let ni = self.index(n);
                    if !self.occupied[ni] && labels[ni].is_none() {
                        labels[ni] = Some(next);
                        stack.push(ni);
                    }
                }
            }
            next += 1;
        }
        labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_forced_occupied() {
        let g = OccupancyGrid::open(4, 3, 1.0).unwrap();
        assert!(g.is_occupied((0, 1)));
        assert!(g.is_occupied((3, 1)));
        assert!(g.is_occupied((2, 0)));
        assert!(g.is_occupied((2, 2)));
        assert!(g.is_free((1, 1)));
        assert!(g.is_free((2, 1)));
        assert_eq!(g.free_count(), 2);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            OccupancyGrid::open(0, 3, 1.0),
            Err(PhantomError::EmptyGrid)
        ));
        assert!(matches!(
            OccupancyGrid::open(3, 3, 0.0),
            Err(PhantomError::InvalidResolution(_))
        ));
        assert!(matches!(
            OccupancyGrid::new(3, 3, 1.0, vec![false; 8]),
            Err(PhantomError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn point_to_cell_mapping() {
        let g = OccupancyGrid::open(10, 10, 0.5).unwrap();
        assert_eq!(g.cell_at(Vec2::new(0.74, 1.26)), Some((1, 2)));
        assert_eq!(g.cell_at(Vec2::new(5.0, 1.0)), None);
        assert_eq!(g.cell_at(Vec2::new(-0.1, 1.0)), None);
        assert_eq!(g.cell_center((1, 2)), Vec2::new(0.75, 1.25));
    }

    #[test]
    fn components_split_by_wall() {
        let mut g = OccupancyGrid::open(7, 5, 1.0).unwrap();
        for y in 0..5 {
            g.set_occupied((3, y), true);
        }
        let labels = g.free_components();
        let left = labels[g.index((1, 2))].unwrap();
        let right = labels[g.index((5, 2))].unwrap();
        assert_ne!(left, right);
        assert_eq!(labels[g.index((3, 2))], None);
    }
}
