//! Uniform rectangular grid and the internal/ribbon/tip/external partition.

use crate::error::{HfError, Result};
use crate::geometry::{Point, Polygon, Rect};
use serde::Serialize;

/// Uniform grid; cell `(i, j)` (zero based) has its centre at
/// `origin + (i dx, j dy)`. A grid with `ny == 1` is a line layout for
/// plane-strain problems, with `dy` acting as the unit out-of-plane thickness.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: Point,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: Point) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0) {
            return Err(HfError::Config(format!("cell sizes must be positive (dx = {dx}, dy = {dy})")));
        }
        if nx == 0 || ny == 0 {
            return Err(HfError::Config("grid needs at least one cell per direction".into()));
        }
        Ok(Self { nx, ny, dx, dy, origin })
    }

    /// Odd-sized grid whose middle cell is centred on the coordinate origin.
    pub fn centered(half_x: usize, half_y: usize, dx: f64, dy: f64) -> Result<Self> {
        let origin = Point::new(-(half_x as f64) * dx, -(half_y as f64) * dy);
        Self::new(2 * half_x + 1, 2 * half_y + 1, dx, dy, origin)
    }

    /// Line of `2 half + 1` cells centred on the origin, unit thickness.
    pub fn line(half: usize, dx: f64) -> Result<Self> {
        Self::new(2 * half + 1, 1, dx, 1.0, Point::new(-(half as f64) * dx, 0.0))
    }

    pub fn is_line(&self) -> bool {
        self.ny == 1
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn center(&self, id: usize) -> Point {
        let (i, j) = self.ij(id);
        Point::new(self.origin.x + i as f64 * self.dx, self.origin.y + j as f64 * self.dy)
    }

    pub fn cell_rect(&self, id: usize) -> Rect {
        Rect::centered(self.center(id), self.dx, self.dy)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Cell whose closed square contains `p` (lower index on ties).
    pub fn cell_at(&self, p: Point) -> Option<usize> {
        let fi = ((p.x - self.origin.x) / self.dx + 0.5).floor();
        let fj = if self.is_line() { 0.0 } else { ((p.y - self.origin.y) / self.dy + 0.5).floor() };
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.id(fi as usize, fj as usize))
    }

    pub fn on_outer_ring(&self, id: usize) -> bool {
        let (i, j) = self.ij(id);
        i == 0 || i + 1 == self.nx || (!self.is_line() && (j == 0 || j + 1 == self.ny))
    }

    /// Side neighbours (up to four; two on a line).
    pub fn side_neighbors(&self, id: usize) -> Vec<usize> {
        let (i, j) = self.ij(id);
        let mut v = Vec::with_capacity(4);
        if i > 0 {
            v.push(self.id(i - 1, j));
        }
        if i + 1 < self.nx {
            v.push(self.id(i + 1, j));
        }
        if j > 0 {
            v.push(self.id(i, j - 1));
        }
        if j + 1 < self.ny {
            v.push(self.id(i, j + 1));
        }
        v
    }

    /// Side and corner neighbours.
    pub fn all_neighbors(&self, id: usize) -> Vec<usize> {
        let (i, j) = self.ij(id);
        let mut v = Vec::with_capacity(8);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny {
                    v.push(self.id(a as usize, b as usize));
                }
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellClass {
    Internal,
    Ribbon,
    Tip,
    External,
}

impl CellClass {
    pub fn is_fracture(self) -> bool {
        self != CellClass::External
    }

    pub fn is_channel(self) -> bool {
        matches!(self, CellClass::Internal | CellClass::Ribbon)
    }
}

/// The fracture outline used for classification.
#[derive(Clone, Copy, Debug)]
pub enum Outline<'a> {
    /// Straight fracture on a line grid, occupying `[left, right]`.
    Line { left: f64, right: f64 },
    Closed(&'a Polygon),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// A side shared by two fracture cells; `lo -> hi` points along `+axis`.
/// `lo` and `hi` are fracture slots, not grid ids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSide {
    pub lo: usize,
    pub hi: usize,
    pub axis: Axis,
    pub length: f64,
    pub spacing: f64,
    pub midpoint: Point,
}

impl CellSide {
    pub fn direction(&self) -> Point {
        match self.axis {
            Axis::X => Point::new(1.0, 0.0),
            Axis::Y => Point::new(0.0, 1.0),
        }
    }
}

/// Partition of the grid into the four collections. Lists are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    class: Vec<CellClass>,
    fracture: Vec<usize>,
    slot: Vec<Option<usize>>,
    ribbon: Vec<usize>,
    tip: Vec<usize>,
}

impl Classification {
    /// Builds the partition from a tip mask and an "inside, not tip" mask.
    pub fn from_masks(grid: &Grid, tip: &[bool], inside: &[bool]) -> Self {
        let n = grid.len();
        let mut class = vec![CellClass::External; n];
        for id in 0..n {
            if tip[id] {
                class[id] = CellClass::Tip;
            } else if inside[id] {
                class[id] = CellClass::Internal;
            }
        }
        for id in 0..n {
            if class[id] == CellClass::Internal
                && grid.side_neighbors(id).iter().any(|&k| tip[k])
            {
                class[id] = CellClass::Ribbon;
            }
        }
        let mut fracture = Vec::new();
        let mut slot = vec![None; n];
        let mut ribbon = Vec::new();
        let mut tips = Vec::new();
        for (id, c) in class.iter().enumerate() {
            if c.is_fracture() {
                slot[id] = Some(fracture.len());
                fracture.push(id);
            }
            match c {
                CellClass::Ribbon => ribbon.push(id),
                CellClass::Tip => tips.push(id),
                _ => {}
            }
        }
        Self { class, fracture, slot, ribbon, tip: tips }
    }

    pub fn class(&self, id: usize) -> CellClass {
        self.class[id]
    }

    pub fn classes(&self) -> &[CellClass] {
        &self.class
    }

    /// Grid ids of fracture cells (internal, ribbon and tip), row-major.
    pub fn fracture(&self) -> &[usize] {
        &self.fracture
    }

    pub fn slot(&self, id: usize) -> Option<usize> {
        self.slot[id]
    }

    pub fn ribbons(&self) -> &[usize] {
        &self.ribbon
    }

    pub fn tips(&self) -> &[usize] {
        &self.tip
    }

    pub fn n_f(&self) -> usize {
        self.fracture.len()
    }

    pub fn n_rib(&self) -> usize {
        self.ribbon.len()
    }

    pub fn n_tip(&self) -> usize {
        self.tip.len()
    }

    pub fn n_int(&self) -> usize {
        self.class.iter().filter(|c| **c == CellClass::Internal).count()
    }

    /// Sides shared by two fracture cells, in row-major order of the lower cell.
    pub fn sides(&self, grid: &Grid) -> Vec<CellSide> {
        let mut out = Vec::new();
        for &id in &self.fracture {
            let (i, j) = grid.ij(id);
            let c = grid.center(id);
            let lo = self.slot[id].expect("fracture cell has a slot");
            if i + 1 < grid.nx {
                if let Some(hi) = self.slot[grid.id(i + 1, j)] {
                    out.push(CellSide {
                        lo,
                        hi,
                        axis: Axis::X,
                        length: grid.dy,
                        spacing: grid.dx,
                        midpoint: Point::new(c.x + 0.5 * grid.dx, c.y),
                    });
                }
            }
            if j + 1 < grid.ny {
                if let Some(hi) = self.slot[grid.id(i, j + 1)] {
                    out.push(CellSide {
                        lo,
                        hi,
                        axis: Axis::Y,
                        length: grid.dx,
                        spacing: grid.dy,
                        midpoint: Point::new(c.x, c.y + 0.5 * grid.dy),
                    });
                }
            }
        }
        out
    }
}

/// Classifies every cell against the fracture outline.
pub fn classify(grid: &Grid, outline: Outline<'_>) -> Result<Classification> {
    let (tip, inside) = match outline {
        Outline::Line { left, right } => line_masks(grid, left, right)?,
        Outline::Closed(poly) => polygon_masks(grid, poly)?,
    };
    let cls = Classification::from_masks(grid, &tip, &inside);
    if cls.n_int() == 0 {
        return Err(HfError::DegenerateFront);
    }
    Ok(cls)
}

fn line_masks(grid: &Grid, left: f64, right: f64) -> Result<(Vec<bool>, Vec<bool>)> {
    if !grid.is_line() {
        return Err(HfError::Config("line outline needs a line grid".into()));
    }
    if !(left < right) {
        return Err(HfError::DegenerateFront);
    }
    let x0 = grid.origin.x;
    let kl = ((left - x0) / grid.dx + 0.5).floor();
    let kr = ((right - x0) / grid.dx - 0.5).ceil();
    if kl < 1.0 || kr > (grid.nx - 2) as f64 {
        return Err(HfError::DomainTooSmall);
    }
    let (kl, kr) = (kl as usize, kr as usize);
    let mut tip = vec![false; grid.len()];
    let mut inside = vec![false; grid.len()];
    tip[kl] = true;
    tip[kr] = true;
    for c in inside.iter_mut().take(kr).skip(kl + 1) {
        *c = true;
    }
    Ok((tip, inside))
}

fn polygon_masks(grid: &Grid, poly: &Polygon) -> Result<(Vec<bool>, Vec<bool>)> {
    if poly.len() < 3 {
        return Err(HfError::DegenerateFront);
    }
    if let Some((a, b)) = poly.self_intersection() {
        return Err(HfError::SelfIntersecting(a, b));
    }
    let n = grid.len();
    let mut tip = vec![false; n];
    let index_range = |lo: f64, hi: f64, o: f64, h: f64, count: usize| -> Option<(usize, usize)> {
        let a = ((lo - o) / h + 0.5).floor() - 1.0;
        let b = ((hi - o) / h + 0.5).floor() + 1.0;
        if a < 0.0 || b > (count - 1) as f64 {
            return None;
        }
        Some((a as usize, b as usize))
    };
    for (a, b) in poly.edges() {
        let (i0, i1) = index_range(a.x.min(b.x), a.x.max(b.x), grid.origin.x, grid.dx, grid.nx)
            .ok_or(HfError::DomainTooSmall)?;
        let (j0, j1) = index_range(a.y.min(b.y), a.y.max(b.y), grid.origin.y, grid.dy, grid.ny)
            .ok_or(HfError::DomainTooSmall)?;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let id = grid.id(i, j);
                if !tip[id] && grid.cell_rect(id).touches_segment(a, b) {
                    if grid.on_outer_ring(id) {
                        return Err(HfError::DomainTooSmall);
                    }
                    tip[id] = true;
                }
            }
        }
    }
    let bb = poly.bounding_box();
    let mut inside = vec![false; n];
    for id in 0..n {
        let c = grid.center(id);
        if !tip[id] && bb.contains(c) && poly.contains(c) {
            inside[id] = true;
        }
    }
    Ok((tip, inside))
}

/// Incremental update after outward propagation: previously fracture cells
/// never revert to external, and newly reached cells must neighbour an old tip.
pub fn update_collections(
    grid: &Grid,
    prev: &Classification,
    outline: Outline<'_>,
) -> Result<Classification> {
    let (mut tip, inside) = match outline {
        Outline::Line { left, right } => line_masks(grid, left, right)?,
        Outline::Closed(poly) => polygon_masks(grid, poly)?,
    };
    for id in 0..grid.len() {
        let was_fracture = prev.class(id).is_fracture();
        let now_fracture = tip[id] || inside[id];
        if was_fracture && !now_fracture {
            tip[id] = true;
        }
        if now_fracture && !was_fracture {
            let near_old_tip = grid
                .all_neighbors(id)
                .iter()
                .any(|&k| prev.class(k) == CellClass::Tip);
            if !near_old_tip {
                return Err(HfError::UpdateIntervalViolated);
            }
        }
    }
    let cls = Classification::from_masks(grid, &tip, &inside);
    if cls.n_int() == 0 {
        return Err(HfError::DegenerateFront);
    }
    Ok(cls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(grid: &Grid, poly: &Polygon) -> Vec<CellClass> {
        let n = grid.len();
        let tip: Vec<bool> = (0..n)
            .map(|id| {
                let r = grid.cell_rect(id);
                poly.edges().any(|(a, b)| r.touches_segment(a, b))
            })
            .collect();
        let inside: Vec<bool> = (0..n).map(|id| !tip[id] && poly.contains(grid.center(id))).collect();
        (0..n)
            .map(|id| {
                if tip[id] {
                    CellClass::Tip
                } else if inside[id] {
                    if grid.side_neighbors(id).iter().any(|&k| tip[k]) {
                        CellClass::Ribbon
                    } else {
                        CellClass::Internal
                    }
                } else {
                    CellClass::External
                }
            })
            .collect()
    }

    #[test]
    fn circle_matches_brute_force_oracle() {
        let grid = Grid::centered(6, 6, 1.0, 1.0).unwrap();
        let poly = Polygon::circle(Point::default(), 2.5, 64);
        let cls = classify(&grid, Outline::Closed(&poly)).unwrap();
        assert_eq!(cls.classes(), brute_force(&grid, &poly).as_slice());
        assert!(cls.n_int() > 0 && cls.n_rib() > 0 && cls.n_tip() > 0);
        assert_eq!(cls.n_f(), cls.n_int() + cls.n_rib() + cls.n_tip());
    }

    #[test]
    fn tiny_front_is_degenerate() {
        let grid = Grid::centered(4, 4, 1.0, 1.0).unwrap();
        let poly = Polygon::circle(Point::default(), 0.3, 16);
        assert!(matches!(classify(&grid, Outline::Closed(&poly)), Err(HfError::DegenerateFront)));
    }

    #[test]
    fn front_on_outer_ring_is_rejected() {
        let grid = Grid::centered(3, 3, 1.0, 1.0).unwrap();
        let poly = Polygon::circle(Point::default(), 2.9, 32);
        assert!(matches!(classify(&grid, Outline::Closed(&poly)), Err(HfError::DomainTooSmall)));
    }

    #[test]
    fn translation_by_one_pitch_shifts_classes() {
        let grid = Grid::centered(7, 7, 1.0, 1.0).unwrap();
        let a = Polygon::circle(Point::new(0.1, -0.2), 2.7, 48);
        let b = Polygon::new(a.points.iter().map(|p| *p + Point::new(1.0, 0.0)).collect());
        let ca = classify(&grid, Outline::Closed(&a)).unwrap();
        let cb = classify(&grid, Outline::Closed(&b)).unwrap();
        for j in 0..grid.ny {
            for i in 0..grid.nx - 1 {
                assert_eq!(ca.class(grid.id(i, j)), cb.class(grid.id(i + 1, j)));
            }
        }
    }

    #[test]
    fn line_layout_classes() {
        let grid = Grid::line(8, 0.2).unwrap();
        let cls = classify(&grid, Outline::Line { left: -1.0, right: 1.0 }).unwrap();
        // centre 8 at 0, tips at 3 and 13 (x = -1 and x = 1 are cell centres)
        assert_eq!(cls.tips(), &[3, 13]);
        assert_eq!(cls.ribbons(), &[4, 12]);
        assert_eq!(cls.n_f(), 11);
        let sides = cls.sides(&grid);
        assert_eq!(sides.len(), 10);
    }

    #[test]
    fn line_front_on_cell_boundary_belongs_to_the_inner_cell() {
        let grid = Grid::line(8, 1.0).unwrap();
        let cls = classify(&grid, Outline::Line { left: -4.5, right: 4.5 }).unwrap();
        assert_eq!(cls.tips(), &[4, 12]);
    }

    #[test]
    fn incremental_update_agrees_with_full_reclassification() {
        let grid = Grid::centered(10, 10, 1.0, 1.0).unwrap();
        let c0 = Point::new(0.05, 0.1);
        let mut cls = classify(&grid, Outline::Closed(&Polygon::circle(c0, 3.0, 96))).unwrap();
        for k in 1..=10 {
            let poly = Polygon::circle(c0, 3.0 + 0.3 * k as f64, 96);
            let inc = update_collections(&grid, &cls, Outline::Closed(&poly)).unwrap();
            let full = classify(&grid, Outline::Closed(&poly)).unwrap();
            assert_eq!(inc, full, "step {k}");
            cls = inc;
        }
    }

    #[test]
    fn jump_over_two_cells_is_rejected() {
        let grid = Grid::centered(10, 10, 1.0, 1.0).unwrap();
        let cls = classify(&grid, Outline::Closed(&Polygon::circle(Point::default(), 3.0, 96))).unwrap();
        let far = Polygon::circle(Point::default(), 5.5, 96);
        assert!(matches!(
            update_collections(&grid, &cls, Outline::Closed(&far)),
            Err(HfError::UpdateIntervalViolated)
        ));
    }
}
