//! Influence coefficients of the hypersingular elasticity operator and the
//! dense pressure evaluation `p = G w + stress contrast`.

use crate::error::{HfError, Result};
use crate::mesh::{Classification, Grid};
use std::f64::consts::PI;

/// Pressure at a receiver offset `(di dx, dj dy)` from the centre of a
/// rectangular element of unit opening (plane elasticity modulus E' = 1).
pub fn influence_coefficient(di: i64, dj: i64, dx: f64, dy: f64) -> f64 {
    let x = di as f64 * dx;
    let y = dj as f64 * dy;
    let f = |a: f64, b: f64| (a * a + b * b).sqrt() / (a * b);
    let (xp, xm) = (x - 0.5 * dx, x + 0.5 * dx);
    let (yp, ym) = (y - 0.5 * dy, y + 0.5 * dy);
    (f(xp, yp) + f(xm, ym) - f(xm, yp) - f(xp, ym)) / (8.0 * PI)
}

/// Plane-strain counterpart for a straight crack (unit thickness line grid).
pub fn line_influence_coefficient(di: i64, dx: f64) -> f64 {
    let x = di as f64 * dx;
    -(1.0 / (x - 0.5 * dx) - 1.0 / (x + 0.5 * dx)) / (4.0 * PI)
}

/// Kernel values for every offset in `(-(nx-1)..nx) x (-(ny-1)..ny)`.
#[derive(Clone, Debug)]
pub struct OffsetTable {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl OffsetTable {
    pub fn new(grid: &Grid, e_prime: f64) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let (wx, wy) = (2 * nx - 1, 2 * ny - 1);
        let mut values = vec![0.0; wx * wy];
        for b in 0..wy {
            for a in 0..wx {
                let di = a as i64 - (nx as i64 - 1);
                let dj = b as i64 - (ny as i64 - 1);
                values[b * wx + a] = e_prime
                    * if grid.is_line() {
                        line_influence_coefficient(di, grid.dx)
                    } else {
                        influence_coefficient(di, dj, grid.dx, grid.dy)
                    };
            }
        }
        Self { nx, ny, values }
    }

    pub fn get(&self, di: i64, dj: i64) -> f64 {
        let a = (di + self.nx as i64 - 1) as usize;
        let b = (dj + self.ny as i64 - 1) as usize;
        self.values[b * (2 * self.nx - 1) + a]
    }
}

/// Dense `N_f x N_f` matrix over the fracture cells of a classification.
#[derive(Clone, Debug)]
pub struct InfluenceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl InfluenceMatrix {
    pub fn assemble(grid: &Grid, cls: &Classification, table: &OffsetTable) -> Self {
        let cells = cls.fracture();
        let n = cells.len();
        let ij: Vec<(i64, i64)> = cells
            .iter()
            .map(|&id| {
                let (i, j) = grid.ij(id);
                (i as i64, j as i64)
            })
            .collect();
        let mut data = vec![0.0; n * n];
        for (r, &(ir, jr)) in ij.iter().enumerate() {
            let row = &mut data[r * n..(r + 1) * n];
            for (c, &(ic, jc)) in ij.iter().enumerate() {
                row[c] = table.get(ir - ic, jr - jc);
            }
        }
        Self { n, data }
    }

    /// Direct evaluation of every pair, bypassing the offset table.
    pub fn assemble_direct(grid: &Grid, cls: &Classification, e_prime: f64) -> Self {
        let cells = cls.fracture();
        let n = cells.len();
        let mut data = vec![0.0; n * n];
        for (r, &a) in cells.iter().enumerate() {
            let (ir, jr) = grid.ij(a);
            for (c, &b) in cells.iter().enumerate() {
                let (ic, jc) = grid.ij(b);
                let (di, dj) = (ir as i64 - ic as i64, jr as i64 - jc as i64);
                data[r * n + c] = e_prime
                    * if grid.is_line() {
                        line_influence_coefficient(di, grid.dx)
                    } else {
                        influence_coefficient(di, dj, grid.dx, grid.dy)
                    };
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = G x` with a fixed summation order per row.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            *o = dot(self.row(r), x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Stress contrast per grid cell (compression positive).
#[derive(Clone, Debug, PartialEq)]
pub struct StressField {
    pub contrast: Vec<f64>,
}

impl StressField {
    pub fn homogeneous(grid: &Grid) -> Self {
        Self { contrast: vec![0.0; grid.len()] }
    }
}

/// Net pressure on the fracture cells; `w` is indexed by fracture slot.
pub fn pressure(
    cls: &Classification,
    g: &InfluenceMatrix,
    w: &[f64],
    stress: &StressField,
) -> Result<Vec<f64>> {
    if w.len() != cls.n_f() {
        return Err(HfError::DimensionMismatch { expected: cls.n_f(), got: w.len() });
    }
    if g.dim() != cls.n_f() {
        return Err(HfError::DimensionMismatch { expected: cls.n_f(), got: g.dim() });
    }
    let mut p = vec![0.0; w.len()];
    g.apply(w, &mut p);
    for (slot, &id) in cls.fracture().iter().enumerate() {
        p[slot] += stress.contrast[id];
    }
    Ok(p)
}
