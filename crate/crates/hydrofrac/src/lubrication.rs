//! Poiseuille-type side velocities, the discrete continuity equation and the
//! regularised point source.

use crate::error::{HfError, Result};
use crate::mesh::{CellClass, CellSide, Classification, Grid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GRADIENT_FLOOR: f64 = 1e-30;

/// Time profile of the injection rate, `Q(t) = Q0 f(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceProfile {
    #[default]
    Constant,
    /// Constant rate that stops at `t_stop`.
    ShutIn { t_stop: f64 },
}

impl SourceProfile {
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            SourceProfile::Constant => 1.0,
            SourceProfile::ShutIn { t_stop } => {
                if t < *t_stop {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_{t0}^{t1} f dt`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            SourceProfile::Constant => t1 - t0,
            SourceProfile::ShutIn { t_stop } => (t1.min(*t_stop) - t0.min(*t_stop)).max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluidModel {
    /// Behaviour index, `0 < n <= 1`.
    pub n: f64,
    pub q0: f64,
    pub profile: SourceProfile,
    /// Leak-off rate per grid cell; empty means zero everywhere.
    pub leakoff: Vec<f64>,
}

impl FluidModel {
    pub fn new(n: f64, q0: f64) -> Result<Self> {
        let f = Self { n, q0, profile: SourceProfile::Constant, leakoff: Vec::new() };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0 && self.n <= 1.0) {
            return Err(HfError::Config(format!("behaviour index {} outside (0, 1]", self.n)));
        }
        if !(self.q0 > 0.0) {
            return Err(HfError::Config(format!("injection rate {} must be positive", self.q0)));
        }
        if self.leakoff.iter().any(|&q| q < 0.0) {
            return Err(HfError::Config("leak-off must be non-negative".into()));
        }
        Ok(())
    }

    pub fn leakoff_at(&self, id: usize) -> f64 {
        self.leakoff.get(id).copied().unwrap_or(0.0)
    }
}

/// Velocity component along a side for power-law flow.
pub fn side_velocity(w_side: f64, grad_along: f64, grad_cross: f64, n: f64) -> f64 {
    if w_side <= 0.0 {
        return 0.0;
    }
    if n == 1.0 {
        return -w_side * w_side * grad_along;
    }
    let g2 = grad_along * grad_along + grad_cross * grad_cross;
    if g2.sqrt() < GRADIENT_FLOOR {
        return 0.0;
    }
    -(w_side.powf(n + 1.0) * g2.powf(0.5 * (1.0 - n))).powf(1.0 / n) * grad_along
}

/// Effective conductance `-v / grad_along` (used for frozen-coefficient operators).
pub fn side_conductance(w_side: f64, grad_along: f64, grad_cross: f64, n: f64) -> f64 {
    if w_side <= 0.0 {
        return 0.0;
    }
    if n == 1.0 {
        return w_side * w_side;
    }
    let g2 = grad_along * grad_along + grad_cross * grad_cross;
    if g2.sqrt() < GRADIENT_FLOOR {
        return 0.0;
    }
    (w_side.powf(n + 1.0) * g2.powf(0.5 * (1.0 - n))).powf(1.0 / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SideKind {
    Poiseuille,
    UpwindSpeed,
    Asymptotic,
    Source,
    Zero,
}

/// Velocities and fluxes on the sides between fracture cells; positive
/// values point from `lo` to `hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SideFields {
    pub velocity: Vec<f64>,
    pub flux: Vec<f64>,
    pub kind: Vec<SideKind>,
}

impl SideFields {
    pub fn zeros(n: usize) -> Self {
        Self { velocity: vec![0.0; n], flux: vec![0.0; n], kind: vec![SideKind::Zero; n] }
    }
}

/// Where the injected fluid enters the discrete system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceMode {
    /// `Q0 f(t) / (dx dy)` added to the source cell's equation.
    Cell { slot: usize },
    /// Source-cell equation dropped; its four sides carry the injected flux.
    Regularized { slot: usize },
}

/// Per-slot `dw/dt` from the side fluxes (external cells are not in the list).
pub fn continuity_rhs(
    grid: &Grid,
    cls: &Classification,
    sides: &[CellSide],
    fields: &SideFields,
    fluid: &FluidModel,
    source: SourceMode,
    t: f64,
) -> Result<Vec<f64>> {
    if fields.flux.len() != sides.len() {
        return Err(HfError::DimensionMismatch { expected: sides.len(), got: fields.flux.len() });
    }
    let area = grid.cell_area();
    let mut rate = vec![0.0; cls.n_f()];
    for (s, q) in sides.iter().zip(&fields.flux) {
        let m = q * s.length / area;
        rate[s.lo] -= m;
        rate[s.hi] += m;
    }
    for (slot, &id) in cls.fracture().iter().enumerate() {
        rate[slot] -= fluid.leakoff_at(id);
    }
    match source {
        SourceMode::Cell { slot } => rate[slot] += fluid.q0 * fluid.profile.factor(t) / area,
        SourceMode::Regularized { slot } => rate[slot] = 0.0,
    }
    Ok(rate)
}

/// Fluxes per unit length through the vertical and horizontal sides of the
/// source cell; together they carry exactly `Q0`.
pub fn source_side_fluxes(dx: f64, dy: f64, q0: f64) -> (f64, f64) {
    (q0 / (PI * dy) * (dy / dx).atan(), q0 / (PI * dx) * (dx / dy).atan())
}

/// Opening assigned to the source cell: quadratic least-squares value from the
/// eight neighbours, or the mean of fracture side neighbours if any of them is
/// missing or not a channel cell.
pub fn extrapolate_source_opening(grid: &Grid, cls: &Classification, w: &[f64], source_id: usize) -> f64 {
    let (i, j) = grid.ij(source_id);
    let at = |di: i64, dj: i64| -> Option<f64> {
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if a < 0 || b < 0 || a as usize >= grid.nx || b as usize >= grid.ny {
            return None;
        }
        let id = grid.id(a as usize, b as usize);
        if cls.class(id).is_channel() {
            cls.slot(id).map(|s| w[s])
        } else {
            None
        }
    };
    let edges = [at(1, 0), at(-1, 0), at(0, 1), at(0, -1)];
    let corners = [at(1, 1), at(-1, 1), at(-1, -1), at(1, -1)];
    if edges.iter().chain(corners.iter()).all(|v| v.is_some()) {
        let e: f64 = edges.iter().map(|v| v.unwrap()).sum();
        let c: f64 = corners.iter().map(|v| v.unwrap()).sum();
        return 0.5 * e - 0.25 * c;
    }
    let avail: Vec<f64> = grid
        .side_neighbors(source_id)
        .into_iter()
        .filter(|&k| cls.class(k) != CellClass::External)
        .filter_map(|k| cls.slot(k).map(|s| w[s]))
        .collect();
    if avail.is_empty() {
        0.0
    } else {
        avail.iter().sum::<f64>() / avail.len() as f64
    }
}
