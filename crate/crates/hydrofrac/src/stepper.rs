//! Time integration of the coupled opening / ribbon-distance system:
//! forward Euler under a spectral stability bound and a weighted implicit
//! scheme solved by frozen-coefficient fixed-point iterations.

use crate::elastic::{InfluenceMatrix, OffsetTable, StressField};
use crate::error::{HfError, Result};
use crate::front::{reconstruct_envelope, FrontPolyline};
use crate::geometry::Point;
use crate::lubrication::{
    continuity_rhs, extrapolate_source_opening, side_conductance, side_velocity, source_side_fluxes, FluidModel,
    SideFields, SideKind, SourceMode,
};
use crate::mesh::{update_collections, Axis, CellClass, CellSide, Classification, Grid, Outline};
use crate::tip_asymptotics::{RibbonState, TipModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Explicit,
    Implicit,
}

/// Flux assignment on sides shared by a ribbon and a tip cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TipFlux {
    /// `w_side v* max(0, n . e)` on sides of activated tips.
    #[default]
    UpwindSpeed,
    /// `max(0, n . e) v* phi_w(v*, r_mid)` on every ribbon/tip side.
    Asymptotic,
    /// Plain Poiseuille flux with the raw tip pressure on activated tips.
    StatisticalPressure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    pub mode: Mode,
    /// Fixed step; `None` selects the explicit stability bound.
    pub dt: Option<f64>,
    /// Fraction of the explicit bound actually used.
    pub safety: f64,
    pub omega: f64,
    pub tip_flux: TipFlux,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Planar front reconstruction and collection update every this many steps.
    pub reconstruct_every: usize,
    /// Explicit steps between spectral-radius refreshes.
    pub spectral_every: usize,
    /// Reject a fixed explicit step exceeding the bound instead of proceeding.
    pub strict_dt: bool,
    /// Largest relative change of a channel opening in one explicit step.
    pub max_change: f64,
    /// Fail a step whose balance residual exceeds `balance_tol`.
    pub strict_balance: bool,
    pub balance_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Explicit,
            dt: None,
            safety: 0.2,
            omega: 1.0,
            tip_flux: TipFlux::UpwindSpeed,
            fp_tol: 1e-8,
            fp_max_iter: 50,
            reconstruct_every: 1,
            spectral_every: 50,
            strict_dt: false,
            max_change: 0.1,
            strict_balance: false,
            balance_tol: 1e-6,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(HfError::Config(format!("safety factor {} outside (0, 1]", self.safety)));
        }
        if !(self.max_change > 0.0) {
            return Err(HfError::Config("relative change limit must be positive".into()));
        }
        if !(self.fp_tol > 0.0) {
            return Err(HfError::Config("fixed-point tolerance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(HfError::Config(format!("scheme weight {} outside [0, 1]", self.omega)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(HfError::Config("time step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostCounters {
    /// Products `G w` spent on time integration.
    pub matvecs: u64,
    /// Products spent estimating the explicit stability bound.
    pub spectral_matvecs: u64,
    pub explicit_steps: u64,
    pub implicit_steps: u64,
    pub fixed_point_iterations: u64,
    /// Dense factorizations (one per fixed-point iteration).
    pub factorizations: u64,
    pub collection_updates: u64,
}

/// Central-zone explicit bound `K dz^3 T_ref`.
pub fn max_stable_dt_central(dz: f64, k_cfl: f64, t_ref: f64) -> f64 {
    k_cfl * dz * dz * dz * t_ref
}

/// Near-front bound `dx / v*`; `None` when the front is arrested.
pub fn max_stable_dt_front(dx: f64, v_star: f64) -> Option<f64> {
    if v_star > 0.0 {
        Some(dx / v_star)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub dz: f64,
    pub mesh_advances: f64,
    pub measured_matvecs_per_advance: f64,
    pub measured_steps_per_advance: f64,
    pub measured_fixed_point_per_step: f64,
    pub measured_factorizations_per_step: f64,
    pub model_explicit_matvecs: f64,
    pub model_implicit_matvecs: f64,
    pub model_ratio: f64,
}

/// Measured counts per mesh-size advance next to the cost models
/// `3 / dz^2` (explicit) and `n_sts n_ext n_int` (implicit).
pub fn cost_report(counters: &CostCounters, dz: f64, mesh_advances: f64, model_sts: f64, model_ext: f64, model_int: f64) -> CostReport {
    let steps = (counters.explicit_steps + counters.implicit_steps) as f64;
    let implicit = counters.implicit_steps.max(1) as f64;
    let model_explicit = 3.0 / (dz * dz);
    let model_implicit = model_sts * model_ext * model_int;
    CostReport {
        dz,
        mesh_advances,
        measured_matvecs_per_advance: counters.matvecs as f64 / mesh_advances,
        measured_steps_per_advance: steps / mesh_advances,
        measured_fixed_point_per_step: counters.fixed_point_iterations as f64 / implicit,
        measured_factorizations_per_step: counters.factorizations as f64 / implicit,
        model_explicit_matvecs: model_explicit,
        model_implicit_matvecs: model_implicit,
        model_ratio: model_implicit / model_explicit,
    }
}

/// Running fluid-volume balance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MassAudit {
    pub v0: f64,
    pub pumped: f64,
    pub leaked: f64,
    pub last_residual: f64,
    pub max_residual: f64,
}

impl MassAudit {
    pub fn residual(&self, volume: f64) -> f64 {
        ((volume - self.v0) - (self.pumped - self.leaked)).abs() / volume.abs().max(f64::MIN_POSITIVE)
    }
}

/// Front representation matching the grid layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum FrontGeometry {
    Line { left: f64, right: f64 },
    Planar(FrontPolyline),
}

/// Inputs of a fracture state; `w` and `ribbon_r` follow the slot and ribbon
/// order of `cls`.
#[derive(Clone, Debug)]
pub struct FractureInit {
    pub grid: Grid,
    pub cls: Classification,
    pub w: Vec<f64>,
    pub ribbon_r: Vec<f64>,
    pub front: FrontGeometry,
    pub fluid: FluidModel,
    pub tip: TipModel,
    pub stress: StressField,
    pub t0: f64,
    pub source: usize,
    pub regularize_source: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepEvent {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub front: f64,
    pub volume: f64,
    pub residual: f64,
    pub matvecs: u64,
}

#[derive(Clone, Debug, Default)]
struct Spectral {
    rho: f64,
    vector: Vec<f64>,
    age: usize,
}

#[derive(Clone, Debug)]
pub struct Fracture {
    pub grid: Grid,
    pub cls: Classification,
    table: OffsetTable,
    g: InfluenceMatrix,
    sides: Vec<CellSide>,
    pub stress: StressField,
    pub fluid: FluidModel,
    pub tip: TipModel,
    pub w: Vec<f64>,
    pub ribbons: Vec<RibbonState>,
    pub front: FrontGeometry,
    pub t: f64,
    pub counters: CostCounters,
    pub audit: MassAudit,
    source: usize,
    regularize: bool,
    ribbon_of: Vec<Option<usize>>,
    tip_of: Vec<Option<usize>>,
    spectral: Option<Spectral>,
    steps_since_update: usize,
}

/// Upper bound on relative discrepancy between implicit iterates.
const LARGE_CHANGE: f64 = 1e300;

impl Fracture {
    pub fn new(init: FractureInit) -> Result<Self> {
        init.fluid.validate()?;
        init.tip.validate()?;
        let cls = init.cls;
        if init.w.len() != cls.n_f() {
            return Err(HfError::DimensionMismatch { expected: cls.n_f(), got: init.w.len() });
        }
        if init.ribbon_r.len() != cls.n_rib() {
            return Err(HfError::DimensionMismatch { expected: cls.n_rib(), got: init.ribbon_r.len() });
        }
        if init.stress.contrast.len() != init.grid.len() {
            return Err(HfError::DimensionMismatch { expected: init.grid.len(), got: init.stress.contrast.len() });
        }
        if !cls.class(init.source).is_fracture() {
            return Err(HfError::Config("source cell lies outside the fracture".into()));
        }
        let table = OffsetTable::new(&init.grid, 1.0);
        let g = InfluenceMatrix::assemble(&init.grid, &cls, &table);
        let sides = cls.sides(&init.grid);
        let ribbons = cls
            .ribbons()
            .iter()
            .zip(&init.ribbon_r)
            .map(|(&cell, &r)| RibbonState { cell, r, v: 0.0, w_frozen: 0.0 })
            .collect();
        let regularize = init.regularize_source && !init.grid.is_line();
        let mut f = Self {
            grid: init.grid,
            cls,
            table,
            g,
            sides,
            stress: init.stress,
            fluid: init.fluid,
            tip: init.tip,
            w: init.w,
            ribbons,
            front: init.front,
            t: init.t0,
            counters: CostCounters::default(),
            audit: MassAudit::default(),
            source: init.source,
            regularize,
            ribbon_of: Vec::new(),
            tip_of: Vec::new(),
            spectral: None,
            steps_since_update: 0,
        };
        f.rebuild_maps();
        if f.regularize && f.cls.class(f.source) != CellClass::Internal {
            f.regularize = false;
        }
        if f.regularize {
            let s = f.source_slot();
            f.w[s] = extrapolate_source_opening(&f.grid, &f.cls, &f.w, f.source);
        }
        f.refresh_speeds();
        if let FrontGeometry::Planar(poly) = &f.front {
            let pts = poly.points.clone();
            f.front = FrontGeometry::Planar(FrontPolyline::from_points(&f.grid, &f.cls, pts)?);
        }
        f.audit.v0 = f.volume();
        Ok(f)
    }

    fn rebuild_maps(&mut self) {
        let n = self.grid.len();
        self.ribbon_of = vec![None; n];
        for (k, r) in self.ribbons.iter().enumerate() {
            self.ribbon_of[r.cell] = Some(k);
        }
        self.tip_of = vec![None; n];
        for (k, &id) in self.cls.tips().iter().enumerate() {
            self.tip_of[id] = Some(k);
        }
    }

    pub fn influence(&self) -> &InfluenceMatrix {
        &self.g
    }

    pub fn sides(&self) -> &[CellSide] {
        &self.sides
    }

    pub fn source_cell(&self) -> usize {
        self.source
    }

    pub fn source_slot(&self) -> usize {
        self.cls.slot(self.source).expect("source is a fracture cell")
    }

    pub fn source_mode(&self) -> SourceMode {
        if self.regularize {
            SourceMode::Regularized { slot: self.source_slot() }
        } else {
            SourceMode::Cell { slot: self.source_slot() }
        }
    }

    pub fn is_regularized(&self) -> bool {
        self.regularize
    }

    /// Fluid volume, excluding the regularised source cell.
    pub fn volume(&self) -> f64 {
        let skip = if self.regularize { Some(self.source_slot()) } else { None };
        let s: f64 = self.w.iter().enumerate().filter(|(k, _)| Some(*k) != skip).map(|(_, w)| w).sum();
        s * self.grid.cell_area()
    }

    /// Right front position (line) or area-equivalent radius (planar).
    pub fn front_size(&self) -> f64 {
        match &self.front {
            FrontGeometry::Line { right, .. } => *right,
            FrontGeometry::Planar(p) => (p.polygon().signed_area() / std::f64::consts::PI).sqrt(),
        }
    }

    pub fn balance_residual(&self) -> f64 {
        self.audit.residual(self.volume())
    }

    /// Net pressure on the fracture cells.
    pub fn pressure(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.w.len()];
        self.g.apply(&self.w, &mut p);
        self.counters.matvecs += 1;
        for (slot, &id) in self.cls.fracture().iter().enumerate() {
            p[slot] += self.stress.contrast[id];
        }
        p
    }

    /// Pressure without touching the counters.
    pub fn pressure_of(&self, w: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; w.len()];
        self.g.apply(w, &mut p);
        for (slot, &id) in self.cls.fracture().iter().enumerate() {
            p[slot] += self.stress.contrast[id];
        }
        p
    }

    pub fn tip_normal(&self, k: usize) -> Point {
        match &self.front {
            FrontGeometry::Line { .. } => {
                let c = self.grid.center(self.cls.tips()[k]);
                Point::new(c.x.signum(), 0.0)
            }
            FrontGeometry::Planar(p) => p.tip_normals[k],
        }
    }

    /// A tip is activated once the front has passed its centre.
    pub fn tip_active(&self, k: usize) -> bool {
        match &self.front {
            FrontGeometry::Line { left, right } => {
                let x = self.grid.center(self.cls.tips()[k]).x;
                if x > 0.0 {
                    x <= *right
                } else {
                    x >= *left
                }
            }
            FrontGeometry::Planar(p) => p.activated[k],
        }
    }

    fn refresh_speeds(&mut self) {
        for k in 0..self.ribbons.len() {
            let slot = self.cls.slot(self.ribbons[k].cell).unwrap();
            let w = self.w[slot];
            self.ribbons[k].w_frozen = w;
            if let Ok(v) = self.tip.speed_from_opening(w, self.ribbons[k].r) {
                self.ribbons[k].v = v;
            }
        }
    }

    fn slot_at(&self, id: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.grid.ij(id);
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if a < 0 || b < 0 || a as usize >= self.grid.nx || b as usize >= self.grid.ny {
            return None;
        }
        let nid = self.grid.id(a as usize, b as usize);
        if self.cls.class(nid).is_channel() {
            self.cls.slot(nid)
        } else {
            None
        }
    }

    fn cross_gradient(&self, side: &CellSide, p: &[f64]) -> f64 {
        if self.fluid.n == 1.0 || self.grid.is_line() {
            return 0.0;
        }
        let (di, dj, h) = match side.axis {
            Axis::X => (0, 1, self.grid.dy),
            Axis::Y => (1, 0, self.grid.dx),
        };
        let mut acc = 0.0;
        let mut count = 0.0;
        for slot in [side.lo, side.hi] {
            let id = self.cls.fracture()[slot];
            let up = self.slot_at(id, di, dj);
            let dn = self.slot_at(id, -di, -dj);
            let g = match (up, dn) {
                (Some(u), Some(d)) => Some((p[u] - p[d]) / (2.0 * h)),
                (Some(u), None) => Some((p[u] - p[slot]) / h),
                (None, Some(d)) => Some((p[slot] - p[d]) / h),
                (None, None) => None,
            };
            if let Some(g) = g {
                acc += g;
                count += 1.0;
            }
        }
        if count > 0.0 {
            acc / count
        } else {
            0.0
        }
    }

    /// `(ribbon slot, tip index, +1 if the ribbon is the lower cell)` for a ribbon/tip side.
    fn ribbon_tip(&self, side: &CellSide) -> Option<(usize, usize, f64)> {
        let (a, b) = (self.cls.fracture()[side.lo], self.cls.fracture()[side.hi]);
        match (self.cls.class(a), self.cls.class(b)) {
            (CellClass::Ribbon, CellClass::Tip) => Some((side.lo, self.tip_of[b]?, 1.0)),
            (CellClass::Tip, CellClass::Ribbon) => Some((side.hi, self.tip_of[a]?, -1.0)),
            _ => None,
        }
    }

    fn ribbon_index_of_slot(&self, slot: usize) -> Option<usize> {
        self.ribbon_of[self.cls.fracture()[slot]]
    }

    /// Side velocities and fluxes for pressure `p` and the current ribbon state.
    pub fn side_fields(&self, p: &[f64], strategy: TipFlux) -> SideFields {
        let mut f = SideFields::zeros(self.sides.len());
        let (qx, qy) = source_side_fluxes(self.grid.dx, self.grid.dy, self.fluid.q0 * self.fluid.profile.factor(self.t));
        let src_slot = if self.regularize { Some(self.source_slot()) } else { None };
        for (k, side) in self.sides.iter().enumerate() {
            let ids = (self.cls.fracture()[side.lo], self.cls.fracture()[side.hi]);
            let w_side = 0.5 * (self.w[side.lo] + self.w[side.hi]);
            if src_slot.is_some() && (Some(side.lo) == src_slot || Some(side.hi) == src_slot) {
                let mag = match side.axis {
                    Axis::X => qx,
                    Axis::Y => qy,
                };
                let q = if Some(side.lo) == src_slot { mag } else { -mag };
                f.flux[k] = q;
                f.velocity[k] = if w_side > 0.0 { q / w_side } else { 0.0 };
                f.kind[k] = SideKind::Source;
                continue;
            }
            let channel = (self.cls.class(ids.0).is_channel(), self.cls.class(ids.1).is_channel());
            let poiseuille = |f: &mut SideFields| {
                let grad = (p[side.hi] - p[side.lo]) / side.spacing;
                let v = side_velocity(w_side, grad, self.cross_gradient(side, p), self.fluid.n);
                f.velocity[k] = v;
                f.flux[k] = w_side * v;
                f.kind[k] = SideKind::Poiseuille;
            };
            if channel.0 && channel.1 {
                poiseuille(&mut f);
                continue;
            }
            let Some((rib_slot, tip_k, sign)) = self.ribbon_tip(side) else {
                continue;
            };
            let Some(rk) = self.ribbon_index_of_slot(rib_slot) else {
                continue;
            };
            let rib = &self.ribbons[rk];
            let n = self.tip_normal(tip_k);
            let e = side.direction() * sign;
            let along = n.dot(e).max(0.0);
            match strategy {
                TipFlux::UpwindSpeed => {
                    if self.tip_active(tip_k) {
                        let v = rib.v * along;
                        f.velocity[k] = sign * v;
                        f.flux[k] = sign * w_side * v;
                        f.kind[k] = SideKind::UpwindSpeed;
                    }
                }
                TipFlux::Asymptotic => {
                    let r_mid = rib.r - 0.5 * side.spacing * n.dot(e);
                    let q = along * rib.v * self.tip.uau_opening(rib.v, r_mid);
                    f.flux[k] = sign * q;
                    f.velocity[k] = if w_side > 0.0 { sign * q / w_side } else { 0.0 };
                    f.kind[k] = SideKind::Asymptotic;
                }
                TipFlux::StatisticalPressure => {
                    if self.tip_active(tip_k) {
                        poiseuille(&mut f);
                    }
                }
            }
        }
        f
    }

    /// `dw/dt` per slot at the current state.
    pub fn rate(&mut self, strategy: TipFlux) -> Result<(Vec<f64>, SideFields)> {
        let p = self.pressure();
        let fields = self.side_fields(&p, strategy);
        let r = continuity_rhs(&self.grid, &self.cls, &self.sides, &fields, &self.fluid, self.source_mode(), self.t)?;
        Ok((r, fields))
    }

    fn step_sources(&self, t0: f64, dt: f64, omega: f64) -> (f64, f64) {
        let prof = &self.fluid.profile;
        let pumped = self.fluid.q0 * ((1.0 - omega) * prof.factor(t0) + omega * prof.factor(t0 + dt)) * dt;
        let skip = if self.regularize { Some(self.source) } else { None };
        let leak: f64 = self
            .cls
            .fracture()
            .iter()
            .filter(|&&id| Some(id) != skip)
            .map(|&id| self.fluid.leakoff_at(id))
            .sum();
        (pumped, leak * self.grid.cell_area() * dt)
    }

    /// Conductance factor `kappa` per side from the frozen state (zero for
    /// sides not carrying a Poiseuille flux).
    fn conductances(&self, p: &[f64], strategy: TipFlux, stiffening: bool) -> Vec<f64> {
        let area = self.grid.cell_area();
        let src_slot = if self.regularize { Some(self.source_slot()) } else { None };
        let stiff = if stiffening { 1.0 / self.fluid.n } else { 1.0 };
        self.sides
            .iter()
            .map(|side| {
                if src_slot.is_some() && (Some(side.lo) == src_slot || Some(side.hi) == src_slot) {
                    return 0.0;
                }
                let ids = (self.cls.fracture()[side.lo], self.cls.fracture()[side.hi]);
                let both = self.cls.class(ids.0).is_channel() && self.cls.class(ids.1).is_channel();
                let statistical = strategy == TipFlux::StatisticalPressure
                    && self.ribbon_tip(side).is_some_and(|(_, k, _)| self.tip_active(k));
                if !(both || statistical) {
                    return 0.0;
                }
                let w_side = 0.5 * (self.w[side.lo] + self.w[side.hi]);
                let grad = (p[side.hi] - p[side.lo]) / side.spacing;
                let c = side_conductance(w_side, grad, self.cross_gradient(side, p), self.fluid.n);
                stiff * w_side * c * side.length / (side.spacing * area)
            })
            .collect()
    }

    fn apply_laplacian(&self, kappa: &[f64], p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (side, &k) in self.sides.iter().zip(kappa) {
            if k == 0.0 {
                continue;
            }
            let d = k * (p[side.hi] - p[side.lo]);
            out[side.lo] += d;
            out[side.hi] -= d;
        }
    }

    /// Spectral radius of the frozen linearised operator `L G` by power iteration.
    pub fn spectral_radius(&mut self, strategy: TipFlux, iterations: usize) -> f64 {
        let p = self.pressure_of(&self.w);
        let kappa = self.conductances(&p, strategy, true);
        let n = self.w.len();
        let mut x = match &self.spectral {
            Some(s) if s.vector.len() == n => s.vector.clone(),
            _ => (0..n)
                .map(|s| {
                    let (i, j) = self.grid.ij(self.cls.fracture()[s]);
                    if (i + j) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect(),
        };
        let mut gx = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut rho = 0.0;
        for _ in 0..iterations {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            self.g.apply(&x, &mut gx);
            self.counters.spectral_matvecs += 1;
            self.apply_laplacian(&kappa, &gx, &mut y);
            rho = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            std::mem::swap(&mut x, &mut y);
        }
        self.spectral = Some(Spectral { rho, vector: x, age: 0 });
        rho
    }

    /// Largest explicit step allowed by the spectral and near-front bounds.
    pub fn explicit_bound(&mut self, cfg: &StepConfig) -> f64 {
        let rho = match &self.spectral {
            Some(s) if s.age < cfg.spectral_every && s.vector.len() == self.w.len() => s.rho,
            Some(s) if s.vector.len() == self.w.len() => self.spectral_radius(cfg.tip_flux, 8),
            _ => self.spectral_radius(cfg.tip_flux, 60),
        };
        let mut bound = if rho > 0.0 { 2.0 / rho } else { f64::INFINITY };
        let h = self.grid.dx.min(if self.grid.is_line() { self.grid.dx } else { self.grid.dy });
        for r in &self.ribbons {
            if let Some(b) = max_stable_dt_front(h, r.v) {
                bound = bound.min(b);
            }
        }
        bound
    }

    /// One forward-Euler step of at most `dt`, shortened so that no channel
    /// opening changes by more than `max_change` of itself; returns the step taken.
    pub fn explicit_step(&mut self, cfg: &StepConfig, dt: f64) -> Result<f64> {
        self.refresh_speeds();
        let (rate, _) = self.rate(cfg.tip_flux)?;
        let mut dt = dt;
        let skip = if self.regularize { Some(self.source_slot()) } else { None };
        for (slot, &id) in self.cls.fracture().iter().enumerate() {
            let w = self.w[slot];
            if Some(slot) != skip && self.cls.class(id).is_channel() && w > 0.0 && rate[slot] != 0.0 {
                dt = dt.min(cfg.max_change * w / rate[slot].abs());
            }
        }
        let (pumped, leaked) = self.step_sources(self.t, dt, 0.0);
        for k in 0..self.ribbons.len() {
            let rib = self.ribbons[k];
            match self.tip {
                TipModel::Toughness { .. } => {
                    let r = self.tip.distance_from_opening_toughness(rib.w_frozen)?;
                    self.ribbons[k].v = ((r - rib.r) / dt).max(0.0);
                    self.ribbons[k].r = r;
                }
                TipModel::Monomial { .. } => self.ribbons[k].r += dt * rib.v,
            }
        }
        for (w, r) in self.w.iter_mut().zip(&rate) {
            *w += dt * r;
        }
        if self.regularize {
            let s = self.source_slot();
            self.w[s] = extrapolate_source_opening(&self.grid, &self.cls, &self.w, self.source);
        }
        self.audit.pumped += pumped;
        self.audit.leaked += leaked;
        self.t += dt;
        self.counters.explicit_steps += 1;
        if let Some(s) = self.spectral.as_mut() {
            s.age += 1;
        }
        self.finish_step(cfg)?;
        Ok(dt)
    }

    /// One weighted implicit step of length `dt`.
    pub fn implicit_step(&mut self, cfg: &StepConfig, dt: f64) -> Result<()> {
        let omega = cfg.omega;
        self.refresh_speeds();
        let w0 = self.w.clone();
        let rib0 = self.ribbons.clone();
        let explicit_part = if omega < 1.0 { Some(self.rate(cfg.tip_flux)?.0) } else { None };
        let (pumped, leaked) = self.step_sources(self.t, dt, omega);
        let t0 = self.t;
        let n = self.w.len();
        let area = self.grid.cell_area();
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..cfg.fp_max_iter {
            self.counters.fixed_point_iterations += 1;
            self.t = t0 + dt;
            let p = self.pressure();
            let kappa = self.conductances(&p, cfg.tip_flux, false);
            let mut jac = vec![0.0; n * n];
            let mut s = vec![0.0; n];
            let g = self.g.as_slice();
            for (side, &k) in self.sides.iter().zip(&kappa) {
                if k == 0.0 {
                    continue;
                }
                let (lo, hi) = (side.lo, side.hi);
                let (slo, shi) = (self.stress.contrast[self.cls.fracture()[lo]], self.stress.contrast[self.cls.fracture()[hi]]);
                for c in 0..n {
                    let d = k * (g[hi * n + c] - g[lo * n + c]);
                    jac[lo * n + c] += d;
                    jac[hi * n + c] -= d;
                }
                s[lo] += k * (shi - slo);
                s[hi] -= k * (shi - slo);
            }
            let fields = self.side_fields(&p, cfg.tip_flux);
            for (kk, side) in self.sides.iter().enumerate() {
                let m = side.length / area;
                match fields.kind[kk] {
                    SideKind::UpwindSpeed => {
                        // q = 0.5 (w_lo + w_hi) u, linear in the openings
                        let u = fields.velocity[kk];
                        let c = 0.5 * u * m;
                        for (row, sg) in [(side.lo, -1.0), (side.hi, 1.0)] {
                            jac[row * n + side.lo] += sg * c;
                            jac[row * n + side.hi] += sg * c;
                        }
                    }
                    SideKind::Asymptotic | SideKind::Source => {
                        s[side.lo] -= fields.flux[kk] * m;
                        s[side.hi] += fields.flux[kk] * m;
                    }
                    _ => {}
                }
            }
            for (slot, &id) in self.cls.fracture().iter().enumerate() {
                s[slot] -= self.fluid.leakoff_at(id);
            }
            let mut a = DMatrix::<f64>::zeros(n, n);
            let mut b = DVector::<f64>::zeros(n);
            for r in 0..n {
                for c in 0..n {
                    a[(r, c)] = -dt * omega * jac[r * n + c];
                }
                a[(r, r)] += 1.0;
                b[r] = w0[r] + dt * omega * s[r];
                if let Some(e) = &explicit_part {
                    b[r] += dt * (1.0 - omega) * e[r];
                }
            }
            match self.source_mode() {
                SourceMode::Cell { slot } => {
                    b[slot] += dt * omega * self.fluid.q0 * self.fluid.profile.factor(t0 + dt) / area;
                }
                SourceMode::Regularized { slot } => {
                    for c in 0..n {
                        a[(slot, c)] = 0.0;
                    }
                    a[(slot, slot)] = 1.0;
                    b[slot] = 0.0;
                    for (c, wgt) in self.source_stencil() {
                        a[(slot, c)] -= wgt;
                    }
                }
            }
            self.counters.factorizations += 1;
            let sol = a.lu().solve(&b).ok_or(HfError::SingularSystem)?;
            let w_new: Vec<f64> = sol.iter().copied().collect();
            let mut r_change: f64 = 0.0;
            let mut new_ribs = rib0.clone();
            for (k, rib) in new_ribs.iter_mut().enumerate() {
                let slot = self.cls.slot(rib.cell).unwrap();
                let (r, v) = self.tip.implicit_se_step(w_new[slot], rib0[k].r, rib0[k].v, dt, omega)?;
                r_change = r_change.max((r - self.ribbons[k].r).abs() / self.grid.dx);
                rib.r = r;
                rib.v = v;
                rib.w_frozen = w_new[slot];
            }
            let scale = w_new.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let w_change = w_new.iter().zip(&self.w).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            let change = w_change.max(r_change);
            history.push(if change.is_finite() { change } else { LARGE_CHANGE });
            self.w = w_new;
            self.ribbons = new_ribs;
            self.sync_line_front();
            if change < cfg.fp_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            self.t = t0;
            return Err(HfError::FixedPointDiverged { iterations: cfg.fp_max_iter, history });
        }
        self.t = t0 + dt;
        self.audit.pumped += pumped;
        self.audit.leaked += leaked;
        self.counters.implicit_steps += 1;
        self.finish_step(cfg)
    }

    /// `(slot, weight)` pairs of the source-opening extrapolation.
    fn source_stencil(&self) -> Vec<(usize, f64)> {
        let id = self.source;
        let edges = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        let corners = [(1, 1), (-1, 1), (-1, -1), (1, -1)];
        let e: Vec<Option<usize>> = edges.iter().map(|&(a, b)| self.slot_at(id, a, b)).collect();
        let c: Vec<Option<usize>> = corners.iter().map(|&(a, b)| self.slot_at(id, a, b)).collect();
        if e.iter().chain(&c).all(|s| s.is_some()) {
            let mut out: Vec<(usize, f64)> = e.iter().map(|s| (s.unwrap(), 0.5)).collect();
            out.extend(c.iter().map(|s| (s.unwrap(), -0.25)));
            return out;
        }
        let avail: Vec<usize> = self
            .grid
            .side_neighbors(id)
            .into_iter()
            .filter_map(|k| if self.cls.class(k) != CellClass::External { self.cls.slot(k) } else { None })
            .collect();
        let wgt = 1.0 / avail.len().max(1) as f64;
        avail.into_iter().map(|s| (s, wgt)).collect()
    }

    fn sync_line_front(&mut self) {
        if let FrontGeometry::Line { left, right } = &mut self.front {
            for r in &self.ribbons {
                let x = self.grid.center(r.cell).x;
                if x > 0.0 {
                    *right = x + r.r;
                } else {
                    *left = x - r.r;
                }
            }
        }
    }

    fn finish_step(&mut self, cfg: &StepConfig) -> Result<()> {
        self.steps_since_update += 1;
        let update_now = self.grid.is_line() || self.steps_since_update >= cfg.reconstruct_every.max(1);
        if update_now {
            self.steps_since_update = 0;
            self.update_front()?;
        }
        let res = self.balance_residual();
        self.audit.last_residual = res;
        self.audit.max_residual = self.audit.max_residual.max(res);
        if !self.w.iter().all(|w| w.is_finite()) {
            return Err(HfError::Unstable { t: self.t, reason: "non-finite opening".into() });
        }
        Ok(())
    }

    /// Rebuilds the front from the ribbon distances and updates the collections.
    pub fn update_front(&mut self) -> Result<()> {
        let new_cls = match &self.front {
            FrontGeometry::Line { .. } => {
                self.sync_line_front();
                let FrontGeometry::Line { left, right } = self.front else { unreachable!() };
                update_collections(&self.grid, &self.cls, Outline::Line { left, right })?
            }
            FrontGeometry::Planar(_) => {
                let poly = reconstruct_envelope(&self.grid, &self.cls, &self.ribbons)?;
                let cls = update_collections(&self.grid, &self.cls, Outline::Closed(&poly.polygon()))?;
                self.front = FrontGeometry::Planar(poly);
                cls
            }
        };
        if new_cls != self.cls {
            self.remap(new_cls)?;
        }
        Ok(())
    }

    fn distance_to_front(&self, id: usize) -> f64 {
        let c = self.grid.center(id);
        match &self.front {
            FrontGeometry::Line { left, right } => {
                if c.x > 0.0 {
                    right - c.x
                } else {
                    c.x - left
                }
            }
            FrontGeometry::Planar(p) => p.polygon().signed_distance(c),
        }
    }

    fn remap(&mut self, cls: Classification) -> Result<()> {
        let old = std::mem::replace(&mut self.cls, cls);
        let w: Vec<f64> = self
            .cls
            .fracture()
            .iter()
            .map(|&id| old.slot(id).map_or(0.0, |s| self.w[s]))
            .collect();
        let floor = 1e-6 * self.grid.dx;
        let ribbons: Vec<RibbonState> = self
            .cls
            .ribbons()
            .iter()
            .map(|&id| match self.ribbon_of[id] {
                Some(k) => self.ribbons[k],
                None => RibbonState { cell: id, r: self.distance_to_front(id).max(floor), v: 0.0, w_frozen: 0.0 },
            })
            .collect();
        let vector = self.spectral.as_ref().map(|s| {
            self.cls.fracture().iter().map(|&id| old.slot(id).map_or(0.0, |k| s.vector.get(k).copied().unwrap_or(0.0))).collect::<Vec<f64>>()
        });
        self.w = w;
        self.ribbons = ribbons;
        self.g = InfluenceMatrix::assemble(&self.grid, &self.cls, &self.table);
        self.sides = self.cls.sides(&self.grid);
        self.rebuild_maps();
        self.spectral = vector.map(|v| Spectral { rho: 0.0, vector: v, age: usize::MAX });
        if let FrontGeometry::Planar(p) = &self.front {
            let pts = p.points.clone();
            self.front = FrontGeometry::Planar(FrontPolyline::from_points(&self.grid, &self.cls, pts)?);
        }
        if self.regularize && self.cls.class(self.source) != CellClass::Internal {
            return Err(HfError::Unstable { t: self.t, reason: "source cell reached by the front".into() });
        }
        self.refresh_speeds();
        self.counters.collection_updates += 1;
        Ok(())
    }

    /// Advances to `t_end`, calling `observer` after every step.
    pub fn advance(&mut self, cfg: &StepConfig, t_end: f64, mut observer: impl FnMut(&StepEvent)) -> Result<()> {
        cfg.validate()?;
        while let Some(ev) = self.step(cfg, t_end)? {
            observer(&ev);
        }
        Ok(())
    }

    /// One step towards `t_end`; `None` once `t_end` is reached.
    pub fn step(&mut self, cfg: &StepConfig, t_end: f64) -> Result<Option<StepEvent>> {
        let eps = 1e-12 * t_end.abs().max(1.0);
        if self.t >= t_end - eps {
            return Ok(None);
        }
        let remaining = t_end - self.t;
        let dt = match cfg.mode {
            Mode::Explicit => {
                let bound = self.explicit_bound(cfg);
                match cfg.dt {
                    Some(dt) => {
                        if cfg.strict_dt && dt > bound {
                            return Err(HfError::StepTooLarge { dt, bound });
                        }
                        dt
                    }
                    None => cfg.safety * bound,
                }
            }
            Mode::Implicit => cfg.dt.unwrap_or(remaining),
        };
        let dt = if dt >= remaining - eps { remaining } else { dt };
        let dt = match cfg.mode {
            Mode::Explicit => self.explicit_step(cfg, dt)?,
            Mode::Implicit => {
                self.implicit_step(cfg, dt)?;
                dt
            }
        };
        if cfg.strict_balance && self.audit.last_residual > cfg.balance_tol {
            return Err(HfError::Unstable {
                t: self.t,
                reason: format!("balance residual {:.3e} above {:.1e}", self.audit.last_residual, cfg.balance_tol),
            });
        }
        Ok(Some(StepEvent {
            step: self.counters.explicit_steps + self.counters.implicit_steps,
            t: self.t,
            dt,
            front: self.front_size(),
            volume: self.volume(),
            residual: self.audit.last_residual,
            matvecs: self.counters.matvecs,
        }))
    }

    /// Cell centres, openings and pressures of the fracture cells.
    pub fn profile(&self) -> Vec<(Point, CellClass, f64, f64)> {
        let p = self.pressure_of(&self.w);
        self.cls
            .fracture()
            .iter()
            .enumerate()
            .map(|(s, &id)| (self.grid.center(id), self.cls.class(id), self.w[s], p[s]))
            .collect()
    }
}
