//! Run configuration, scenario orchestration and result files.

use crate::benchmarks::{
    discretization_diagnostic, error_metrics, perturbed_initial_state, self_similar, DiscretizationReport, ErrorMetrics,
    Geometry, InitialState, SelfSimilarSolution,
};
use crate::error::{HfError, Result};
use crate::front::write_front_csv;
use crate::geometry::Point;
use crate::lubrication::SourceProfile;
use crate::mesh::CellClass;
use crate::stepper::{cost_report, CostCounters, CostReport, Fracture, FrontGeometry, Mode, StepConfig, StepEvent};
use crate::tip_asymptotics::TipModel;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Smallest number of cells per initial half-length or radius.
pub const MIN_CELLS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidConfig {
    /// `newtonian` or `shear-thinning` (n = 0.6); overrides `n`.
    pub preset: Option<String>,
    pub n: f64,
    pub q0: f64,
    pub shut_in: Option<f64>,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self { preset: None, n: 1.0, q0: 1.0, shut_in: None }
    }
}

impl FluidConfig {
    pub fn behaviour_index(&self) -> Result<f64> {
        match self.preset.as_deref() {
            None => Ok(self.n),
            Some("newtonian") => Ok(1.0),
            Some("shear-thinning") => Ok(0.6),
            Some(other) => Err(HfError::Config(format!("unknown fluid preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TipConfig {
    /// `viscosity`, `viscosity-newtonian`, `toughness`, `leakoff-newtonian` or `monomial-custom`.
    pub regime: String,
    pub k_ic: f64,
    /// `w = a_w v*^beta r^alpha`, read by `monomial-custom` only.
    pub a_w: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl Default for TipConfig {
    fn default() -> Self {
        Self { regime: "viscosity".into(), k_ic: 0.0, a_w: None, alpha: None, beta: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per initial half-length (straight) or radius (penny).
    pub cells: usize,
    /// Largest front size, relative to the initial one, the domain must hold;
    /// by default the self-similar growth up to `t_end` plus 10%.
    pub reach: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cells: 5, reach: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    SelfSimilar,
    Perturbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    /// Opening factor used by `perturbed` starts.
    pub eps_w: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { kind: InitialKind::SelfSimilar, eps_w: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimesConfig {
    pub t0: f64,
    pub t_end: f64,
    /// Times at which profile and front files are written.
    pub profiles: Vec<f64>,
}

impl Default for TimesConfig {
    fn default() -> Self {
        Self { t0: 1.0, t_end: 100.0, profiles: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write every this many steps to the time series (the last step is always written).
    pub series_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), series_every: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub fluid: FluidConfig,
    pub tip: TipConfig,
    pub grid: GridConfig,
    pub stepping: StepConfig,
    pub initial: InitialConfig,
    pub times: TimesConfig,
    pub output: OutputConfig,
    pub regularize_source: bool,
    /// Recorded in the summary; the solver itself draws no random numbers.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::Kgd,
            fluid: FluidConfig::default(),
            tip: TipConfig::default(),
            grid: GridConfig::default(),
            stepping: StepConfig::default(),
            initial: InitialConfig::default(),
            times: TimesConfig::default(),
            output: OutputConfig::default(),
            regularize_source: true,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.cells < MIN_CELLS {
            return Err(HfError::Config(format!("need at least {MIN_CELLS} cells per initial size, got {}", self.grid.cells)));
        }
        if self.grid.reach.is_some_and(|r| !(r >= 1.0)) {
            return Err(HfError::Config("grid reach must be at least 1".into()));
        }
        let n = self.fluid.behaviour_index()?;
        if !(n > 0.0 && n <= 1.0) {
            return Err(HfError::Config(format!("behaviour index {n} outside (0, 1]")));
        }
        self.tip_model()?;
        self.stepping.validate()?;
        if !(self.times.t0 > 0.0 && self.times.t_end > self.times.t0) {
            return Err(HfError::Config("need 0 < t0 < t_end".into()));
        }
        if self.times.profiles.iter().any(|&t| t < self.times.t0 || t > self.times.t_end) {
            return Err(HfError::Config("profile times must lie in [t0, t_end]".into()));
        }
        if self.initial.kind == InitialKind::Perturbed && !(self.initial.eps_w > 0.0) {
            return Err(HfError::Config("perturbation factor must be positive".into()));
        }
        if self.output.series_every == 0 {
            return Err(HfError::Config("series stride must be positive".into()));
        }
        Ok(())
    }

    pub fn tip_model(&self) -> Result<TipModel> {
        if self.tip.regime == "monomial-custom" {
            return match (self.tip.a_w, self.tip.alpha, self.tip.beta) {
                (Some(a_w), Some(alpha), Some(beta)) => TipModel::custom(a_w, alpha, beta),
                _ => Err(HfError::Config("monomial-custom needs a_w, alpha and beta".into())),
            };
        }
        TipModel::preset(&self.tip.regime, self.fluid.behaviour_index()?, self.tip.k_ic)
    }

    fn reach(&self) -> Result<f64> {
        if let Some(r) = self.grid.reach {
            return Ok(r);
        }
        let sol = self.reference()?;
        Ok(1.1 * (self.times.t_end / self.times.t0).powf(sol.gamma_x) + 1.0 / self.grid.cells as f64)
    }

    fn initial_state(&self) -> Result<InitialState> {
        Ok(InitialState {
            cells: self.grid.cells,
            t0: self.times.t0,
            eps_w: if self.initial.kind == InitialKind::Perturbed { self.initial.eps_w } else { 1.0 },
            reach: self.reach()?,
            regularize_source: self.regularize_source,
        })
    }

    /// Self-similar reference for this configuration.
    pub fn reference(&self) -> Result<std::sync::Arc<SelfSimilarSolution>> {
        self_similar(self.geometry, self.fluid.behaviour_index()?)
    }

    /// Fracture state at `t0`.
    pub fn build(&self) -> Result<Fracture> {
        self.validate()?;
        let sol = self.reference()?;
        let mut init = perturbed_initial_state(&sol, &self.initial_state()?)?;
        init.tip = self.tip_model()?;
        init.fluid.q0 = self.fluid.q0;
        if let Some(t_stop) = self.fluid.shut_in {
            init.fluid.profile = SourceProfile::ShutIn { t_stop };
        }
        Fracture::new(init)
    }

    /// Time at which the self-similar front has advanced by `cells` initial cells.
    pub fn mesh_advance_time(&self, cells: f64) -> Result<f64> {
        let sol = self.reference()?;
        let ratio = 1.0 + cells / self.grid.cells as f64;
        Ok(self.times.t0 * ratio.powf(1.0 / sol.gamma_x))
    }

    /// Whether the configuration matches the assumptions of the reference solution.
    pub fn has_reference(&self) -> bool {
        let viscous = matches!(self.tip.regime.as_str(), "viscosity" | "viscosity-power-law" | "viscosity-newtonian");
        viscous && self.fluid.shut_in.is_none() && self.fluid.q0 == 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub status: String,
    pub message: Option<String>,
    pub geometry: Geometry,
    pub n: f64,
    pub cells: usize,
    pub mode: Mode,
    pub seed: u64,
    pub t0: f64,
    pub t_end: f64,
    pub t_reached: f64,
    pub steps: u64,
    pub counters: CostCounters,
    pub front: f64,
    pub volume: f64,
    pub max_balance_residual: f64,
    pub reference_xi: Option<f64>,
    pub error_metrics: Option<ErrorMetrics>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn class_name(c: CellClass) -> &'static str {
    match c {
        CellClass::Internal => "internal",
        CellClass::Ribbon => "ribbon",
        CellClass::Tip => "tip",
        CellClass::External => "external",
    }
}

/// Profile CSV: `x,y,class,w,p` per fracture cell.
pub fn write_profile_csv<W: Write>(out: W, frac: &Fracture) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "class", "w", "p"])?;
    for (c, class, wv, pv) in frac.profile() {
        w.serialize((c.x, c.y, class_name(class), wv, pv))?;
    }
    w.flush()?;
    Ok(())
}

/// Front CSV: `x,y,n_x,n_y` (the two end points with outward normals on a line).
pub fn write_front<W: Write>(out: W, frac: &Fracture) -> Result<()> {
    match &frac.front {
        FrontGeometry::Line { left, right } => write_front_csv(
            out,
            &[Point::new(*left, 0.0), Point::new(*right, 0.0)],
            &[Point::new(-1.0, 0.0), Point::new(1.0, 0.0)],
        ),
        FrontGeometry::Planar(p) => p.write_csv(out),
    }
}

const SERIES_HEADER: [&str; 8] = ["step", "t", "dt", "front", "volume", "balance_residual", "matvecs", "spectral_matvecs"];

/// Runs the configuration and writes series, profiles, fronts and the summary into `output.dir`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut frac = cfg.build()?;
    let reference = if cfg.has_reference() { Some(cfg.reference()?) } else { None };
    let mut series = csv::Writer::from_writer(create(&dir.join("series.csv"))?);
    series.write_record(SERIES_HEADER)?;
    series.serialize((0u64, frac.t, 0.0, frac.front_size(), frac.volume(), 0.0, 0u64, 0u64))?;
    let mut profiles: Vec<f64> = cfg.times.profiles.clone();
    profiles.sort_by(f64::total_cmp);
    let mut next_profile = 0;
    let write_snapshot = |frac: &Fracture, k: usize| -> Result<()> {
        write_profile_csv(create(&dir.join(format!("profile_{k:03}.csv")))?, frac)?;
        write_front(create(&dir.join(format!("front_{k:03}.csv")))?, frac)
    };
    let mut checkpoint = frac.clone();
    let mut failure = None;
    loop {
        let target = profiles.get(next_profile).copied().unwrap_or(cfg.times.t_end);
        if frac.t >= target - 1e-12 * target {
            if next_profile < profiles.len() {
                write_snapshot(&frac, next_profile)?;
                next_profile += 1;
                continue;
            }
            break;
        }
        match frac.step(&cfg.stepping, target) {
            Ok(Some(ev)) => {
                if ev.step % cfg.output.series_every == 0 || ev.t >= cfg.times.t_end - 1e-12 * cfg.times.t_end {
                    write_event(&mut series, &ev, &frac)?;
                }
                if ev.step % 256 == 0 {
                    checkpoint = frac.clone();
                }
            }
            Ok(None) => {}
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    series.flush()?;
    let state = if failure.is_some() { &checkpoint } else { &frac };
    if failure.is_some() {
        write_profile_csv(create(&dir.join("last_state.csv"))?, state)?;
        write_front(create(&dir.join("last_front.csv"))?, state)?;
    } else {
        write_profile_csv(create(&dir.join("profile_final.csv"))?, &frac)?;
        write_front(create(&dir.join("front_final.csv"))?, &frac)?;
    }
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        status: if failure.is_some() { "failed".into() } else { "ok".into() },
        message: failure.as_ref().map(|e| e.to_string()),
        geometry: cfg.geometry,
        n: cfg.fluid.behaviour_index()?,
        cells: cfg.grid.cells,
        mode: cfg.stepping.mode,
        seed: cfg.seed,
        t0: cfg.times.t0,
        t_end: cfg.times.t_end,
        t_reached: frac.t,
        steps: frac.counters.explicit_steps + frac.counters.implicit_steps,
        counters: frac.counters,
        front: frac.front_size(),
        volume: frac.volume(),
        max_balance_residual: frac.audit.max_residual,
        reference_xi: reference.as_ref().map(|s| s.xi),
        error_metrics: if failure.is_none() { reference.as_ref().map(|s| error_metrics(&frac, s)) } else { None },
    };
    let mut out = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    out.flush()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn write_event<W: Write>(series: &mut csv::Writer<W>, ev: &StepEvent, frac: &Fracture) -> Result<()> {
    series.serialize((ev.step, ev.t, ev.dt, ev.front, ev.volume, ev.residual, ev.matvecs, frac.counters.spectral_matvecs))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub dz: f64,
    pub cells: usize,
    /// Spectral estimate `min(2 / rho, dx / v*)` at `t0`.
    pub dt_bound: f64,
    /// Largest fixed step found stable over the horizon.
    pub dt_max: f64,
    /// `dt_max / (dz^3 t0)`.
    pub prefactor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Fit `dt_max = prefactor dz^slope t0` in log-log coordinates.
    pub slope: f64,
    pub prefactor: f64,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Options of the stability sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Fixed-step explicit steps run per trial.
    pub horizon_steps: usize,
    /// Relative width of the final bisection bracket.
    pub rtol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { horizon_steps: 400, rtol: 0.01 }
    }
}

/// Whether `horizon` fixed explicit steps of size `dt` keep the openings of
/// the channel cells positive and finite and the balance residual bounded.
pub fn explicit_step_is_stable(frac: &Fracture, cfg: &StepConfig, dt: f64, horizon: usize) -> bool {
    let mut f = frac.clone();
    let mut step_cfg = cfg.clone();
    step_cfg.mode = Mode::Explicit;
    step_cfg.dt = Some(dt);
    step_cfg.strict_dt = false;
    step_cfg.max_change = f64::INFINITY;
    for _ in 0..horizon {
        if f.step(&step_cfg, f64::INFINITY).is_err() {
            return false;
        }
        let positive = f
            .cls
            .fracture()
            .iter()
            .zip(&f.w)
            .all(|(&id, &w)| w.is_finite() && (w > 0.0 || !f.cls.class(id).is_channel()));
        if !positive || !(f.audit.last_residual <= cfg.balance_tol) {
            return false;
        }
    }
    true
}

/// Bisects for the largest stable explicit step at each `dz = 1 / cells`.
pub fn stability_sweep(cfg: &RunConfig, dzs: &[f64], opts: SweepOptions) -> Result<SweepReport> {
    if dzs.len() < 4 {
        return Err(HfError::Config("the sweep needs at least four mesh sizes".into()));
    }
    let mut rows = Vec::new();
    for &dz in dzs {
        let cells = (1.0 / dz).round() as usize;
        let mut c = cfg.clone();
        c.grid.cells = cells;
        c.grid.reach = Some(c.grid.reach.unwrap_or(1.0).max(3.0));
        let mut frac = c.build()?;
        let bound = frac.explicit_bound(&c.stepping);
        let mut lo = 0.25 * bound;
        while !explicit_step_is_stable(&frac, &c.stepping, lo, opts.horizon_steps) {
            lo *= 0.5;
            if lo < 1e-6 * bound {
                return Err(HfError::Unstable { t: frac.t, reason: format!("no stable step found at dz = {dz}") });
            }
        }
        let mut hi = 2.0 * bound;
        while explicit_step_is_stable(&frac, &c.stepping, hi, opts.horizon_steps) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 * bound {
                break;
            }
        }
        while hi - lo > opts.rtol * lo {
            let mid = 0.5 * (lo + hi);
            if explicit_step_is_stable(&frac, &c.stepping, mid, opts.horizon_steps) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dz_actual = 1.0 / cells as f64;
        rows.push(SweepRow { dz: dz_actual, cells, dt_bound: bound, dt_max: lo, prefactor: lo / (dz_actual.powi(3) * c.times.t0) });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dz.ln(), (r.dt_max / cfg.times.t0).ln())).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(SweepReport { rows, slope, prefactor: intercept.exp() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeRow {
    pub scheme: String,
    /// Hardware dependent; reported, never asserted.
    pub wall_seconds: f64,
    pub steps: u64,
    pub counters: CostCounters,
    pub front_error: f64,
    pub opening_linf: f64,
    pub fracture_cells: usize,
    pub ribbon_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub dz: f64,
    pub t_end: f64,
    pub rows: Vec<SchemeRow>,
    pub cost: CostReport,
}

/// Explicit versus implicit (2 and 4 steps) advances of one mesh size.
pub fn compare_schemes(cfg: &RunConfig) -> Result<CompareReport> {
    let sol = cfg.reference()?;
    let t_end = cfg.mesh_advance_time(1.0)?;
    let mut rows = Vec::new();
    let mut explicit_counters = CostCounters::default();
    let mut schemes: Vec<(String, StepConfig)> = vec![("explicit".into(), StepConfig { mode: Mode::Explicit, dt: None, ..cfg.stepping.clone() })];
    for k in [2usize, 4] {
        let dt = (t_end - cfg.times.t0) / k as f64;
        schemes.push((format!("implicit-{k}"), StepConfig { mode: Mode::Implicit, dt: Some(dt), ..cfg.stepping.clone() }));
    }
    for (name, step_cfg) in schemes {
        let mut frac = cfg.build()?;
        let clock = Instant::now();
        frac.advance(&step_cfg, t_end, |_| {})?;
        let wall = clock.elapsed().as_secs_f64();
        let e = error_metrics(&frac, &sol);
        if step_cfg.mode == Mode::Explicit {
            explicit_counters = frac.counters;
        }
        rows.push(SchemeRow {
            scheme: name,
            wall_seconds: wall,
            steps: frac.counters.explicit_steps + frac.counters.implicit_steps,
            counters: frac.counters,
            front_error: e.front_error,
            opening_linf: e.opening_linf,
            fracture_cells: frac.cls.n_f(),
            ribbon_cells: frac.cls.n_rib(),
        });
    }
    let dz = 1.0 / cfg.grid.cells as f64;
    Ok(CompareReport { dz, t_end, rows, cost: cost_report(&explicit_counters, dz, 1.0, 4.0, 6.0, 7.0) })
}

/// Reference profile CSV and a JSON summary of the self-similar solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceSummary {
    pub schema_version: u32,
    pub geometry: Geometry,
    pub n: f64,
    pub xi: f64,
    pub w_av: f64,
    pub opening_at_source: f64,
    pub gamma_x: f64,
    pub gamma_w: f64,
    pub c_tip: f64,
    pub residual: f64,
}

pub fn reference_summary(sol: &SelfSimilarSolution) -> ReferenceSummary {
    ReferenceSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        geometry: sol.geometry,
        n: sol.n,
        xi: sol.xi,
        w_av: sol.w_av,
        opening_at_source: sol.opening(0.0),
        gamma_x: sol.gamma_x,
        gamma_w: sol.gamma_w,
        c_tip: sol.c_tip,
        residual: sol.residual,
    }
}

/// Diagnostic table as CSV, one row per fracture cell.
pub fn write_diagnostic_csv<W: Write>(out: W, report: &DiscretizationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "x",
        "y",
        "class",
        "pressure",
        "pressure_exact",
        "side_opening_error",
        "gradient_error",
        "velocity_error",
        "divergence",
        "divergence_exact",
    ])?;
    for n in &report.nodes {
        w.serialize((
            n.x,
            n.y,
            class_name(n.class),
            n.pressure,
            n.pressure_exact,
            n.side_opening_error,
            n.gradient_error,
            n.velocity_error,
            n.divergence,
            n.divergence_exact,
        ))?;
    }
    w.flush()?;
    Ok(())
}

pub fn diagnose(geometry: Geometry, n: f64, cells_per_diameter: usize) -> Result<DiscretizationReport> {
    let sol = self_similar(geometry, n)?;
    discretization_diagnostic(&sol, cells_per_diameter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_cells() {
        let err = RunConfig::from_toml("[grid]\ncells = 3\n").unwrap_err();
        assert!(matches!(err, HfError::Config(_)));
        assert!(RunConfig::from_toml("[grid]\ncells = 4\n").is_ok());
    }

    #[test]
    fn rejects_unknown_presets() {
        assert!(RunConfig::from_toml("[tip]\nregime = \"plastic\"\n").is_err());
        assert!(RunConfig::from_toml("[fluid]\npreset = \"honey\"\n").is_err());
        let c = RunConfig::from_toml("geometry = \"penny\"\n[fluid]\npreset = \"shear-thinning\"\n").unwrap();
        assert_eq!(c.fluid.behaviour_index().unwrap(), 0.6);
        let c = RunConfig::from_toml("[tip]\nregime = \"monomial-custom\"\na_w = 1.0\nalpha = 0.6\nbeta = 0.2\n").unwrap();
        assert_eq!(c.tip_model().unwrap(), TipModel::Monomial { a_w: 1.0, alpha: 0.6, beta: 0.2 });
        assert!(RunConfig::from_toml("[tip]\nregime = \"monomial-custom\"\na_w = 1.0\n").is_err());
    }

    #[test]
    fn line_fit_recovers_cubic_law() {
        let pts: Vec<(f64, f64)> = [0.25f64, 0.2, 0.1].iter().map(|&d| (d.ln(), (0.3 * d.powi(3)).ln())).collect();
        let (s, c) = fit_line(&pts);
        assert!((s - 3.0).abs() < 1e-12 && (c.exp() - 0.3).abs() < 1e-12);
    }
}
