use clap::{Parser, Subcommand, ValueEnum};
use hydrofrac::benchmarks::{self_similar, Geometry};
use hydrofrac::cli::{
    compare_schemes, diagnose, reference_summary, run, stability_sweep, write_diagnostic_csv, RunConfig, SweepOptions,
};
use hydrofrac::stepper::{Mode, TipFlux};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hydrofrac", version, about = "Planar hydraulic-fracture simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Kgd,
    Penny,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Self {
        match g {
            GeometryArg::Kgd => Geometry::Kgd,
            GeometryArg::Penny => Geometry::Penny,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Explicit,
    Implicit,
}

#[derive(Clone, Copy, ValueEnum)]
enum TipFluxArg {
    UpwindSpeed,
    Asymptotic,
    StatisticalPressure,
}

#[derive(clap::Args)]
struct Overrides {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    geometry: Option<GeometryArg>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    n: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    safety: Option<f64>,
    #[arg(long, value_enum)]
    tip_flux: Option<TipFluxArg>,
    #[arg(long)]
    eps_w: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> hydrofrac::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(g) = self.geometry {
            cfg.geometry = g.into();
        }
        if let Some(c) = self.cells {
            cfg.grid.cells = c;
        }
        if let Some(n) = self.n {
            cfg.fluid.preset = None;
            cfg.fluid.n = n;
        }
        if let Some(m) = self.mode {
            cfg.stepping.mode = match m {
                ModeArg::Explicit => Mode::Explicit,
                ModeArg::Implicit => Mode::Implicit,
            };
        }
        if self.dt.is_some() {
            cfg.stepping.dt = self.dt;
        }
        if let Some(s) = self.safety {
            cfg.stepping.safety = s;
        }
        if let Some(t) = self.tip_flux {
            cfg.stepping.tip_flux = match t {
                TipFluxArg::UpwindSpeed => TipFlux::UpwindSpeed,
                TipFluxArg::Asymptotic => TipFlux::Asymptotic,
                TipFluxArg::StatisticalPressure => TipFlux::StatisticalPressure,
            };
        }
        if let Some(e) = self.eps_w {
            cfg.initial.kind = hydrofrac::cli::InitialKind::Perturbed;
            cfg.initial.eps_w = e;
        }
        if let Some(t) = self.t_end {
            cfg.times.t_end = t;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write series, profiles, fronts and a JSON summary.
    Run(Overrides),
    /// Largest stable explicit step per mesh size and its log-log fit.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Mesh sizes dz = 1 / cells.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.2,0.125,0.1,0.05")]
        dz: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        horizon: usize,
    },
    /// Explicit versus implicit advances of one mesh size.
    Compare(Overrides),
    /// Solve the self-similar benchmark and export its profile.
    BenchSelfsimilar {
        #[arg(long, value_enum, default_value = "kgd")]
        geometry: GeometryArg,
        #[arg(long, default_value_t = 1.0)]
        n: f64,
        /// Profile CSV path (zeta, W).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Exact fields pushed through the discrete operators.
    DiagnoseDiscretization {
        #[arg(long, value_enum, default_value = "penny")]
        geometry: GeometryArg,
        #[arg(long, default_value_t = 1.0)]
        n: f64,
        #[arg(long, default_value_t = 20)]
        cells_per_diameter: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> hydrofrac::Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn execute(cmd: Command) -> hydrofrac::Result<()> {
    match cmd {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let summary = run(&cfg)?;
            print_json(&summary)
        }
        Command::Sweep { overrides, dz, horizon } => {
            let cfg = overrides.resolve()?;
            let report = stability_sweep(&cfg, &dz, SweepOptions { horizon_steps: horizon, ..Default::default() })?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            report.write_csv(BufWriter::new(File::create(cfg.output.dir.join("sweep.csv"))?))?;
            print_json(&report)
        }
        Command::Compare(o) => {
            let cfg = o.resolve()?;
            print_json(&compare_schemes(&cfg)?)
        }
        Command::BenchSelfsimilar { geometry, n, csv, points } => {
            let sol = self_similar(geometry.into(), n)?;
            if let Some(path) = csv {
                sol.write_csv(BufWriter::new(File::create(path)?), points)?;
            }
            print_json(&reference_summary(&sol))
        }
        Command::DiagnoseDiscretization { geometry, n, cells_per_diameter, csv } => {
            let report = diagnose(geometry.into(), n, cells_per_diameter)?;
            if let Some(path) = csv {
                write_diagnostic_csv(BufWriter::new(File::create(path)?), &report)?;
            }
            println!(
                "interior pressure error {:.4}, ribbon pressure error {:.4}, interior divergence error {:.4}, near-front divergence ratio {:.3}",
                report.interior_pressure_error,
                report.ribbon_pressure_error,
                report.interior_divergence_error,
                report.near_front_divergence_ratio
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
