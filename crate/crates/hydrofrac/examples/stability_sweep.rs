//! Largest stable forward-Euler step against the mesh size and its log-log fit.

use hydrofrac::cli::{stability_sweep, RunConfig, SweepOptions};

fn main() -> hydrofrac::Result<()> {
    let report = stability_sweep(&RunConfig::default(), &[0.25, 0.2, 0.125, 0.1, 0.05], SweepOptions::default())?;
    println!("{:>6} {:>5} {:>12} {:>12} {:>8}", "dz", "cells", "bound", "dt_max", "K");
    for r in &report.rows {
        println!("{:6.3} {:5} {:12.4e} {:12.4e} {:8.4}", r.dz, r.cells, r.dt_bound, r.dt_max, r.prefactor);
    }
    println!("dt_max = {:.3} dz^{:.3}", report.prefactor, report.slope);
    Ok(())
}
