//! Exact penny-shaped fields pushed through the discrete operators at two
//! mesh densities; writes the per-cell table to `out/`.

use hydrofrac::benchmarks::{discretization_diagnostic, self_similar, Geometry};
use hydrofrac::cli::write_diagnostic_csv;
use std::fs::File;
use std::io::BufWriter;

fn main() -> hydrofrac::Result<()> {
    std::fs::create_dir_all("out")?;
    let sol = self_similar(Geometry::Penny, 1.0)?;
    for cells in [20, 40] {
        let r = discretization_diagnostic(&sol, cells)?;
        println!(
            "N_m={cells}: interior pressure {:.2}%, ribbon pressure {:.2}%, interior divergence {:.2}%, near-front divergence x{:.2}",
            100.0 * r.interior_pressure_error,
            100.0 * r.ribbon_pressure_error,
            100.0 * r.interior_divergence_error,
            r.near_front_divergence_ratio
        );
        write_diagnostic_csv(BufWriter::new(File::create(format!("out/diagnostic_{cells}.csv"))?), &r)?;
    }
    Ok(())
}
