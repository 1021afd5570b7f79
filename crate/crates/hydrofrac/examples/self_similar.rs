//! Self-similar benchmark for both geometries and two fluids; writes the
//! reference profiles `zeta,W` to `out/`.

use hydrofrac::benchmarks::{self_similar, Geometry};
use std::fs::File;
use std::io::BufWriter;

fn main() -> hydrofrac::Result<()> {
    std::fs::create_dir_all("out")?;
    for geometry in [Geometry::Kgd, Geometry::Penny] {
        for n in [1.0, 0.6] {
            let sol = self_similar(geometry, n)?;
            println!(
                "{geometry:?} n={n}: xi = {:.6}, W_av = {:.6}, W(0) = {:.6}, residual {:.1e}",
                sol.xi,
                sol.w_av,
                sol.opening(0.0),
                sol.residual
            );
            let path = format!("out/reference_{geometry:?}_{n}.csv").to_lowercase();
            sol.write_csv(BufWriter::new(File::create(&path)?), 200)?;
        }
    }
    Ok(())
}
