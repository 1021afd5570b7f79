//! Explicit against implicit advances over one mesh size, with the matvec
//! counters next to the cost models.

use hydrofrac::cli::{compare_schemes, RunConfig};

fn main() -> hydrofrac::Result<()> {
    let report = compare_schemes(&RunConfig::default())?;
    for row in &report.rows {
        println!(
            "{:11} steps {:5} matvecs {:6} front error {:+.3}% wall {:.3}s",
            row.scheme,
            row.steps,
            row.counters.matvecs,
            100.0 * row.front_error,
            row.wall_seconds
        );
    }
    let c = report.cost;
    println!(
        "explicit matvecs per advance {:.0} (model {:.0}); implicit model {:.0}, ratio {:.2}",
        c.measured_matvecs_per_advance, c.model_explicit_matvecs, c.model_implicit_matvecs, c.model_ratio
    );
    Ok(())
}
