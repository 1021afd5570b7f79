//! Forward Euler on the straight fracture over one mesh-size advance, at 5
//! and 10 cells per half-length.

use hydrofrac::benchmarks::{error_metrics, perturbed_initial_state, self_similar, Geometry, InitialState};
use hydrofrac::stepper::{Fracture, StepConfig};

fn main() -> hydrofrac::Result<()> {
    let sol = self_similar(Geometry::Kgd, 1.0)?;
    for cells in [5, 10] {
        let mut frac = Fracture::new(perturbed_initial_state(&sol, &InitialState { cells, ..Default::default() })?)?;
        let t_end = (1.0 + 1.0 / cells as f64).powf(1.0 / sol.gamma_x);
        let mut worst: f64 = 0.0;
        frac.advance(&StepConfig::default(), t_end, |ev| worst = worst.max(ev.residual))?;
        let e = error_metrics(&frac, &sol);
        println!(
            "N={cells}: t={:.4} front {:.5} exact {:.5} error {:+.3}%, opening L-inf {:.2}%, {} steps, max balance residual {worst:.1e}",
            e.t,
            e.front,
            e.front_exact,
            100.0 * e.front_error,
            100.0 * e.opening_linf,
            frac.counters.explicit_steps
        );
    }
    Ok(())
}
