//! Weighted implicit scheme with 2 and 4 large steps per mesh-size advance.

use hydrofrac::benchmarks::{error_metrics, perturbed_initial_state, self_similar, Geometry, InitialState};
use hydrofrac::stepper::{Fracture, Mode, StepConfig};

fn main() -> hydrofrac::Result<()> {
    let sol = self_similar(Geometry::Kgd, 1.0)?;
    for cells in [5, 10] {
        let t_end = (1.0 + 1.0 / cells as f64).powf(1.0 / sol.gamma_x);
        for steps in [2, 4] {
            let mut frac = Fracture::new(perturbed_initial_state(&sol, &InitialState { cells, ..Default::default() })?)?;
            let cfg = StepConfig { mode: Mode::Implicit, dt: Some((t_end - 1.0) / steps as f64), ..Default::default() };
            frac.advance(&cfg, t_end, |_| {})?;
            let e = error_metrics(&frac, &sol);
            println!(
                "N={cells}, {steps} steps: front error {:+.3}%, {} fixed-point iterations",
                100.0 * e.front_error,
                frac.counters.fixed_point_iterations
            );
        }
    }
    Ok(())
}
