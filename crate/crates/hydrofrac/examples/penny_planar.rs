//! Planar penny-shaped fracture on a square grid, explicit stepping until the
//! radius has grown by 20%; writes the final profile and front to `out/`.

use hydrofrac::benchmarks::{error_metrics, perturbed_initial_state, self_similar, Geometry, InitialState};
use hydrofrac::cli::{write_front, write_profile_csv};
use hydrofrac::stepper::{Fracture, StepConfig};
use std::fs::File;
use std::io::BufWriter;

fn main() -> hydrofrac::Result<()> {
    std::fs::create_dir_all("out")?;
    let n: f64 = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("behaviour index"));
    let sol = self_similar(Geometry::Penny, n)?;
    let mut frac = Fracture::new(perturbed_initial_state(&sol, &InitialState { cells: 5, ..Default::default() })?)?;
    let t_end = 1.2f64.powf(1.0 / sol.gamma_x);
    frac.advance(&StepConfig::default(), t_end, |ev| {
        if ev.step % 2000 == 0 {
            println!("step {:6} t {:.4} radius {:.4}", ev.step, ev.t, ev.front);
        }
    })?;
    let e = error_metrics(&frac, &sol);
    println!(
        "n={n}: radius {:.4} (exact {:.4}), opening L-inf {:.2}%, {} ribbon cells",
        e.front,
        e.front_exact,
        100.0 * e.opening_linf,
        frac.cls.n_rib()
    );
    write_profile_csv(BufWriter::new(File::create("out/penny_profile.csv")?), &frac)?;
    write_front(BufWriter::new(File::create("out/penny_front.csv")?), &frac)?;
    Ok(())
}
