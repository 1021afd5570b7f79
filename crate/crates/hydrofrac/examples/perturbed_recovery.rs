//! Start with one tenth of the self-similar opening and watch the front
//! approach the self-similar half-length. Pass the final time as argument.

use hydrofrac::cli::{InitialKind, RunConfig};
use hydrofrac::benchmarks::error_metrics;

fn main() -> hydrofrac::Result<()> {
    let t_end: f64 = std::env::args().nth(1).map_or(10.0, |s| s.parse().expect("final time"));
    let mut cfg = RunConfig::default();
    cfg.initial.kind = InitialKind::Perturbed;
    cfg.initial.eps_w = 0.1;
    cfg.stepping.safety = 0.9;
    cfg.times.t_end = t_end;
    let sol = cfg.reference()?;
    let mut frac = cfg.build()?;
    let mut next = 1.0;
    while frac.t < t_end {
        next = (next * 1.5f64).min(t_end);
        frac.advance(&cfg.stepping, next, |_| {})?;
        let e = error_metrics(&frac, &sol);
        println!("t {:8.3} front {:.4} exact {:.4} error {:+.2}%", e.t, e.front, e.front_exact, 100.0 * e.front_error);
    }
    Ok(())
}
