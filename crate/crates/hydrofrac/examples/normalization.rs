//! Dimensional inputs to the normalised variables in which `E' = mu' = Q0 = 1`.

use hydrofrac::benchmarks::{normalize, self_similar, Geometry, PhysicalParams};

fn main() -> hydrofrac::Result<()> {
    let params = PhysicalParams {
        young: 20e9,
        poisson: 0.25,
        consistency: 0.1,
        n: 1.0,
        q0: 1e-3,
        k_ic: 1e6,
        geometry: Geometry::Kgd,
    };
    let nrm = normalize(&params)?;
    println!("E' = {:.4e} Pa, mu' = {:.4} Pa s, w_n = {:.4e}", nrm.e_prime, nrm.mu_prime, nrm.w_n);
    println!("length divisor {:.4e}, normalised toughness {:.4e}", nrm.length_divisor, nrm.toughness(params.k_ic));
    let sol = self_similar(Geometry::Kgd, params.n)?;
    println!("normalised half-length coefficient xi = {:.4}", sol.xi);
    Ok(())
}
