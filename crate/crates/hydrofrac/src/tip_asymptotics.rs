//! Near-front asymptotics: the monomial umbrella `w = A_w v*^beta r^alpha`,
//! its inversions, the implicit speed-equation solve and tip-cell fluxes.

use crate::error::{HfError, Result};
use crate::geometry::{clip_half_plane, Point, Rect};
use crate::mesh::Axis;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ROOT_RTOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// Constant of the viscosity-dominated power-law asymptote,
/// `w = beta_n (mu' v^n / E')^{1/(n+2)} r^{2/(n+2)}`.
pub fn viscosity_coefficient(n: f64) -> f64 {
    let m = n + 2.0;
    (2.0 * m * m / n * (n * PI / m).tan()).powf(1.0 / m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum TipModel {
    /// Speed-independent square-root asymptote fixed by `K_I = K_IC`.
    Toughness { k_ic: f64, e_prime: f64 },
    Monomial { a_w: f64, alpha: f64, beta: f64 },
}

impl TipModel {
    pub fn toughness(k_ic: f64) -> Self {
        TipModel::Toughness { k_ic, e_prime: 1.0 }
    }

    /// Power-law viscosity regime, normalised `mu' = E' = 1`.
    pub fn viscosity(n: f64) -> Self {
        TipModel::Monomial {
            a_w: viscosity_coefficient(n),
            alpha: 2.0 / (n + 2.0),
            beta: n / (n + 2.0),
        }
    }

    pub fn viscosity_newtonian() -> Self {
        Self::viscosity(1.0)
    }

    pub fn leakoff_newtonian() -> Self {
        let a_w = 4.0 / (15f64.powf(0.25) * (2f64.sqrt() - 1.0).powf(0.25));
        TipModel::Monomial { a_w, alpha: 0.625, beta: 0.125 }
    }

    pub fn custom(a_w: f64, alpha: f64, beta: f64) -> Result<Self> {
        let t = TipModel::Monomial { a_w, alpha, beta };
        t.validate()?;
        Ok(t)
    }

    /// Preset lookup by configuration name.
    pub fn preset(name: &str, n: f64, k_ic: f64) -> Result<Self> {
        match name {
            "toughness" => Ok(Self::toughness(k_ic)),
            "viscosity-newtonian" => Ok(Self::viscosity_newtonian()),
            "viscosity" | "viscosity-power-law" => Ok(Self::viscosity(n)),
            "leakoff-newtonian" => Ok(Self::leakoff_newtonian()),
            other => Err(HfError::Config(format!("unknown tip regime preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TipModel::Toughness { k_ic, e_prime } if k_ic > 0.0 && e_prime > 0.0 => Ok(()),
            TipModel::Monomial { a_w, alpha, beta } if a_w > 0.0 && alpha > 0.0 && alpha < 1.0 && beta >= 0.0 => {
                Ok(())
            }
            _ => Err(HfError::Config(format!("invalid tip model {self:?}"))),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            TipModel::Toughness { .. } => 0.5,
            TipModel::Monomial { alpha, .. } => alpha,
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            TipModel::Toughness { .. } => 0.0,
            TipModel::Monomial { beta, .. } => beta,
        }
    }

    /// `A_w`; for toughness this is `sqrt(32/pi) K_IC / E'`.
    pub fn a_w(&self) -> f64 {
        match *self {
            TipModel::Toughness { k_ic, e_prime } => (32.0 / PI).sqrt() * k_ic / e_prime,
            TipModel::Monomial { a_w, .. } => a_w,
        }
    }

    /// `A_w v*^beta`.
    pub fn prefactor(&self, v_star: f64) -> f64 {
        let b = self.beta();
        if b == 0.0 {
            self.a_w()
        } else {
            self.a_w() * v_star.max(0.0).powf(b)
        }
    }

    /// Umbrella opening `phi_w(v*, r)`.
    pub fn uau_opening(&self, v_star: f64, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.prefactor(v_star) * r.powf(self.alpha())
    }

    /// `phi_v(w, r)`, the speed for which the umbrella passes through `w` at `r`.
    pub fn speed_from_opening(&self, w: f64, r: f64) -> Result<f64> {
        match *self {
            TipModel::Toughness { .. } => Err(HfError::SpeedNotInvertible),
            TipModel::Monomial { a_w, alpha, beta } => {
                if beta == 0.0 {
                    return Err(HfError::SpeedNotInvertible);
                }
                if w <= 0.0 {
                    return Ok(0.0);
                }
                Ok((w / (a_w * r.powf(alpha))).powf(1.0 / beta))
            }
        }
    }

    /// Distance at which the square-root asymptote reaches `w`.
    pub fn distance_from_opening_toughness(&self, w: f64) -> Result<f64> {
        match *self {
            TipModel::Toughness { k_ic, e_prime } => {
                let s = w.max(0.0) * e_prime / k_ic;
                Ok(s * s * PI / 32.0)
            }
            TipModel::Monomial { .. } => Err(HfError::Config("distance inversion needs the toughness regime".into())),
        }
    }

    /// Backward/weighted Euler step of the ribbon speed equation:
    /// `v = phi_v(w, r_t + ((1 - omega) v_t + omega v) dt)`.
    pub fn implicit_se_step(&self, w_frozen: f64, r_t: f64, v_t: f64, dt: f64, omega: f64) -> Result<(f64, f64)> {
        if let TipModel::Toughness { .. } = self {
            let r = self.distance_from_opening_toughness(w_frozen)?;
            let v = if dt > 0.0 { ((r - r_t) / dt).max(0.0) } else { 0.0 };
            return Ok((r, v));
        }
        let r_explicit = r_t + (1.0 - omega) * v_t * dt;
        let phi0 = self.speed_from_opening(w_frozen, r_explicit)?;
        if omega == 0.0 || phi0 == 0.0 || dt == 0.0 {
            return Ok((r_explicit + omega * phi0 * dt, phi0));
        }
        let residual = |v: f64| -> Result<f64> {
            Ok(v - self.speed_from_opening(w_frozen, r_explicit + omega * v * dt)?)
        };
        let v = bracketed_root(residual, 0.0, phi0)?;
        Ok((r_explicit + omega * v * dt, v))
    }

    /// Flux through a ribbon/tip side whose midpoint is `r_mid` behind the front.
    pub fn tip_side_flux_asymptotic(&self, v_star: f64, normal: Point, r_mid: f64, axis: Axis) -> f64 {
        let comp = match axis {
            Axis::X => normal.x,
            Axis::Y => normal.y,
        };
        if comp == 0.0 || v_star <= 0.0 {
            return 0.0;
        }
        comp * v_star * self.uau_opening(v_star, r_mid)
    }

    /// Cell-averaged umbrella opening behind the straight front through
    /// `on_front` with outward normal `normal`.
    pub fn tip_mean_opening(&self, v_star: f64, cell: &Rect, on_front: Point, normal: Point) -> Result<f64> {
        let corners = cell.corners();
        let dist: Vec<f64> = corners.iter().map(|&c| normal.dot(on_front - c)).collect();
        let (lo, hi) = dist.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
        if lo > 0.0 || hi < 0.0 {
            return Err(HfError::SegmentMissesCell);
        }
        let filled = clip_half_plane(&corners, normal, normal.dot(on_front));
        let alpha = self.alpha();
        let c = self.prefactor(v_star) / (alpha + 1.0);
        let w_dot_n = |t: Point| normal.dot(on_front - t).max(0.0);
        let mut total = 0.0;
        // int_S phi(r) dS = sum over edges of -(n . nu) int Phi(r) ds, Phi = c r^(alpha+1)
        let m = filled.len();
        for k in 0..m {
            let (a, b) = (filled[k], filled[(k + 1) % m]);
            let e = b - a;
            let len = e.norm();
            if len == 0.0 {
                continue;
            }
            let nu = e.right_normal() * (1.0 / len);
            let flux_factor = -normal.dot(nu);
            if flux_factor == 0.0 {
                continue;
            }
            let (r0, r1) = (w_dot_n(a), w_dot_n(b));
            let p = alpha + 2.0;
            let mean = if (r1 - r0).abs() <= 1e-14 * (r0 + r1).max(1e-300) {
                (0.5 * (r0 + r1)).powf(alpha + 1.0)
            } else {
                (r1.powf(p) - r0.powf(p)) / (p * (r1 - r0))
            };
            total += flux_factor * c * len * mean;
        }
        let area = (cell.max.x - cell.min.x) * (cell.max.y - cell.min.y);
        Ok(total / area)
    }
}

/// Per-ribbon speed-equation state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RibbonState {
    pub cell: usize,
    pub r: f64,
    pub v: f64,
    pub w_frozen: f64,
}

/// Root of an increasing function with `f(lo) <= 0 <= f(hi)`: Illinois
/// regula falsi safeguarded by bisection.
fn bracketed_root(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (lo0, hi0) = (lo, hi);
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(HfError::RootNotFound { lo, hi, iterations: 0 });
    }
    let mut side = 0i8;
    for _ in 0..ROOT_MAX_ITER {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx == 0.0 || (hi - lo) <= ROOT_RTOL * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo) <= ROOT_RTOL * hi.abs() {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(HfError::RootNotFound { lo: lo0, hi: hi0, iterations: ROOT_MAX_ITER })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> TipModel {
        TipModel::custom(1.0, 2.0 / 3.0, 1.0 / 3.0).unwrap()
    }

    #[test]
    fn umbrella_examples() {
        let t = unit();
        assert_eq!(t.uau_opening(3.0, 0.0), 0.0);
        assert!((t.uau_opening(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((t.uau_opening(8.0, 1.0) - 2.0).abs() < 1e-14);
        assert!((t.speed_from_opening(2.0, 1.0).unwrap() - 8.0).abs() < 1e-12);
        assert!(TipModel::toughness(1.0).speed_from_opening(1.0, 1.0).is_err());
    }

    #[test]
    fn newtonian_constant() {
        assert!((viscosity_coefficient(1.0) - 3.1473).abs() < 1e-4);
        assert!((TipModel::leakoff_newtonian().a_w() - 2.534).abs() < 1e-3);
    }

    #[test]
    fn toughness_distance_inverts_the_asymptote() {
        let t = TipModel::toughness(1.0);
        let r = t.distance_from_opening_toughness(0.1).unwrap();
        assert!((t.uau_opening(0.0, r) - 0.1).abs() < 1e-15);
        let r2 = t.distance_from_opening_toughness(0.2).unwrap();
        assert!((r2 / r - 4.0).abs() < 1e-12);
        let (rn, _) = t.implicit_se_step(0.1, 0.3, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(rn, r);
    }

    #[test]
    fn side_flux_examples() {
        let t = unit();
        let q = t.tip_side_flux_asymptotic(1.0, Point::new(1.0, 0.0), 0.5, Axis::X);
        assert!((q - 0.5f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(t.tip_side_flux_asymptotic(1.0, Point::new(0.0, 1.0), 0.5, Axis::X), 0.0);
        assert_eq!(t.tip_side_flux_asymptotic(0.0, Point::new(1.0, 0.0), 0.5, Axis::X), 0.0);
    }

    #[test]
    fn straight_front_mean_opening() {
        let t = unit();
        let cell = Rect::centered(Point::default(), 1.0, 1.0);
        let full = t.tip_mean_opening(1.0, &cell, Point::new(0.5, 0.0), Point::new(1.0, 0.0)).unwrap();
        assert!((full - 0.6).abs() < 1e-14);
        let none = t.tip_mean_opening(1.0, &cell, Point::new(-0.5, 0.2), Point::new(1.0, 0.0)).unwrap();
        assert_eq!(none, 0.0);
        assert!(t.tip_mean_opening(1.0, &cell, Point::new(2.0, 0.0), Point::new(1.0, 0.0)).is_err());
    }
}
