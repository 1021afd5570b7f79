//! Normalisation, self-similar reference solutions for the straight (KGD)
//! and penny-shaped fractures, wave-ratio diagnostics, initial states and
//! error metrics.

use crate::elastic::{InfluenceMatrix, OffsetTable, StressField};
use crate::error::{HfError, Result};
use crate::front::FrontPolyline;
use crate::geometry::{Point, Polygon};
use crate::lubrication::FluidModel;
use crate::mesh::{classify, CellClass, Grid, Outline};
use crate::quadrature::UnitRule;
use crate::stepper::{FractureInit, Fracture, FrontGeometry};
use crate::tip_asymptotics::{viscosity_coefficient, TipModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    Kgd,
    Penny,
}

impl Geometry {
    /// `(gamma_x, gamma_w)` of `x* ~ t^gamma_x`, `w ~ t^gamma_w`.
    pub fn exponents(self, n: f64) -> (f64, f64) {
        match self {
            Geometry::Kgd => ((n + 1.0) / (n + 2.0), 1.0 / (n + 2.0)),
            Geometry::Penny => (2.0 * (n + 1.0) / (3.0 * (n + 2.0)), (2.0 - n) / (3.0 * (n + 2.0))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub young: f64,
    pub poisson: f64,
    /// Viscosity (n = 1) or power-law consistency.
    pub consistency: f64,
    pub n: f64,
    pub q0: f64,
    pub k_ic: f64,
    pub geometry: Geometry,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Normalization {
    pub e_prime: f64,
    pub mu_prime: f64,
    pub w_n: f64,
    /// Injection rate after the opening normalisation.
    pub q0_normalized: f64,
    /// Divisor applied to lengths, openings and speeds so that `Q0 = 1`.
    pub length_divisor: f64,
    /// Divisor applied to the normalised toughness.
    pub toughness_divisor: f64,
}

impl Normalization {
    pub fn opening(&self, w: f64) -> f64 {
        w / self.w_n / self.length_divisor
    }

    pub fn pressure(&self, p: f64) -> f64 {
        p / (self.w_n * self.e_prime)
    }

    pub fn toughness(&self, k: f64) -> f64 {
        k / (self.w_n * self.e_prime) / self.toughness_divisor
    }

    pub fn length(&self, x: f64) -> f64 {
        x / self.length_divisor
    }
}

/// `mu' = 2^(n+1) (2n+1)^n / n^n M`, which is `12 mu` for a Newtonian fluid.
pub fn mu_prime(consistency: f64, n: f64) -> f64 {
    2f64.powf(n + 1.0) * (2.0 * n + 1.0).powf(n) / n.powf(n) * consistency
}

pub fn normalize(p: &PhysicalParams) -> Result<Normalization> {
    if !(p.young > 0.0) || !(p.poisson > 0.0 && p.poisson < 0.5) || !(p.consistency > 0.0) {
        return Err(HfError::Config("need E > 0, 0 < nu < 0.5 and positive consistency".into()));
    }
    if !(p.n > 0.0 && p.n <= 1.0) || !(p.q0 > 0.0) {
        return Err(HfError::Config("need 0 < n <= 1 and Q0 > 0".into()));
    }
    let e_prime = p.young / (1.0 - p.poisson * p.poisson);
    let mu = mu_prime(p.consistency, p.n);
    let w_n = (mu / e_prime).powf(1.0 / (p.n + 2.0));
    let q0n = p.q0 / w_n;
    let (ld, td) = match p.geometry {
        Geometry::Penny => (q0n.cbrt(), q0n.powf(1.0 / 6.0)),
        Geometry::Kgd => (q0n.sqrt(), q0n.powf(0.25)),
    };
    Ok(Normalization { e_prime, mu_prime: mu, w_n, q0_normalized: q0n, length_divisor: ld, toughness_divisor: td })
}

const GRADE: i32 = 4;
const NODES: usize = 40;
const QUAD: usize = 120;

/// Separated-variables solution `x* = xi t^gamma_x`, `w = xi t^gamma_w W(zeta)`.
#[derive(Clone, Debug)]
pub struct SelfSimilarSolution {
    pub geometry: Geometry,
    pub n: f64,
    pub xi: f64,
    pub gamma_x: f64,
    pub gamma_w: f64,
    /// Near-front exponent of `W ~ C (1 - zeta)^alpha`.
    pub alpha: f64,
    pub c_tip: f64,
    /// `int_0^1 W` (KGD) or `int_0^1 rho W` (penny).
    pub w_av: f64,
    pub residual: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    scaled_opening: Vec<f64>,
    scaled_flux: Vec<f64>,
}

fn lobatto(m: usize) -> (Vec<f64>, Vec<f64>) {
    let t = (0..=m).map(|j| 0.5 * (1.0 - (PI * j as f64 / m as f64).cos())).collect();
    let w = (0..=m)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == m {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    (t, w)
}

/// Barycentric Lagrange basis values at `x`.
fn lagrange(nodes: &[f64], bw: &[f64], x: f64, out: &mut [f64]) {
    for (k, &t) in nodes.iter().enumerate() {
        if (x - t).abs() < 1e-15 {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[k] = 1.0;
            return;
        }
    }
    let mut sum = 0.0;
    for k in 0..nodes.len() {
        out[k] = bw[k] / (x - nodes[k]);
        sum += out[k];
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn interpolate(nodes: &[f64], bw: &[f64], values: &[f64], x: f64) -> f64 {
    let mut l = vec![0.0; nodes.len()];
    lagrange(nodes, bw, x, &mut l);
    l.iter().zip(values).map(|(a, b)| a * b).sum()
}

fn kernel_kgd(x: f64, s: f64, qx: f64, qs: f64) -> f64 {
    let a = (qx * (2.0 - qx)).sqrt();
    let c = (qs * (2.0 - qs)).sqrt();
    let r = s * ((a + c) / (a - c)).abs().ln() - x * ((x * c + s * a) / (x * c - s * a)).abs().ln();
    if r.is_finite() {
        0.5 * r
    } else {
        0.0
    }
}

fn kernel_penny(r: f64, s: f64, qr: f64, qs: f64, inner: &UnitRule) -> f64 {
    let ar = (qr * (2.0 - qr)).sqrt();
    let cs = (qs * (2.0 - qs)).sqrt();
    let i = if s <= r {
        ar * inner
            .nodes
            .iter()
            .zip(&inner.weights)
            .map(|(&u, &w)| {
                let xi = (r * r + ar * ar * u * u).sqrt();
                w * ((r - s) * (r + s) + ar * ar * u * u).max(0.0).sqrt() / xi
            })
            .sum::<f64>()
    } else {
        inner
            .nodes
            .iter()
            .zip(&inner.weights)
            .map(|(&v, &w)| {
                let xi = s + qs * v * v;
                w * (qs * v * v * (2.0 * s + qs * v * v)).sqrt() / ((xi - r) * (xi + r)).sqrt() * 2.0 * qs * v
            })
            .sum::<f64>()
    };
    cs * ar - i
}

struct Collocation {
    t: Vec<f64>,
    bw: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
    op: Vec<Vec<f64>>,
    tail: Vec<Vec<f64>>,
}

/// Product-integration matrices; `gamma` is the exponent of the integrand's
/// singular factor `(1 - t)^gamma` at the tip, folded into the weights.
fn collocation(geometry: Geometry, m: usize, gamma: f64) -> Collocation {
    let (t, bw) = lobatto(m);
    let k = GRADE;
    let q: Vec<f64> = t.iter().map(|&t| (1.0 - t).powi(k)).collect();
    let s: Vec<f64> = q.iter().map(|q| 1.0 - q).collect();
    let rule = UnitRule::new(QUAD);
    let inner = UnitRule::new(48);
    let mut l = vec![0.0; m + 1];
    let mut op = vec![vec![0.0; m + 1]; m + 1];
    for i in 0..m {
        let ti = t[i];
        let mid = 0.5 * (ti + 1.0);
        // (start, end, graded towards start)
        let segments = [(0.0, ti, false), (ti, mid, true), (mid, 1.0, false)];
        for (a, b, at_start) in segments {
            let len = b - a;
            if len <= 0.0 {
                continue;
            }
            for (&u, &wq) in rule.nodes.iter().zip(&rule.weights) {
                let d = len * u * u * u;
                let (tau, rest) = if at_start { (a + d, (1.0 - a) - d) } else { (b - d, (1.0 - b) + d) };
                let jac = len * 3.0 * u * u * wq;
                let qv = rest.powi(k);
                let sv = 1.0 - qv;
                let c = (qv * (2.0 - qv)).sqrt();
                let kv = match geometry {
                    Geometry::Kgd => kernel_kgd(s[i], sv, q[i], qv) / c,
                    Geometry::Penny => kernel_penny(s[i], sv, q[i], qv, &inner) / (c * sv),
                };
                lagrange(&t, &bw, tau, &mut l);
                let f = 8.0 / PI * jac * kv * rest.powf(gamma);
                if !f.is_finite() {
                    continue;
                }
                for (o, lv) in op[i].iter_mut().zip(&l) {
                    *o += f * lv;
                }
            }
        }
    }
    let mut tail = vec![vec![0.0; m + 1]; m + 1];
    for i in 0..=m {
        let len = 1.0 - t[i];
        for (&u, &wq) in rule.nodes.iter().zip(&rule.weights) {
            lagrange(&t, &bw, t[i] + len * u, &mut l);
            for (o, lv) in tail[i].iter_mut().zip(&l) {
                *o += wq * len * lv;
            }
        }
    }
    Collocation { t, bw, s, q, op, tail }
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

struct Problem<'a> {
    geometry: Geometry,
    n: f64,
    b: f64,
    c_tip: f64,
    col: &'a Collocation,
    jac: Vec<f64>,
    c: Vec<f64>,
    fac: Vec<f64>,
    gamma: f64,
    /// Limit of the regularised integrand at the tip.
    tip_weight: f64,
}

impl Problem<'_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut s = x.to_vec();
        s.push(self.c_tip);
        s
    }

    /// Flux-like quantity `F` (KGD) or `rho F` (penny) at the nodes.
    fn flux(&self, w: &[f64]) -> Vec<f64> {
        let s = &self.col.s;
        match self.geometry {
            Geometry::Kgd => {
                let wj: Vec<f64> = w.iter().zip(&self.jac).map(|(a, b)| a * b).collect();
                matvec(&self.col.tail, &wj).iter().enumerate().map(|(k, f)| f + self.b * s[k] * w[k]).collect()
            }
            Geometry::Penny => {
                let wj: Vec<f64> = w.iter().zip(&self.jac).zip(s).map(|((a, b), c)| a * b * c).collect();
                matvec(&self.col.tail, &wj).iter().enumerate().map(|(k, f)| f + self.b * s[k] * s[k] * w[k]).collect()
            }
        }
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let sfull = self.full(x);
        let w: Vec<f64> = sfull.iter().zip(&self.fac).map(|(a, b)| a * b).collect();
        let f = self.flux(&w);
        let n = self.n;
        let h: Vec<f64> = (0..w.len())
            .map(|k| {
                let num = match self.geometry {
                    Geometry::Kgd => f[k].powf(n),
                    Geometry::Penny => {
                        let sk = self.col.s[k];
                        if n == 1.0 {
                            f[k]
                        } else {
                            f[k].powf(n) * sk.powf(1.0 - n)
                        }
                    }
                };
                if k == w.len() - 1 {
                    return self.tip_weight;
                }
                num / w[k].powf(2.0 * n + 1.0) * self.c[k] * self.jac[k] / (1.0 - self.col.t[k]).powf(self.gamma)
            })
            .collect();
        let oh = matvec(&self.col.op, &h);
        (0..x.len()).map(|i| oh[i] / self.fac[i] - x[i]).collect()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

static CACHE: OnceLock<Mutex<HashMap<(Geometry, u64), Arc<SelfSimilarSolution>>>> = OnceLock::new();

/// Cached reference solution.
pub fn self_similar(geometry: Geometry, n: f64) -> Result<Arc<SelfSimilarSolution>> {
    let key = (geometry, n.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("cache lock").get(&key) {
        return Ok(s.clone());
    }
    let sol = Arc::new(solve_self_similar(geometry, n, NODES)?);
    cache.lock().expect("cache lock").insert(key, sol.clone());
    Ok(sol)
}

/// Collocation solve with `m` node intervals.
pub fn solve_self_similar(geometry: Geometry, n: f64, m: usize) -> Result<SelfSimilarSolution> {
    if !(n > 0.0 && n <= 1.0) {
        return Err(HfError::Config(format!("behaviour index {n} outside (0, 1]")));
    }
    let (gamma_x, gamma_w) = geometry.exponents(n);
    let alpha = 2.0 / (n + 2.0);
    let c_tip = viscosity_coefficient(n) * gamma_x.powf(n / (n + 2.0));
    let k = GRADE as f64;
    let gamma = k * (2.0 - n) / (2.0 * (n + 2.0)) - 1.0;
    let tip_weight = (gamma_x * c_tip).powf(n) / c_tip.powf(2.0 * n + 1.0) * 2f64.sqrt() * k;
    let col = collocation(geometry, m, gamma);
    let jac: Vec<f64> = col.t.iter().map(|t| k * (1.0 - t).powi(GRADE - 1)).collect();
    let c: Vec<f64> = col.q.iter().map(|q| (q * (2.0 - q)).sqrt()).collect();
    let fac: Vec<f64> = col.q.iter().map(|q| q.powf(alpha)).collect();
    let prob = Problem { geometry, n, b: gamma_x, c_tip, col: &col, jac, c, fac, gamma, tip_weight };
    let mut x = vec![c_tip; m];
    let mut r = prob.residual(&x);
    let mut norm = inf_norm(&r);
    for _ in 0..100 {
        if norm < 1e-12 {
            break;
        }
        let mut jm = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = prob.residual(&xp);
            for i in 0..m {
                jm[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(m, r.iter().map(|v| -v));
        let step = jm.lu().solve(&rhs).ok_or(HfError::SelfSimilarDiverged(norm))?;
        let mut lambda = 1.0;
        loop {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            let rn = prob.residual(&xn);
            let nn = inf_norm(&rn);
            if nn < norm || lambda < 1e-4 {
                x = xn;
                r = rn;
                norm = nn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if !(norm < 1e-9) {
        return Err(HfError::SelfSimilarDiverged(norm));
    }
    let sfull = prob.full(&x);
    let w: Vec<f64> = sfull.iter().zip(&prob.fac).map(|(a, b)| a * b).collect();
    let weights = &col.tail[0];
    let w_av: f64 = match geometry {
        Geometry::Kgd => (0..=m).map(|k| weights[k] * w[k] * prob.jac[k]).sum(),
        Geometry::Penny => (0..=m).map(|k| weights[k] * col.s[k] * w[k] * prob.jac[k]).sum(),
    };
    let xi = match geometry {
        Geometry::Kgd => (0.5 / w_av).sqrt(),
        Geometry::Penny => (0.5 / (PI * w_av)).cbrt(),
    };
    let f = prob.flux(&w);
    let mut scaled_flux: Vec<f64> = f.iter().zip(&prob.fac).map(|(a, b)| a / b).collect();
    scaled_flux[m] = gamma_x * c_tip;
    Ok(SelfSimilarSolution {
        geometry,
        n,
        xi,
        gamma_x,
        gamma_w,
        alpha,
        c_tip,
        w_av,
        residual: norm,
        nodes: col.t.clone(),
        bary: col.bw.clone(),
        scaled_opening: sfull,
        scaled_flux,
    })
}

impl SelfSimilarSolution {
    fn t_of(zeta: f64) -> f64 {
        1.0 - (1.0 - zeta.clamp(0.0, 1.0)).powf(1.0 / GRADE as f64)
    }

    /// `W(zeta)`, zero outside `[0, 1]`.
    pub fn opening(&self, zeta: f64) -> f64 {
        let z = zeta.abs();
        if z >= 1.0 {
            return 0.0;
        }
        interpolate(&self.nodes, &self.bary, &self.scaled_opening, Self::t_of(z)) * (1.0 - z).powf(self.alpha)
    }

    /// `-dP/dzeta`.
    pub fn pressure_gradient(&self, zeta: f64) -> f64 {
        let z = zeta.abs().min(1.0 - 1e-15);
        let t = Self::t_of(z);
        let fac = (1.0 - z).powf(self.alpha);
        let w = interpolate(&self.nodes, &self.bary, &self.scaled_opening, t) * fac;
        let f = interpolate(&self.nodes, &self.bary, &self.scaled_flux, t) * fac;
        let flux = match self.geometry {
            Geometry::Kgd => f,
            Geometry::Penny => f / z,
        };
        flux.powf(self.n) / w.powf(2.0 * self.n + 1.0)
    }

    fn graded(rule: &UnitRule, a: f64, b: f64, toward_a: bool, toward_b: bool, f: &mut impl FnMut(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let mut total = 0.0;
        for (lo, hi, grade) in [(a, mid, toward_a), (mid, b, toward_b)] {
            let len = hi - lo;
            if len <= 0.0 {
                continue;
            }
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                let (z, j) = if grade {
                    if lo == a {
                        (a + len * u * u * u, 3.0 * len * u * u)
                    } else {
                        (b - len * u * u * u, 3.0 * len * u * u)
                    }
                } else {
                    (lo + len * u, len)
                };
                total += w * j * f(z);
            }
        }
        total
    }

    /// Self-similar net pressure `P(zeta)`, `p = t^(gamma_w - gamma_x) P`.
    pub fn pressure(&self, zeta: f64) -> f64 {
        let z = zeta.abs();
        let rule = UnitRule::new(QUAD);
        let tz = Self::t_of(z);
        let k = GRADE as f64;
        let mut outer = |t: f64| -> f64 {
            let q = (1.0 - t).powi(GRADE);
            let s = 1.0 - q;
            let jac = k * (1.0 - t).powi(GRADE - 1);
            let weight = match self.geometry {
                Geometry::Kgd => 2.0 / PI * s.acos(),
                Geometry::Penny => (q * (2.0 - q)).sqrt(),
            };
            weight * self.pressure_gradient(s) * jac
        };
        let ahead = Self::graded(&rule, tz, 1.0, true, true, &mut outer);
        let mut inner = |t: f64| -> f64 {
            let q = (1.0 - t).powi(GRADE);
            let s = 1.0 - q;
            let jac = k * (1.0 - t).powi(GRADE - 1);
            let weight = match self.geometry {
                Geometry::Kgd => 1.0 - 2.0 / PI * s.acos(),
                Geometry::Penny => 1.0 - (q * (2.0 - q)).sqrt(),
            };
            weight * self.pressure_gradient(s) * jac
        };
        let behind = Self::graded(&rule, 0.0, tz, false, true, &mut inner);
        ahead - behind
    }

    /// `int_{za}^{zb} W dzeta`.
    pub fn opening_integral(&self, za: f64, zb: f64) -> f64 {
        let (ta, tb) = (Self::t_of(za), Self::t_of(zb.min(1.0)));
        let rule = UnitRule::new(64);
        let k = GRADE as f64;
        rule.integrate(ta, tb, |t| {
            let z = 1.0 - (1.0 - t).powi(GRADE);
            self.opening(z) * k * (1.0 - t).powi(GRADE - 1)
        })
    }

    pub fn front(&self, t: f64) -> f64 {
        self.xi * t.powf(self.gamma_x)
    }

    pub fn front_speed(&self, t: f64) -> f64 {
        self.gamma_x * self.xi * t.powf(self.gamma_x - 1.0)
    }

    /// Physical opening at distance `x` from the source.
    pub fn opening_at(&self, x: f64, t: f64) -> f64 {
        self.xi * t.powf(self.gamma_w) * self.opening(x / self.front(t))
    }

    pub fn pressure_at(&self, x: f64, t: f64) -> f64 {
        t.powf(self.gamma_w - self.gamma_x) * self.pressure(x / self.front(t))
    }

    /// `dw/dt` at fixed position.
    pub fn opening_rate(&self, x: f64, t: f64) -> f64 {
        let z = x.abs() / self.front(t);
        if z >= 1.0 {
            return 0.0;
        }
        let h = 1e-6 * (1.0 - z).min(z.max(1e-3));
        let dw = (self.opening(z + h) - self.opening((z - h).max(0.0))) / (z + h - (z - h).max(0.0));
        self.xi * t.powf(self.gamma_w - 1.0) * (self.gamma_w * self.opening(z) - self.gamma_x * z * dw)
    }

    /// Profile CSV `zeta,W` on `points` equal intervals of [0, 1].
    pub fn write_csv<W: Write>(&self, out: W, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zeta", "W"])?;
        for k in 0..=points {
            let z = k as f64 / points as f64;
            w.serialize((z, self.opening(z)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wave exponent `beta` of the ratio `w2/w1 = 1 - beta dz`.
pub fn wave_exponent(geometry: Geometry, n: f64) -> f64 {
    let alpha = 2.0 / (n + 2.0);
    match geometry {
        Geometry::Kgd => alpha - 1.0 / (n + 1.0),
        Geometry::Penny => alpha - (2.0 - n) / (2.0 * (n + 1.0)),
    }
}

pub fn wave_ratio_model(geometry: Geometry, n: f64, dz: f64) -> f64 {
    1.0 - wave_exponent(geometry, n) * dz
}

/// Ratio of the opening a distance `dz x*` behind the front to the opening
/// at the same distance behind the front after it advanced by that distance.
pub fn wave_ratio_exact(sol: &SelfSimilarSolution, dz: f64) -> f64 {
    let z1 = 1.0 - dz;
    let z2 = 1.0 / (1.0 + dz);
    sol.opening(z2) / sol.opening(z1) * (1.0 + dz).powf(sol.gamma_w / sol.gamma_x)
}

/// Options for building a benchmark initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialState {
    /// Cells per initial half-length (radius).
    pub cells: usize,
    pub t0: f64,
    pub eps_w: f64,
    /// Largest front size (relative to the initial one) the grid must hold.
    pub reach: f64,
    pub regularize_source: bool,
}

impl Default for InitialState {
    fn default() -> Self {
        Self { cells: 5, t0: 1.0, eps_w: 1.0, reach: 1.5, regularize_source: true }
    }
}

/// Self-similar state sampled on a grid (channel cells at their centres, tip
/// cells by the mean over their filled part) with openings scaled by `eps_w`.
pub fn perturbed_initial_state(sol: &SelfSimilarSolution, opts: &InitialState) -> Result<FractureInit> {
    if opts.cells < 4 {
        return Err(HfError::Config(format!("need at least 4 cells per initial size, got {}", opts.cells)));
    }
    if !(opts.eps_w > 0.0) {
        return Err(HfError::Config("opening factor must be positive".into()));
    }
    let x0 = sol.front(opts.t0);
    let h = x0 / opts.cells as f64;
    let half = (opts.cells as f64 * opts.reach).ceil() as usize + 3;
    let scale = sol.xi * opts.t0.powf(sol.gamma_w) * opts.eps_w;
    let fluid = FluidModel::new(sol.n, 1.0)?;
    let tip = TipModel::viscosity(sol.n);
    match sol.geometry {
        Geometry::Kgd => {
            let grid = Grid::line(half, h)?;
            let cls = classify(&grid, Outline::Line { left: -x0, right: x0 })?;
            let w = cls
                .fracture()
                .iter()
                .map(|&id| {
                    let x = grid.center(id).x.abs();
                    if cls.class(id) == CellClass::Tip {
                        let a = (x - 0.5 * h) / x0;
                        let b = ((x + 0.5 * h) / x0).min(1.0);
                        if b > a {
                            scale * sol.opening_integral(a, b) * x0 / h
                        } else {
                            0.0
                        }
                    } else {
                        scale * sol.opening(x / x0)
                    }
                })
                .collect();
            let ribbon_r = cls.ribbons().iter().map(|&id| x0 - grid.center(id).x.abs()).collect();
            let source = grid.id(half, 0);
            let stress = StressField::homogeneous(&grid);
            Ok(FractureInit {
                grid,
                cls,
                w,
                ribbon_r,
                front: FrontGeometry::Line { left: -x0, right: x0 },
                fluid,
                tip,
                stress,
                t0: opts.t0,
                source,
                regularize_source: false,
            })
        }
        Geometry::Penny => {
            let grid = Grid::centered(half, half, h, h)?;
            let circle = Polygon::circle(Point::default(), x0, 720);
            let cls = classify(&grid, Outline::Closed(&circle))?;
            let sub = 24;
            let w = cls
                .fracture()
                .iter()
                .map(|&id| {
                    let c = grid.center(id);
                    if cls.class(id) == CellClass::Tip {
                        let mut acc = 0.0;
                        for a in 0..sub {
                            for b in 0..sub {
                                let p = Point::new(
                                    c.x + h * ((a as f64 + 0.5) / sub as f64 - 0.5),
                                    c.y + h * ((b as f64 + 0.5) / sub as f64 - 0.5),
                                );
                                acc += sol.opening(p.norm() / x0);
                            }
                        }
                        scale * acc / (sub * sub) as f64
                    } else {
                        scale * sol.opening(c.norm() / x0)
                    }
                })
                .collect();
            let ribbon_r = cls.ribbons().iter().map(|&id| x0 - grid.center(id).norm()).collect();
            let front = FrontPolyline::from_points(&grid, &cls, circle.points.clone())?;
            let source = grid.id(half, half);
            let stress = StressField::homogeneous(&grid);
            Ok(FractureInit {
                grid,
                cls,
                w,
                ribbon_r,
                front: FrontGeometry::Planar(front),
                fluid,
                tip,
                stress,
                t0: opts.t0,
                source,
                regularize_source: opts.regularize_source,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub t: f64,
    pub front: f64,
    pub front_exact: f64,
    /// `(front - exact) / exact`.
    pub front_error: f64,
    /// Max opening error over channel cells relative to the max exact opening.
    pub opening_linf: f64,
    pub opening_l2: f64,
    /// Relative L2 pressure error over internal cells (source excluded).
    pub pressure_l2: f64,
    pub balance_residual: f64,
}

pub fn error_metrics(frac: &Fracture, sol: &SelfSimilarSolution) -> ErrorMetrics {
    let t = frac.t;
    let front = frac.front_size();
    let front_exact = sol.front(t);
    let p = frac.pressure_of(&frac.w);
    let src = frac.source_cell();
    let (mut emax, mut wmax, mut e2, mut w2, mut pe2, mut p2) = (0.0f64, 0.0f64, 0.0, 0.0, 0.0, 0.0);
    for (slot, &id) in frac.cls.fracture().iter().enumerate() {
        let class = frac.cls.class(id);
        if !class.is_channel() {
            continue;
        }
        let r = frac.grid.center(id).norm();
        let we = sol.opening_at(r, t);
        let d = frac.w[slot] - we;
        emax = emax.max(d.abs());
        wmax = wmax.max(we.abs());
        e2 += d * d;
        w2 += we * we;
        if class == CellClass::Internal && id != src {
            let pe = sol.pressure_at(r, t);
            pe2 += (p[slot] - pe).powi(2);
            p2 += pe * pe;
        }
    }
    ErrorMetrics {
        t,
        front,
        front_exact,
        front_error: (front - front_exact) / front_exact,
        opening_linf: emax / wmax.max(f64::MIN_POSITIVE),
        opening_l2: (e2 / w2.max(f64::MIN_POSITIVE)).sqrt(),
        pressure_l2: (pe2 / p2.max(f64::MIN_POSITIVE)).sqrt(),
        balance_residual: frac.audit.max_residual,
    }
}

/// Exact versus discrete values at one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeDiagnostic {
    pub x: f64,
    pub y: f64,
    pub class: CellClass,
    pub pressure: f64,
    pub pressure_exact: f64,
    /// Mean of side openings from the arithmetic average versus exact midpoint values,
    /// maximum relative deviation over the cell's channel sides.
    pub side_opening_error: f64,
    pub gradient_error: f64,
    pub velocity_error: f64,
    pub divergence: f64,
    pub divergence_exact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscretizationReport {
    pub cells_per_diameter: usize,
    pub nodes: Vec<NodeDiagnostic>,
    /// Largest relative pressure error over internal cells with
    /// `zeta <= 0.8`, source cell excluded.
    pub interior_pressure_error: f64,
    pub interior_pressure_mean: f64,
    /// Median relative pressure error over ribbon cells.
    pub ribbon_pressure_error: f64,
    pub interior_divergence_error: f64,
    pub near_front_divergence_ratio: f64,
}

/// Outer edge of the interior band, as a fraction of the front radius.
const CORE: f64 = 0.8;

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Exact self-similar fields at `t = 1` pushed through the discrete
/// elasticity, Poiseuille and continuity operators.
pub fn discretization_diagnostic(sol: &SelfSimilarSolution, cells_per_diameter: usize) -> Result<DiscretizationReport> {
    let r0 = sol.front(1.0);
    let h = 2.0 * r0 / cells_per_diameter as f64;
    let half = cells_per_diameter / 2 + 3;
    let grid = match sol.geometry {
        Geometry::Penny => Grid::centered(half, half, h, h)?,
        Geometry::Kgd => Grid::line(half, h)?,
    };
    let cls = match sol.geometry {
        Geometry::Penny => classify(&grid, Outline::Closed(&Polygon::circle(Point::default(), r0, 720)))?,
        Geometry::Kgd => classify(&grid, Outline::Line { left: -r0, right: r0 })?,
    };
    let sub = 24;
    let w: Vec<f64> = cls
        .fracture()
        .iter()
        .map(|&id| {
            let c = grid.center(id);
            if cls.class(id) == CellClass::Tip {
                if grid.is_line() {
                    let x = c.x.abs();
                    let a = (x - 0.5 * h) / r0;
                    let b = ((x + 0.5 * h) / r0).min(1.0);
                    return if b > a { sol.xi * sol.opening_integral(a, b) * r0 / h } else { 0.0 };
                }
                let mut acc = 0.0;
                for a in 0..sub {
                    for b in 0..sub {
                        let p = Point::new(
                            c.x + h * ((a as f64 + 0.5) / sub as f64 - 0.5),
                            c.y + h * ((b as f64 + 0.5) / sub as f64 - 0.5),
                        );
                        acc += sol.opening_at(p.norm(), 1.0);
                    }
                }
                acc / (sub * sub) as f64
            } else {
                sol.opening_at(c.norm(), 1.0)
            }
        })
        .collect();
    let table = OffsetTable::new(&grid, 1.0);
    let g = InfluenceMatrix::assemble(&grid, &cls, &table);
    let mut p = vec![0.0; w.len()];
    g.apply(&w, &mut p);
    let sides = cls.sides(&grid);
    let n = sol.n;
    let area = grid.cell_area();
    let mut div = vec![0.0; w.len()];
    let mut side_err = vec![0.0f64; w.len()];
    let mut grad_err = vec![0.0f64; w.len()];
    let mut vel_err = vec![0.0f64; w.len()];
    for s in &sides {
        let (a, b) = (cls.fracture()[s.lo], cls.fracture()[s.hi]);
        if !(cls.class(a).is_channel() && cls.class(b).is_channel()) {
            continue;
        }
        let mid = s.midpoint;
        let rm = mid.norm();
        let w_side = 0.5 * (w[s.lo] + w[s.hi]);
        let w_mid = sol.opening_at(rm, 1.0);
        let grad = (p[s.hi] - p[s.lo]) / s.spacing;
        let e = s.direction();
        let radial = if rm > 0.0 { mid * (1.0 / rm) } else { Point::default() };
        let grad_exact = -sol.pressure_gradient(rm / r0) / sol.xi * radial.dot(e);
        let v = crate::lubrication::side_velocity(w_side, grad, 0.0, n);
        let v_exact = crate::lubrication::side_velocity(w_mid, grad_exact, 0.0, n);
        let rel = |x: f64, y: f64| if y != 0.0 { ((x - y) / y).abs() } else { 0.0 };
        for slot in [s.lo, s.hi] {
            side_err[slot] = side_err[slot].max(rel(w_side, w_mid));
            grad_err[slot] = grad_err[slot].max(rel(grad, grad_exact));
            vel_err[slot] = vel_err[slot].max(rel(v, v_exact));
        }
        let q = w_side * v * s.length / area;
        div[s.lo] -= q;
        div[s.hi] += q;
    }
    let src = cls.slot(grid.id(half, if grid.is_line() { 0 } else { half })).expect("source inside");
    div[src] += 1.0 / area;
    let mut nodes = Vec::new();
    let (mut int_p, mut rib_p, mut int_d) = (Vec::new(), Vec::new(), Vec::new());
    let mut front_ratio = Vec::new();
    for (slot, &id) in cls.fracture().iter().enumerate() {
        let c = grid.center(id);
        let class = cls.class(id);
        let pe = if slot == src { f64::NAN } else { sol.pressure_at(c.norm(), 1.0) };
        let de = sol.opening_rate(c.norm(), 1.0);
        let node = NodeDiagnostic {
            x: c.x,
            y: c.y,
            class,
            pressure: p[slot],
            pressure_exact: pe,
            side_opening_error: side_err[slot],
            gradient_error: grad_err[slot],
            velocity_error: vel_err[slot],
            divergence: div[slot],
            divergence_exact: de,
        };
        nodes.push(node);
        if slot == src {
            continue;
        }
        let rel = ((p[slot] - pe) / pe).abs();
        match class {
            CellClass::Internal if c.norm() <= CORE * r0 => int_p.push(rel),
            CellClass::Ribbon => rib_p.push(rel),
            _ => {}
        }
        if class == CellClass::Internal && de != 0.0 {
            let touches_ribbon = grid.side_neighbors(id).iter().any(|&k| cls.class(k) == CellClass::Ribbon);
            let near_source = grid.all_neighbors(id).contains(&cls.fracture()[src]);
            if !touches_ribbon && !near_source {
                int_d.push(((div[slot] - de) / de).abs());
            }
        }
        if class == CellClass::Ribbon && de != 0.0 {
            front_ratio.push((div[slot] / de).abs());
        }
    }
    let interior_mean = int_p.iter().sum::<f64>() / int_p.len().max(1) as f64;
    Ok(DiscretizationReport {
        cells_per_diameter,
        nodes,
        interior_pressure_error: int_p.iter().cloned().fold(0.0, f64::max),
        interior_pressure_mean: interior_mean,
        ribbon_pressure_error: median(rib_p),
        interior_divergence_error: median(int_d),
        near_front_divergence_ratio: median(front_ratio),
    })
}
