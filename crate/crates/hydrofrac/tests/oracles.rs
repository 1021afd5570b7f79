use hydrofrac::benchmarks::{self_similar, wave_exponent, wave_ratio_exact, Geometry};
use hydrofrac::cli::{run, InitialKind, RunConfig};
use hydrofrac::elastic::{influence_coefficient, line_influence_coefficient};
use hydrofrac::geometry::{Point, Rect};
use hydrofrac::tip_asymptotics::TipModel;
use std::f64::consts::PI;

/// Distance from the centre of a `dx x dy` rectangle to its boundary along `theta`.
fn boundary_distance(theta: f64, dx: f64, dy: f64) -> f64 {
    let (c, s) = (theta.cos().abs(), theta.sin().abs());
    let tx = if c > 0.0 { 0.5 * dx / c } else { f64::INFINITY };
    let ty = if s > 0.0 { 0.5 * dy / s } else { f64::INFINITY };
    tx.min(ty)
}

#[test]
fn self_coefficient_matches_the_angle_integral() {
    for (dx, dy) in [(1.0, 1.0), (0.7, 0.4), (2.0, 0.5)] {
        let m = 200_000;
        let h = 2.0 * PI / m as f64;
        let integral: f64 = (0..m).map(|k| 1.0 / boundary_distance((k as f64 + 0.5) * h, dx, dy)).sum::<f64>() * h;
        let oracle = integral / (8.0 * PI);
        let g = influence_coefficient(0, 0, dx, dy);
        assert!((g / oracle - 1.0).abs() < 1e-6, "{dx}x{dy}: {g} vs {oracle}");
    }
    assert!((influence_coefficient(0, 0, 1.0, 1.0) - 2f64.sqrt() / PI).abs() < 1e-14);
}

#[test]
fn off_element_coefficients_match_area_quadrature() {
    let (dx, dy) = (1.0, 0.6);
    let m = 400;
    for (di, dj) in [(2i64, 0i64), (3, -2), (0, 4), (6, 5)] {
        let (x, y) = (di as f64 * dx, dj as f64 * dy);
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let sx = dx * ((a as f64 + 0.5) / m as f64 - 0.5);
                let sy = dy * ((b as f64 + 0.5) / m as f64 - 0.5);
                let r = ((x - sx).powi(2) + (y - sy).powi(2)).sqrt();
                acc += 1.0 / r.powi(3);
            }
        }
        let oracle = -acc * dx * dy / (m * m) as f64 / (8.0 * PI);
        let g = influence_coefficient(di, dj, dx, dy);
        assert!((g / oracle - 1.0).abs() < 1e-4, "({di},{dj}): {g} vs {oracle}");
    }
}

#[test]
fn line_coefficients_match_the_plane_strain_integral() {
    let h = 0.4;
    for di in [1i64, 2, 5, -3] {
        let x = di as f64 * h;
        let m = 20_000;
        let acc: f64 = (0..m)
            .map(|k| {
                let s = h * ((k as f64 + 0.5) / m as f64 - 0.5);
                1.0 / (x - s).powi(2)
            })
            .sum::<f64>()
            * h
            / m as f64;
        let oracle = -acc / (4.0 * PI);
        let g = line_influence_coefficient(di, h);
        assert!((g / oracle - 1.0).abs() < 1e-6);
    }
}

/// Bisection on `v (r + v dt)^2 = (w / A)^3`, the Newtonian backward-Euler speed equation.
fn cubic_root(w: f64, a: f64, r: f64, dt: f64) -> f64 {
    let rhs = (w / a).powi(3);
    let f = |v: f64| v * (r + v * dt).powi(2) - rhs;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn implicit_speed_equation_matches_cubic_bisection() {
    let tip = TipModel::viscosity_newtonian();
    for (w, r, dt) in [(0.3, 0.2, 0.05), (1.0, 0.5, 1.0), (0.05, 0.01, 0.002), (2.0, 1.5, 0.2)] {
        let (r_new, v) = tip.implicit_se_step(w, r, 0.0, dt, 1.0).unwrap();
        let oracle = cubic_root(w, tip.a_w(), r, dt);
        assert!((v / oracle - 1.0).abs() < 1e-9, "{v} vs {oracle}");
        assert!((r_new - (r + v * dt)).abs() < 1e-12);
    }
}

#[test]
fn tip_mean_opening_matches_area_quadrature() {
    let tip = TipModel::viscosity(0.6);
    let cell = Rect::centered(Point::new(0.0, 0.0), 1.0, 0.8);
    for (ang, offset) in [(0.3f64, 0.1), (1.2, -0.2), (2.5, 0.35), (0.0, 0.0)] {
        let normal = Point::new(ang.cos(), ang.sin());
        let on_front = normal * offset;
        let v = 0.7;
        let mean = tip.tip_mean_opening(v, &cell, on_front, normal).unwrap();
        let m = 1000;
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let p = Point::new((a as f64 + 0.5) / m as f64 - 0.5, 0.8 * ((b as f64 + 0.5) / m as f64 - 0.5));
                acc += tip.uau_opening(v, normal.dot(on_front - p));
            }
        }
        let oracle = acc / (m * m) as f64;
        assert!((mean / oracle - 1.0).abs() < 1e-4, "{mean} vs {oracle}");
    }
}

fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
    let h = 1.0 / m as f64;
    (0..=m)
        .map(|k| {
            let wgt = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            wgt * f(k as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0
}

#[test]
fn reference_volume_equals_injected_volume() {
    // substitution z = 1 - s^3 removes the tip root from the integrand
    for n in [1.0, 0.6] {
        let kgd = self_similar(Geometry::Kgd, n).unwrap();
        let integral = simpson(|s| kgd.opening(1.0 - s.powi(3)) * 3.0 * s * s, 2000);
        let volume = 2.0 * kgd.xi * kgd.xi * integral;
        assert!((volume - 1.0).abs() < 1e-4, "kgd n={n}: {volume}");

        let penny = self_similar(Geometry::Penny, n).unwrap();
        let integral = simpson(|s| (1.0 - s.powi(3)) * penny.opening(1.0 - s.powi(3)) * 3.0 * s * s, 2000);
        let volume = 2.0 * PI * penny.xi.powi(3) * integral;
        assert!((volume - 1.0).abs() < 1e-4, "penny n={n}: {volume}");
    }
}

#[test]
fn wave_ratio_is_second_order_in_the_step() {
    let sol = self_similar(Geometry::Kgd, 1.0).unwrap();
    let beta = wave_exponent(Geometry::Kgd, 1.0);
    let err = |dz: f64| (wave_ratio_exact(&sol, dz) - (1.0 - beta * dz)).abs() / (dz * dz);
    let scaled: Vec<f64> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&d| err(d)).collect();
    for w in scaled.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.25, "{scaled:?}");
    }
}

#[test]
fn too_few_cells_are_rejected() {
    assert!(RunConfig::from_toml("[grid]\ncells = 3\n").is_err());
    let sol = self_similar(Geometry::Kgd, 1.0).unwrap();
    let opts = hydrofrac::benchmarks::InitialState { cells: 3, ..Default::default() };
    assert!(hydrofrac::benchmarks::perturbed_initial_state(&sol, &opts).is_err());
}

#[test]
fn runs_are_bit_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut cfg = RunConfig::default();
        cfg.initial.kind = InitialKind::Perturbed;
        cfg.initial.eps_w = 0.8;
        cfg.times.t_end = 1.2;
        cfg.times.profiles = vec![1.1];
        cfg.output.dir = d.path().to_path_buf();
        let summary = run(&cfg).unwrap();
        assert_eq!(summary.status, "ok");
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5, "{names:?}");
    for name in names {
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
}
