use hydrofrac::benchmarks::{perturbed_initial_state, self_similar, Geometry, InitialState};
use hydrofrac::cli::{explicit_step_is_stable, fit_line, stability_sweep, RunConfig, SweepOptions};
use hydrofrac::front::{advance_markers, envelope_tangent, reconstruct_envelope, Markers};
use hydrofrac::geometry::{Point, Polygon};
use hydrofrac::lubrication::{continuity_rhs, FluidModel, SideFields, SourceMode};
use hydrofrac::mesh::{classify, CellClass, Grid, Outline};
use hydrofrac::stepper::{Fracture, Mode, StepConfig, TipFlux};
use hydrofrac::tip_asymptotics::{RibbonState, TipModel};
use proptest::prelude::*;

fn tip_flux() -> impl Strategy<Value = TipFlux> {
    prop_oneof![Just(TipFlux::UpwindSpeed), Just(TipFlux::Asymptotic), Just(TipFlux::StatisticalPressure)]
}

fn circle_setup(radius: f64, cx: f64, cy: f64) -> (Grid, Polygon) {
    let half = (radius + 4.0).ceil() as usize;
    (Grid::centered(half, half, 1.0, 1.0).unwrap(), Polygon::circle(Point::new(cx, cy), radius, 360))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn every_step_conserves_mass(
        cells in 4usize..8,
        flux in tip_flux(),
        implicit in any::<bool>(),
        growth in 0.02f64..0.15,
    ) {
        let sol = self_similar(Geometry::Kgd, 1.0).unwrap();
        let mut f = Fracture::new(perturbed_initial_state(&sol, &InitialState { cells, ..Default::default() }).unwrap()).unwrap();
        let t_end = (1.0 + growth).powf(1.0 / sol.gamma_x);
        let cfg = StepConfig {
            mode: if implicit { Mode::Implicit } else { Mode::Explicit },
            dt: implicit.then_some((t_end - 1.0) / 3.0),
            tip_flux: flux,
            ..Default::default()
        };
        let mut residuals = Vec::new();
        f.advance(&cfg, t_end, |ev| residuals.push(ev.residual)).unwrap();
        prop_assert!(!residuals.is_empty());
        for r in residuals {
            prop_assert!(r <= 1e-6, "residual {r}");
        }
        prop_assert!((f.volume() - f.audit.v0 - (f.audit.pumped - f.audit.leaked)).abs() <= 1e-6 * f.volume());
    }

    #[test]
    fn stability_is_monotone_in_the_step(cells in 4usize..7, frac in 0.2f64..3.0) {
        let mut cfg = RunConfig::default();
        cfg.grid.cells = cells;
        cfg.grid.reach = Some(2.0);
        let mut f = cfg.build().unwrap();
        let bound = f.explicit_bound(&cfg.stepping);
        let dt = frac * bound;
        if explicit_step_is_stable(&f, &cfg.stepping, dt, 100) {
            prop_assert!(explicit_step_is_stable(&f, &cfg.stepping, 0.5 * dt, 100));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_partitions_the_grid(radius in 2.5f64..9.0, cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
        let (grid, poly) = circle_setup(radius, cx, cy);
        let cls = classify(&grid, Outline::Closed(&poly)).unwrap();
        prop_assert_eq!(cls.n_f(), cls.n_int() + cls.n_rib() + cls.n_tip());
        for id in 0..grid.len() {
            let class = cls.class(id);
            let touches = poly.touches_rect(&grid.cell_rect(id));
            prop_assert_eq!(class == CellClass::Tip, touches, "cell {}", id);
            prop_assert_eq!(class.is_fracture(), cls.slot(id).is_some());
            let nb = grid.side_neighbors(id);
            match class {
                CellClass::Ribbon => prop_assert!(nb.iter().any(|&k| cls.class(k) == CellClass::Tip)),
                CellClass::Internal => {
                    prop_assert!(nb.iter().all(|&k| cls.class(k).is_channel()));
                    prop_assert!(poly.contains(grid.center(id)));
                }
                CellClass::External => prop_assert!(!poly.contains(grid.center(id))),
                CellClass::Tip => {}
            }
        }
    }

    #[test]
    fn envelope_tracks_a_circle(radius in 5.0f64..10.0, cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
        let (grid, poly) = circle_setup(radius, cx, cy);
        let c = Point::new(cx, cy);
        let cls = classify(&grid, Outline::Closed(&poly)).unwrap();
        let ribbons: Vec<RibbonState> = cls
            .ribbons()
            .iter()
            .map(|&cell| RibbonState { cell, r: radius - grid.center(cell).dist(c), v: 0.0, w_frozen: 0.0 })
            .collect();
        let front = reconstruct_envelope(&grid, &cls, &ribbons).unwrap();
        let env = front.polygon();
        prop_assert!(env.signed_area() > 0.0);
        for p in &env.points {
            prop_assert!((p.dist(c) / radius - 1.0).abs() <= 0.01);
        }
        for &id in cls.fracture() {
            if cls.class(id) == CellClass::Internal {
                prop_assert!(env.contains(grid.center(id)));
            }
        }
        let markers = Markers::seed(&front);
        let speed = 0.3;
        let moved = advance_markers(&markers, &vec![speed; markers.points.len()], 1.0).unwrap();
        for (a, b) in markers.points.iter().zip(&moved.points) {
            prop_assert!((b.dist(*a) - speed).abs() <= 1e-12);
            prop_assert!(b.dist(c) > a.dist(c));
        }
    }

    #[test]
    fn side_fluxes_telescope(seed in prop::collection::vec(-5.0f64..5.0, 200), q0 in 0.1f64..3.0) {
        let grid = Grid::centered(7, 7, 0.8, 1.3).unwrap();
        let poly = Polygon::circle(Point::default(), 4.0, 90);
        let cls = classify(&grid, Outline::Closed(&poly)).unwrap();
        let sides = cls.sides(&grid);
        let mut fields = SideFields::zeros(sides.len());
        for (k, q) in fields.flux.iter_mut().enumerate() {
            *q = seed[k % seed.len()];
        }
        let fluid = FluidModel::new(1.0, q0).unwrap();
        let slot = cls.slot(grid.id(7, 7)).unwrap();
        let rate = continuity_rhs(&grid, &cls, &sides, &fields, &fluid, SourceMode::Cell { slot }, 1.0).unwrap();
        let total: f64 = rate.iter().sum::<f64>() * grid.cell_area();
        prop_assert!((total - q0).abs() <= 1e-10 * (1.0 + seed.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn tangent_touches_both_circles(
        x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, r1 in 0.1f64..2.0,
        ang in -3.1f64..3.1, d in 0.5f64..4.0, dr in -0.95f64..0.95,
    ) {
        let c1 = Point::new(x1, y1);
        let c2 = c1 + Point::new(ang.cos(), ang.sin()) * d;
        let r2 = (r1 + dr * d).max(0.01);
        prop_assume!((r1 - r2).abs() < 0.999 * d);
        let t = envelope_tangent(c1, r1, c2, r2).unwrap();
        prop_assert!((t.normal.norm() - 1.0).abs() < 1e-12);
        prop_assert!((t.t1.dist(c1) - r1).abs() < 1e-10);
        prop_assert!((t.t2.dist(c2) - r2).abs() < 1e-10);
        prop_assert!(t.normal.dot(t.t2 - t.t1).abs() < 1e-10);
        prop_assert!((t.distance_behind(c1) - r1).abs() < 1e-10);
        prop_assert!((t.distance_behind(c2) - r2).abs() < 1e-10);
        // right-hand normal of c1 -> c2 rotated by asin((r1 - r2) / d)
        let alpha = ang - std::f64::consts::FRAC_PI_2 + ((r1 - r2) / d).asin();
        prop_assert!((t.normal.x - alpha.cos()).abs() < 1e-10 && (t.normal.y - alpha.sin()).abs() < 1e-10);
    }

    #[test]
    fn umbrella_speed_inverts_the_opening(n in 0.2f64..1.0, v in 1e-3f64..10.0, r in 1e-3f64..5.0) {
        let tip = TipModel::viscosity(n);
        let w = tip.uau_opening(v, r);
        let back = tip.speed_from_opening(w, r).unwrap();
        prop_assert!((back / v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn line_fit_recovers_power_laws(k in 0.05f64..2.0, s in 1.0f64..4.0) {
        let pts: Vec<(f64, f64)> = [0.25f64, 0.2, 0.125, 0.1, 0.05].iter().map(|&d| (d.ln(), (k * d.powf(s)).ln())).collect();
        let (slope, intercept) = fit_line(&pts);
        prop_assert!((slope - s).abs() < 1e-9);
        prop_assert!((intercept.exp() / k - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sweep_needs_four_mesh_sizes() {
    let err = stability_sweep(&RunConfig::default(), &[0.25, 0.2, 0.1], SweepOptions::default());
    assert!(err.is_err());
}
