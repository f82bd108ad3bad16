use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavemaps::control::*;
use wavemaps::harmonic::GeodesicMap;
use wavemaps::harness::{family_state_with_energy, random_perturbation};
use wavemaps::solver::{ControlSignal, DampingProfile, Solver, CFL_RATIO};
use wavemaps::state::state_distance;
use wavemaps::topology::winding_number;
use wavemaps::{energy, ControlRegion, Error, ExecMode, FieldState, Grid};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn constant_field(grid: Grid, v: f64, v_t: f64) -> ScalarField {
    ScalarField::from_fn(grid, |_| v, |_| v_t)
}

#[test]
fn kg_solve_tracks_cosh_for_constant_data() {
    let grid = Grid::new(64).unwrap();
    let dt = CFL_RATIO * grid.spacing();
    let out = kg_solve(&constant_field(grid, 1.0, 0.0), None, 1.0, 2.0, dt).unwrap();
    for s in out.iter().step_by(10) {
        let t = s.time();
        for (v, w) in s.v().iter().zip(s.v_t()) {
            assert!((v - t.cosh()).abs() < 2e-3 * t.cosh());
            assert!((w - t.sinh()).abs() < 2e-3 * t.cosh());
        }
    }
    let last = out.last().unwrap();
    assert!((last.time() - 2.0).abs() < 1e-12);
}

#[test]
fn kg_solve_from_zero_data_stays_zero() {
    let grid = Grid::new(32).unwrap();
    let out = kg_solve(&ScalarField::zero(grid), None, 1.0, 1.0, 0.05).unwrap();
    assert!(out.iter().all(|s| s.v().iter().chain(s.v_t()).all(|x| *x == 0.0)));
}

#[test]
fn kg_solve_matches_manufactured_solution() {
    // v = sin(t) cos(2x) solves v_tt = v_xx + v − g with g = −2 sin(t) cos(2x).
    let mut errs = Vec::new();
    for n in [64, 128] {
        let grid = Grid::new(n).unwrap();
        let dt = CFL_RATIO * grid.spacing();
        let g = ControlSignal::from_fn(grid, ControlRegion::full(), 1, dt, 1.0, |t, x| {
            vec![-2.0 * t.sin() * (2.0 * x).cos()]
        })
        .unwrap();
        let init = ScalarField::from_fn(grid, |_| 0.0, |x| (2.0 * x).cos());
        let out = kg_solve(&init, Some(&g), 1.0, 1.0, dt).unwrap();
        let last = out.last().unwrap();
        let err = grid
            .nodes()
            .iter()
            .zip(last.v())
            .map(|(x, v)| (v - 1f64.sin() * (2.0 * x).cos()).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    assert!(errs[0] < 5e-3, "{errs:?}");
    let ratio = errs[0] / errs[1];
    assert!((3.0..5.0).contains(&ratio), "{errs:?}");
}

#[test]
fn kg_solve_rejects_large_steps() {
    let grid = Grid::new(32).unwrap();
    let err = kg_solve(&ScalarField::zero(grid), None, 1.0, 1.0, grid.spacing()).unwrap_err();
    assert!(matches!(err, Error::CflViolated { .. }));
}

#[test]
fn zero_target_gives_zero_control() {
    let grid = Grid::new(64).unwrap();
    let region = ControlRegion::centered(1.0).unwrap();
    let (g, rep) = kg_exact_control(&ScalarField::zero(grid), region, 2.0).unwrap();
    assert_eq!(g.max_abs(), 0.0);
    assert_eq!(rep.residual, 0.0);
}

#[test]
fn full_region_control_matches_min_norm_ode_solution() {
    let grid = Grid::new(64).unwrap();
    let duration = 1.0;
    let target = constant_field(grid, -1.0, 0.0);
    let (g, rep) = kg_exact_control(&target, ControlRegion::full(), duration).unwrap();
    assert!(rep.residual <= 1e-3, "{rep}");

    // v'' = v − g from rest: v(T) = −∫ sinh(T−s) g, v'(T) = −∫ cosh(T−s) g.
    let m = 4000;
    let sss = simpson(|s| (duration - s).sinh().powi(2), 0.0, duration, m);
    let scc = simpson(|s| (duration - s).cosh().powi(2), 0.0, duration, m);
    let ssc = simpson(|s| (duration - s).sinh() * (duration - s).cosh(), 0.0, duration, m);
    let det = sss * scc - ssc * ssc;
    let (alpha, beta) = (scc / det, -ssc / det);
    let oracle = |s: f64| alpha * (duration - s).sinh() + beta * (duration - s).cosh();

    let scale = (0..=100).map(|i| oracle(i as f64 / 100.0).abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..g.n_times() {
        let t = g.time(i);
        for v in g.frame(i) {
            worst = worst.max((v - oracle(t)).abs());
        }
    }
    assert!(worst < 2e-2 * scale, "worst {worst} scale {scale}");
}

#[test]
fn arc_control_reaches_target_and_lowers_quadratic_form() {
    let grid = Grid::new(128).unwrap();
    let region = ControlRegion::centered(0.75 * PI).unwrap();
    let mass = discrete_mass(grid, 1);
    let target = constant_field(grid, -1.0, 0.0);
    let opts = HumOptions::default();
    let (g, rep) = kg_exact_control_with(&target, region, TAU, mass, &opts).unwrap();
    assert!(rep.residual <= 1e-3, "{rep}");
    let out = kg_solve(&ScalarField::zero(grid), Some(&g), mass, TAU, g.dt()).unwrap();
    let last = out.last().unwrap();
    assert!(last.h1l2_distance(&target) <= 1e-3);
    let change = last.quadratic_form(mass) - out[0].quadratic_form(mass);
    assert!((change + TAU).abs() <= 0.02 * TAU, "{change}");
    for i in 0..g.n_times() {
        for (j, v) in g.frame(i).iter().enumerate() {
            if *v != 0.0 {
                assert!(region.contains(grid.node(j)));
            }
        }
    }
}

#[test]
fn quadratic_form_changes_by_work_of_forcing() {
    let grid = Grid::new(128).unwrap();
    let dt = CFL_RATIO * grid.spacing();
    let duration = 2.0;
    let region = ControlRegion::full();
    let g = ControlSignal::from_fn(grid, region, 1, dt, duration, |t, x| {
        vec![(3.0 * t).sin() * (x.cos() + 0.5 * (2.0 * x).sin())]
    })
    .unwrap();
    let init = ScalarField::from_fn(grid, |x| 0.3 * x.sin(), |x| 0.2 * (3.0 * x).cos());
    let out = kg_solve(&init, Some(&g), 1.0, duration, dt).unwrap();
    assert_eq!(out.len(), g.n_times());
    let work: Vec<f64> = out
        .iter()
        .enumerate()
        .map(|(i, s)| grid.integrate(&s.v_t().iter().zip(g.frame(i)).map(|(a, b)| a * b).collect::<Vec<_>>()))
        .collect();
    let h = g.dt();
    let integral: f64 = work.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    let change = out.last().unwrap().quadratic_form(1.0) - out[0].quadratic_form(1.0);
    assert!((change + 2.0 * integral).abs() < 1e-2 * integral.abs().max(1.0), "{change} {integral}");
}

#[test]
fn rotation_align_maps_plane_to_first_axes() {
    let s = 0.5f64.sqrt();
    let mu = vec![s, 0.0, s];
    let nu = vec![0.0, 1.0, 0.0];
    let g = GeodesicMap::new(mu.clone(), nu.clone(), 2).unwrap();
    let a = rotation_align(&g).unwrap();
    let eye = &a * a.transpose();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((eye[(i, j)] - want).abs() < 1e-12);
        }
    }
    let amu: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[(i, j)] * mu[j]).sum()).collect();
    let anu: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[(i, j)] * nu[j]).sum()).collect();
    assert!((amu[0] - 1.0).abs() < 1e-12 && amu[1].abs() < 1e-12 && amu[2].abs() < 1e-12);
    assert!(anu[0].abs() < 1e-12 && (anu[1] + 1.0).abs() < 1e-12 && anu[2].abs() < 1e-12);
    assert!(alignment_error(&a, &g, 64) < 1e-12);
}

#[test]
fn discrete_mass_approaches_winding_squared() {
    let grid = Grid::new(256).unwrap();
    for n in 1..4u32 {
        let m = discrete_mass(grid, n);
        let h = grid.spacing();
        let nn = (n * n) as f64;
        assert!(m < nn && nn - m < nn * nn * h * h / 12.0 + 1e-12);
    }
}

fn drop_ratio(grid: Grid, eps: f64) -> f64 {
    let g = GeodesicMap::reference(2, 1).unwrap();
    let region = ControlRegion::full();
    let drop = energy_drop_control(&g, eps, region, grid, &HumOptions::default()).unwrap();
    let init = g.state(grid).unwrap();
    let traj = Solver::new(CFL_RATIO * grid.spacing())
        .forcing(&drop.signal)
        .save_every(usize::MAX)
        .run(&init, DROP_TIME)
        .unwrap();
    (energy(traj.final_state()) - energy(&init)) / (eps * eps)
}

#[test]
fn energy_drop_follows_quadratic_law() {
    let grid = Grid::new(128).unwrap();
    let r1 = drop_ratio(grid, 0.05);
    let r2 = drop_ratio(grid, 0.025);
    assert!((-TAU * 1.15..=-TAU * 0.85).contains(&r1), "{r1}");
    assert!((r2 + TAU).abs() < (r1 + TAU).abs(), "{r1} {r2}");
}

#[test]
fn drop_control_from_perturbed_equator_lowers_energy_below_threshold() {
    let grid = Grid::new(128).unwrap();
    let g = GeodesicMap::reference(2, 1).unwrap();
    let base = g.state(grid).unwrap();
    let region = ControlRegion::centered(0.75 * PI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let start = random_perturbation(&base, 0.02, &mut rng).unwrap();
        assert!(state_distance(&start, &base).unwrap() <= 0.02 + 1e-12);
        let drop = energy_drop_control_from(&start, &g, 0.05, region, &HumOptions::default()).unwrap();
        assert!(drop.report.residual <= 1e-3);
        let traj = Solver::new(CFL_RATIO * grid.spacing())
            .forcing(&drop.signal)
            .save_every(usize::MAX)
            .run(&start, DROP_TIME)
            .unwrap();
        assert!(energy(traj.final_state()) < TAU);
    }
}

#[test]
fn drop_control_rejects_circle_targets() {
    let grid = Grid::new(32).unwrap();
    let g = GeodesicMap::reference(1, 1).unwrap();
    assert!(energy_drop_control(&g, 0.05, ControlRegion::full(), grid, &HumOptions::default()).is_err());
    let g2 = GeodesicMap::reference(2, 1).unwrap();
    assert!(energy_drop_control(&g2, 0.0, ControlRegion::full(), grid, &HumOptions::default()).is_err());
}

#[test]
fn linearized_normal_forcing_reduces_to_klein_gordon() {
    let grid = Grid::new(64).unwrap();
    let dt = CFL_RATIO * grid.spacing();
    let duration = 1.5;
    let region = ControlRegion::centered(1.0).unwrap();
    let g = ControlSignal::from_fn(grid, region, 1, dt, duration, |t, x| vec![t * (1.0 + x.cos())]).unwrap();
    let f1 = g.embed(3, 2).unwrap();
    let lin = linearized_solve(&f1, duration, dt).unwrap();
    let kg = kg_solve(&ScalarField::zero(grid), Some(&g), 1.0, duration, dt).unwrap();
    let last = lin.phi.last().unwrap();
    let kg_last = kg.last().unwrap();
    let scale = kg_last.v().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 1e-3);
    for j in 0..grid.n_points() {
        assert_eq!(last[3 * j], 0.0);
        assert_eq!(last[3 * j + 1], 0.0);
        assert!((last[3 * j + 2] - kg_last.v()[j]).abs() < 1e-9 * scale);
    }

    // F̄ against an independent quadrature of the final state.
    let v = lin.phi.last().unwrap();
    let u = lin.phi_t.last().unwrap();
    let h = grid.spacing();
    let n = grid.n_points();
    let mut own = 0.0;
    for j in 0..n {
        let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
        for c in 0..3 {
            let dx = (v[jp * 3 + c] - v[jm * 3 + c]) / (2.0 * h);
            own += (dx * dx + u[j * 3 + c].powi(2) - v[j * 3 + c].powi(2)) * h;
        }
    }
    assert!((lin.final_fbar() - own).abs() < 1e-12 * own.abs().max(1.0));
}

#[test]
fn linearized_solve_with_zero_forcing_stays_at_rest() {
    let grid = Grid::new(32).unwrap();
    let f1 = ControlSignal::zero(grid, ControlRegion::full(), 3, 0.04, 1.0).unwrap();
    let lin = linearized_solve(&f1, 1.0, 0.04).unwrap();
    assert!(lin.phi.iter().flatten().all(|x| *x == 0.0));
    assert!(lin.fbar.iter().all(|x| *x == 0.0));
}

#[test]
fn small_time_quadratic_form_is_positive_for_short_localized_controls() {
    let grid = Grid::new(256).unwrap();
    let rep = small_time_positive_check(FRAC_PI_4, PI / 8.0, 12, 3, grid, ExecMode::default()).unwrap();
    assert_eq!(rep.counted + rep.discarded, 12);
    assert!(rep.counted > 0);
    assert!(rep.min_fbar > 0.0, "{rep:?}");
    assert!(rep.cone_leak < 1e-5, "{rep:?}");
}

#[test]
fn small_time_positive_check_validates_arguments() {
    let grid = Grid::new(64).unwrap();
    assert!(small_time_positive_check(FRAC_PI_2, 0.1, 4, 0, grid, ExecMode::Sequential).is_err());
    assert!(small_time_positive_check(FRAC_PI_4, FRAC_PI_4, 4, 0, grid, ExecMode::Sequential).is_err());
}

#[test]
fn raw_profile_integral_matches_closed_form() {
    for a1 in [1.5 * PI, 1.25 * PI, 0.8 * PI] {
        let exact = 0.5 * a1 * (PI * PI / (a1 * a1) - 1.0);
        assert!((raw_profile_integral(a1) - exact).abs() < 1e-9);
    }
    assert!((raw_profile_integral(1.5 * PI) + 5.0 * PI / 12.0).abs() < 1e-6);
}

#[test]
fn negative_construction_gives_negative_form() {
    let grid = Grid::new(256).unwrap();
    let neg = small_time_negative_construction(0.75 * PI, 1.0, grid, None).unwrap();
    assert!((neg.a1 - 1.25 * PI).abs() < 1e-12);
    assert!((neg.raw_integral + 9.0 * PI / 40.0).abs() < 1e-6);
    assert!(neg.fbar_exact < 0.0);
    assert!(neg.fbar_simulated < 0.0);
    assert!((neg.fbar_simulated - neg.fbar_exact).abs() < 0.1 * neg.fbar_exact.abs(), "{} {}", neg.fbar_simulated, neg.fbar_exact);
    assert!(neg.mollifier_radius > 0.0);
}

#[test]
fn negative_construction_rejects_bad_profiles() {
    let grid = Grid::new(64).unwrap();
    let zero: TimeProfile = Arc::new(|_| [0.0; 3]);
    assert!(small_time_negative_construction(0.75 * PI, 1.0, grid, Some(zero)).is_err());
    assert!(small_time_negative_construction(0.4 * PI, 1.0, grid, None).is_err());
    assert!(small_time_negative_construction(0.75 * PI, 0.0, grid, None).is_err());
}

#[test]
fn pipeline_from_equator_needs_a_single_drop() {
    let grid = Grid::new(128).unwrap();
    let init = GeodesicMap::reference(2, 1).unwrap().state(grid).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::centered(0.75 * PI).unwrap(), 1.0).unwrap();
    let (traj, rep) = global_pipeline(&init, &damping, &PipelineOptions::default()).unwrap();
    assert_eq!(rep.drop_count(), 1);
    assert_eq!(rep.phases.first().map(|p| p.kind), Some(PhaseKind::Drop));
    assert!(rep.success);
    assert!(rep.final_energy < 0.1);
    assert!(rep.boundary_energies_monotone(1e-9));
    assert!(rep.total_time <= PipelineOptions::default().budget);
    assert!((energy(traj.final_state()) - rep.final_energy).abs() < 1e-12);
}

#[test]
fn pipeline_below_threshold_only_damps() {
    let grid = Grid::new(128).unwrap();
    let init = family_state_with_energy(grid, 2, 1.0).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::centered(0.75 * PI).unwrap(), 1.0).unwrap();
    let (_, rep) = global_pipeline(&init, &damping, &PipelineOptions::default()).unwrap();
    assert_eq!(rep.drop_count(), 0);
    assert!(rep.success);
    assert!(rep.final_energy < 0.1);
}

#[test]
fn pipeline_rejects_bad_options() {
    let grid = Grid::new(32).unwrap();
    let init = GeodesicMap::reference(2, 1).unwrap().state(grid).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::full(), 1.0).unwrap();
    let opts = PipelineOptions {
        eps_schedule: vec![],
        ..PipelineOptions::default()
    };
    assert!(global_pipeline(&init, &damping, &opts).is_err());
    let circle = GeodesicMap::reference(1, 1).unwrap().state(grid).unwrap();
    assert!(global_pipeline(&circle, &damping, &PipelineOptions::default()).is_err());
}

#[test]
fn geometric_schedule_halves() {
    assert_eq!(geometric_schedule(0.1, 0.5, 3), vec![0.1, 0.05, 0.025]);
}

#[test]
fn sharp_time_examples() {
    assert!((sharp_time(ControlRegion::arc(0.0, PI).unwrap()) - PI).abs() < 1e-12);
    assert_eq!(sharp_time(ControlRegion::full()), 0.0);
    let mut last = f64::INFINITY;
    for w in [0.2, 0.5, 1.0, 2.0, 3.0] {
        let region = ControlRegion::centered(w).unwrap();
        let t0 = sharp_time(region);
        assert!(t0 < last);
        assert!((t0 + region.length() - TAU).abs() < 1e-12);
        last = t0;
    }
}

fn bent_loop(grid: Grid, n: f64, bend: f64, shift: f64) -> FieldState {
    FieldState::from_fn(
        grid,
        1,
        |x| {
            let th = n * x + bend * x.sin() + shift;
            vec![th.cos(), th.sin()]
        },
        |_| vec![0.0, 0.0],
    )
    .unwrap()
}

#[test]
fn polar_control_between_identical_states_is_zero() {
    let grid = Grid::new(128).unwrap();
    let s = bent_loop(grid, 1.0, 0.0, 0.0);
    let region = ControlRegion::arc(0.0, PI).unwrap();
    let pc = s1_polar_control(&s, &s, PI + 0.2, region, &polar_hum_options()).unwrap();
    assert!(pc.h.max_abs() < 1e-12);
    assert!(pc.report.residual < 1e-10);
}

#[test]
fn polar_control_rejects_degree_mismatch() {
    let grid = Grid::new(64).unwrap();
    let a = bent_loop(grid, 1.0, 0.0, 0.0);
    let b = bent_loop(grid, 2.0, 0.0, 0.0);
    let err = s1_polar_control(&a, &b, 4.0, ControlRegion::arc(0.0, PI).unwrap(), &polar_hum_options()).unwrap_err();
    assert!(matches!(err, Error::DegreeMismatch { initial: 1, target: 2 }));
}

#[test]
fn polar_control_steers_and_keeps_winding() {
    let grid = Grid::new(128).unwrap();
    let a = bent_loop(grid, 1.0, 0.0, 0.0);
    let b = bent_loop(grid, 1.0, 0.3, 0.1);
    let region = ControlRegion::arc(0.0, PI).unwrap();
    let pc = s1_polar_control(&a, &b, sharp_time(region) + 0.5, region, &polar_hum_options()).unwrap();
    assert!(pc.report.residual <= 1e-3, "{}", pc.report);
    assert!(state_distance(&pc.final_state, &b).unwrap() <= 1e-3);
    assert_eq!(winding_number(&pc.final_state).unwrap(), 1);
    assert!(pc.corrections >= 1 && pc.corrections <= MAX_CORRECTIONS);
}

#[test]
fn polar_lift_removes_winding() {
    let grid = Grid::new(64).unwrap();
    let s = bent_loop(grid, 2.0, 0.4, 0.1);
    let lift = polar_lift(&s, 2, None).unwrap();
    for (x, v) in grid.nodes().into_iter().zip(lift.v()) {
        assert!((v - (0.4 * x.sin() + 0.1)).abs() < 1e-12);
    }
}
