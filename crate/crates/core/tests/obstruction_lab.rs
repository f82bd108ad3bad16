#![allow(clippy::needless_range_loop)]

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, TAU};

use wavemaps::obstruction::*;
use wavemaps::solver::DampingProfile;
use wavemaps::topology::{surface_degree, SurfaceSamples};
use wavemaps::{ControlRegion, Error, ExecMode, Grid};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn base_family_values() {
    for x in [0.0, 1.1, 3.0, 4.7] {
        assert!(dist(&family_a(FRAC_PI_2, x), &[x.cos(), x.sin(), 0.0]) < 1e-15);
        assert!(dist(&family_a(0.0, x), &[0.0, 0.0, 1.0]) < 1e-15);
        assert!(dist(&family_a(PI, x), &[0.0, 0.0, -1.0]) < 1e-15);
        assert!(dist(&family_a(1.5 * PI, x), &[x.cos(), -x.sin(), 0.0]) < 1e-15);
    }
    assert_eq!(family_a(FRAC_PI_2, 0.3)[2], 0.0);
}

#[test]
fn families_are_continuous_across_seams() {
    let d = 1e-7;
    for x in [0.2, 2.5, 5.0] {
        assert!(dist(&family_a(PI - d, x), &family_a(PI + d, x)) < 1e-6);
        assert!(dist(&family_a(TAU - d, x), &family_a(d, x)) < 1e-6);
        for inner in [0.4, 2.0, 4.0] {
            for seam in [SeamConvention::Reflected, SeamConvention::Negated] {
                let lo = family_ak_with(&[PI - d, inner], x, seam);
                let hi = family_ak_with(&[PI + d, inner], x, seam);
                assert!(dist(&lo, &hi) < 1e-6);
                let lo = family_ak_with(&[inner, PI - d], x, seam);
                let hi = family_ak_with(&[inner, PI + d], x, seam);
                assert!(dist(&lo, &hi) < 1e-6);
            }
        }
    }
}

#[test]
fn suspension_values() {
    for x in [0.0, 0.9, 4.2] {
        for s2 in [0.3, 1.7, 4.4] {
            let v = family_ak(&[FRAC_PI_2, s2], x);
            let base = family_a(s2, x);
            assert!(dist(&v[..3], &base) < 1e-15);
            assert_eq!(v[3], 0.0);
        }
        let north = family_ak(&[0.0, 1.0, 2.0], x);
        assert!(dist(&north, &[0.0, 0.0, 0.0, 0.0, 1.0]) < 1e-15);
        let v = family_ak(&[0.7, 2.9, 5.1], x);
        assert!((v.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn family_metadata() {
    let f = HomotopyFamily::new(2).unwrap();
    assert_eq!(f.params(), 2);
    assert_eq!(f.k(), 3);
    assert_eq!(f.seam(), SeamConvention::Reflected);
    assert!(HomotopyFamily::new(0).is_err());
    let s = [0.4, 1.3];
    assert_eq!(f.eval(&s, 0.5), family_ak(&s, 0.5));
}

#[test]
fn energy_curve_examples() {
    let grid = Grid::new(512).unwrap();
    let a2 = HomotopyFamily::new(2).unwrap();
    let samples = vec![vec![FRAC_PI_2, FRAC_PI_2], vec![FRAC_PI_2, FRAC_PI_4], vec![0.0, 1.0]];
    let e = family_energy_curve(&a2, grid, &samples, ExecMode::Sequential).unwrap();
    assert!((e[0] - TAU).abs() < 1e-3);
    assert!((e[1] - PI).abs() < 1e-3);
    assert!(e[2].abs() < 1e-12);
    for (s, v) in samples.iter().zip(&e) {
        assert!((a2.exact_energy(s) - v).abs() < 1e-3);
    }
    let a = HomotopyFamily::new(1).unwrap();
    let curve: Vec<Vec<f64>> = (0..16).map(|i| vec![TAU * i as f64 / 16.0]).collect();
    let e = family_energy_curve(&a, grid, &curve, ExecMode::Sequential).unwrap();
    assert!(e.iter().all(|v| *v <= TAU + 1e-3));
}

#[test]
fn degrees_of_small_families() {
    let a = HomotopyFamily::new(1).unwrap().degree(64, ExecMode::Sequential).unwrap();
    assert_eq!(a.rounded, 2);
    assert!(a.residual < 0.1);
    let a2 = HomotopyFamily::new(2).unwrap().degree(32, ExecMode::Sequential).unwrap();
    assert_eq!(a2.rounded, 4);
    let neg = HomotopyFamily::with_seam(2, SeamConvention::Negated)
        .unwrap()
        .degree(32, ExecMode::Sequential)
        .unwrap();
    assert_eq!(neg.rounded, 0);
}

#[test]
fn degree_of_sampled_base_family_matches_lattice() {
    let s = SurfaceSamples::from_fn(64, family_a).unwrap();
    let r = surface_degree(&s).unwrap();
    assert_eq!(r.rounded, 2);
}

#[test]
fn cap_is_undefined_for_the_undamped_family() {
    let start = SurfaceSamples::from_fn(64, family_a).unwrap();
    let anchor = anchor_at_origin(&start);
    let err = capped_homotopy(&start, &anchor).unwrap_err();
    assert!(matches!(err, Error::CapUndefined { .. }));
}

#[test]
fn cap_interpolates_to_anchor() {
    let m = 64;
    let start = SurfaceSamples::from_fn(m, |s, x| {
        let (a, b) = (0.3 * s.sin(), 0.3 * x.cos());
        let n = (1.0 + a * a + b * b).sqrt();
        [a / n, b / n, 1.0 / n]
    })
    .unwrap();
    let anchor = vec![[0.0, 0.0, 1.0]; m];
    let cap = capped_homotopy(&start, &anchor).unwrap();
    let sup = cap.sup_distance();
    assert!(sup > 0.0 && sup < 1.0);
    assert!((cap.min_denominator() - (1.0 - sup * sup / 4.0).sqrt()).abs() < 1e-15);
    let s0 = cap.slice(0.0).unwrap();
    let s1 = cap.slice(1.0).unwrap();
    for i in 0..m {
        for j in 0..m {
            assert!(dist(s0.point(i, j), start.point(i, j)) < 1e-15);
            assert!(dist(s1.point(i, j), &anchor[i]) < 1e-15);
        }
    }
    assert_eq!(surface_degree(&s1).unwrap().rounded, 0);
    assert!(cap.slice(1.5).is_err());
    assert!(capped_homotopy(&start, &anchor[..m - 1]).is_err());
    let bad = vec![[0.0, 0.0, 2.0]; m];
    assert!(matches!(capped_homotopy(&start, &bad), Err(Error::NotUnit { .. })));
}

#[test]
fn damped_slice_at_zero_time_is_the_family() {
    let grid = Grid::new(64).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::full(), 1.0).unwrap();
    let slice = damped_family_slice(&damping, 0.0, ExecMode::Sequential).unwrap();
    let direct = SurfaceSamples::from_fn(64, family_a).unwrap();
    for i in 0..64 {
        for j in 0..64 {
            assert!(dist(slice.point(i, j), direct.point(i, j)) < 1e-12);
        }
    }
}

#[test]
fn decay_times_grow_toward_the_equator() {
    let grid = Grid::new(64).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::centered(0.75 * PI).unwrap(), 1.0).unwrap();
    let s = [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2];
    let rows = nonuniform_decay_experiment(&damping, &s, 0.1, 60.0, ExecMode::default()).unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows[..3].windows(2) {
        assert!(!w[0].censored && !w[1].censored);
        assert!(w[0].hit_time <= w[1].hit_time);
    }
    assert!(rows[3].censored);
    assert_eq!(rows[3].hit_time, 60.0);
    let h = grid.spacing();
    for r in &rows {
        assert!((r.e0 - TAU * r.s.sin().powi(2)).abs() <= TAU * h * h / 3.0 + 1e-12);
    }
}

#[test]
fn decay_rows_below_target_hit_immediately() {
    let grid = Grid::new(32).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::full(), 1.0).unwrap();
    let rows = nonuniform_decay_experiment(&damping, &[0.0], 0.1, 10.0, ExecMode::Sequential).unwrap();
    assert_eq!(rows[0].hit_time, 0.0);
    assert!(!rows[0].censored);
    assert!(nonuniform_decay_experiment(&damping, &[0.1], TAU, 10.0, ExecMode::Sequential).is_err());
    assert!(nonuniform_decay_experiment(&damping, &[0.1], 0.1, 0.0, ExecMode::Sequential).is_err());
}

#[test]
fn csv_writers_emit_headers() {
    let rows = vec![DecayRow {
        s: 0.5,
        e0: 1.0,
        hit_time: 3.0,
        censored: false,
    }];
    let mut buf = Vec::new();
    write_decay_csv(&rows, &mut buf, &["note".into()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# note");
    assert_eq!(lines[1], "s,E0,hit_time,censored");
    assert!(lines[2].ends_with(",0"));

    let rep = HomotopyFamily::new(1).unwrap().degree(64, ExecMode::Sequential).unwrap();
    let mut buf = Vec::new();
    write_degree_report(&[("A".into(), rep)], &mut buf, &[]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("family,m,raw_degree,rounded,residual\nA,64,"));
}
