//! Parameter families of maps `T^d → S^{d+1}` with small energy and nonzero
//! degree, the capped homotopy toward a loop, and the non-uniform decay
//! experiment for the damped flow.
//!
//! The base family is
//!
//! ```text
//! A(s, x) = ( sin s cos x, sin s sin x, cos s)   for s ∈ [0, π],
//! A(s, x) = (−sin s cos x, sin s sin x, cos s)   for s ∈ (π, 2π),
//! ```
//!
//! and higher families suspend it: `A_k(s₁, …, s_k, x) = (sin s₁ · M A_{k−1}, cos s₁)`
//! where `M` is the identity for `s₁ ∈ [0, π]` and a fixed orthogonal map on
//! `(π, 2π)` chosen by [`SeamConvention`].

use std::f64::consts::{PI, TAU};
use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};
use crate::grid::Grid;
use crate::solver::{DampingProfile, Solver, CFL_RATIO};
use crate::state::{energy, fmt17, FieldState};
use crate::topology::{torus_degree_raw, DegreeReport, SurfaceSamples, TorusMap};

/// Orthogonal map applied to the inner family on the upper half `s₁ ∈ (π, 2π)`
/// of every suspension level above the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeamConvention {
    /// Negates every component except the first. Each level doubles the
    /// magnitude of the degree; with the `(s₁, …, s_k, x)` orientation the
    /// degrees of `A`, `A₂`, `A₃` are `2`, `4`, `−8`.
    #[default]
    Reflected,
    /// Negates the whole inner vector. The two halves of each level then
    /// cancel and the degree of `A_k` is 0 for `k ≥ 2`.
    Negated,
}

fn upper_half(s: f64) -> bool {
    let s = s.rem_euclid(TAU);
    s > PI
}

/// Writes the family value into `out` (length `levels + 2`), given per level
/// `(sin s, cos s, upper)` from the outermost parameter inward.
fn assemble(
    levels: &[(f64, f64, bool)],
    cos_x: f64,
    sin_x: f64,
    seam: SeamConvention,
    out: &mut [f64],
) {
    let d = levels.len();
    out[0] = cos_x;
    out[1] = sin_x;
    for j in 1..=d {
        let (sn, cs, upper) = levels[d - j];
        if upper {
            if j == 1 {
                out[0] = -out[0];
            } else {
                match seam {
                    SeamConvention::Reflected => {
                        for v in &mut out[1..=j] {
                            *v = -*v;
                        }
                    }
                    SeamConvention::Negated => {
                        for v in &mut out[..=j] {
                            *v = -*v;
                        }
                    }
                }
            }
        }
        for v in &mut out[..=j] {
            *v *= sn;
        }
        out[j + 1] = cs;
    }
}

/// The base family `A(s, x) ∈ S²`.
pub fn family_a(s: f64, x: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    assemble(&[level(s)], x.cos(), x.sin(), SeamConvention::default(), &mut out);
    out
}

// Snaps rounding residue at multiples of π/2.
fn level(s: f64) -> (f64, f64, bool) {
    let (mut sn, mut cs) = s.sin_cos();
    if cs.abs() < 1e-15 {
        cs = 0.0;
        sn = sn.signum();
    } else if sn.abs() < 1e-15 {
        sn = 0.0;
        cs = cs.signum();
    }
    (sn, cs, upper_half(s))
}

/// `A_k(s₁, …, s_k, x) ∈ S^{k+1}` with `k = s.len() ≥ 1`; `k = 1` is [`family_a`].
pub fn family_ak(s: &[f64], x: f64) -> Vec<f64> {
    family_ak_with(s, x, SeamConvention::default())
}

pub fn family_ak_with(s: &[f64], x: f64, seam: SeamConvention) -> Vec<f64> {
    assert!(!s.is_empty(), "family needs at least one parameter");
    let levels: Vec<_> = s.iter().map(|&v| level(v)).collect();
    let mut out = vec![0.0; s.len() + 2];
    assemble(&levels, x.cos(), x.sin(), seam, &mut out);
    out
}

/// A parameter family `γ(s) = A_d(s, ·)` of loops in `S^k`, `k = d + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomotopyFamily {
    params: usize,
    seam: SeamConvention,
}

impl HomotopyFamily {
    /// Family with `params` parameter circles (1 gives `A`, 2 gives `A₂`).
    pub fn new(params: usize) -> Result<Self> {
        Self::with_seam(params, SeamConvention::default())
    }

    pub fn with_seam(params: usize, seam: SeamConvention) -> Result<Self> {
        if !(1..=5).contains(&params) {
            return Err(Error::InvalidArgument(format!(
                "family needs 1 to 5 parameters, got {params}"
            )));
        }
        Ok(Self { params, seam })
    }

    pub fn params(&self) -> usize {
        self.params
    }

    /// Dimension `k` of the target sphere.
    pub fn k(&self) -> usize {
        self.params + 1
    }

    pub fn seam(&self) -> SeamConvention {
        self.seam
    }

    /// Short name used in reports: `A`, `A2`, `A3`, ….
    pub fn name(&self) -> String {
        if self.params == 1 {
            "A".into()
        } else {
            format!("A{}", self.params)
        }
    }

    pub fn eval(&self, s: &[f64], x: f64) -> Vec<f64> {
        assert_eq!(s.len(), self.params, "parameter count mismatch");
        family_ak_with(s, x, self.seam)
    }

    /// The loop `γ(s)` at rest on `grid`.
    pub fn state(&self, grid: Grid, s: &[f64]) -> Result<FieldState> {
        let mut phi = Vec::with_capacity(grid.n_points() * (self.k() + 1));
        for x in grid.nodes() {
            phi.extend(self.eval(s, x));
        }
        let zeros = vec![0.0; phi.len()];
        FieldState::new(grid, self.k(), phi, zeros, 0.0)
    }

    /// `E(γ(s)) = 2π Π sin² s_i`.
    pub fn exact_energy(&self, s: &[f64]) -> f64 {
        TAU * s.iter().map(|v| v.sin().powi(2)).product::<f64>()
    }

    /// The family sampled on the uniform `m^{d+1}` lattice, ordered `(s₁, …, s_d, x)`.
    pub fn lattice(&self, m: usize) -> FamilyLattice {
        let (sin, cos) = (0..m)
            .map(|i| {
                let a = TAU * i as f64 / m as f64;
                (a.sin(), a.cos())
            })
            .unzip();
        FamilyLattice {
            family: *self,
            m,
            sin,
            cos,
        }
    }

    /// Quadrature degree on the `m^{d+1}` lattice.
    pub fn degree(&self, m: usize, mode: ExecMode) -> Result<DegreeReport> {
        torus_degree_raw(&self.lattice(m), m, mode)
    }
}

/// Trig tables for evaluating a family on a uniform lattice.
#[derive(Debug, Clone)]
pub struct FamilyLattice {
    family: HomotopyFamily,
    m: usize,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl TorusMap for FamilyLattice {
    fn torus_dim(&self) -> usize {
        self.family.params + 1
    }

    fn eval(&self, idx: &[usize], out: &mut [f64]) {
        let d = self.family.params;
        let mut levels = [(0.0, 0.0, false); 5];
        for (l, &i) in levels.iter_mut().zip(&idx[..d]) {
            *l = (self.sin[i], self.cos[i], 2 * i > self.m);
        }
        let ix = idx[d];
        assemble(&levels[..d], self.cos[ix], self.sin[ix], self.family.seam, out);
    }
}

/// Energies `E(γ(s), 0)` by quadrature on `grid` for each parameter sample.
pub fn family_energy_curve(
    family: &HomotopyFamily,
    grid: Grid,
    samples: &[Vec<f64>],
    mode: ExecMode,
) -> Result<Vec<f64>> {
    map_ordered(mode, samples, |s| family.state(grid, s).map(|st| energy(&st)))
        .into_iter()
        .collect()
}

/// Linear interpolation of a sampled family `H(s, x)` toward a loop `a(s)`,
/// renormalized onto `S²`.
#[derive(Debug, Clone)]
pub struct CappedHomotopy {
    start: SurfaceSamples,
    anchor: Vec<[f64; 3]>,
    sup_distance: f64,
    min_denominator: f64,
}

/// Smallest admissible interpolation denominator.
const CAP_FLOOR: f64 = 1e-8;

/// Builds the cap `H(T + r) = ((1−r)H(T) + r a) / |·|`. Fails with `CapUndefined`
/// when `sup |H(T) − a| ≥ 2`, where the denominator vanishes at `r = ½`.
pub fn capped_homotopy(start: &SurfaceSamples, anchor: &[[f64; 3]]) -> Result<CappedHomotopy> {
    let m = start.m();
    if anchor.len() != m {
        return Err(Error::InvalidArgument(format!(
            "anchor has {} samples, expected {m}",
            anchor.len()
        )));
    }
    for a in anchor {
        let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotUnit { norm });
        }
    }
    let mut sup = 0.0f64;
    for (i, a) in anchor.iter().enumerate() {
        for j in 0..m {
            let p = start.point(i, j);
            let d2: f64 = (0..3).map(|c| (p[c] - a[c]).powi(2)).sum();
            sup = sup.max(d2.sqrt());
        }
    }
    // min over r of |(1−r)p + r a| is attained at r = ½ and equals sqrt(1 − |p − a|²/4).
    let min_denominator = (1.0 - sup * sup / 4.0).max(0.0).sqrt();
    if sup >= 2.0 || min_denominator < CAP_FLOOR {
        return Err(Error::CapUndefined { sup });
    }
    Ok(CappedHomotopy {
        start: start.clone(),
        anchor: anchor.to_vec(),
        sup_distance: sup,
        min_denominator,
    })
}

impl CappedHomotopy {
    pub fn sup_distance(&self) -> f64 {
        self.sup_distance
    }

    /// Smallest denominator over all `(r, s, x)`.
    pub fn min_denominator(&self) -> f64 {
        self.min_denominator
    }

    /// The slice at `r ∈ [0, 1]`.
    pub fn slice(&self, r: f64) -> Result<SurfaceSamples> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("r = {r} outside [0, 1]")));
        }
        let m = self.start.m();
        let mut data = Vec::with_capacity(m * m * 3);
        for (i, a) in self.anchor.iter().enumerate() {
            for j in 0..m {
                let p = self.start.point(i, j);
                let v: Vec<f64> = (0..3).map(|c| (1.0 - r) * p[c] + r * a[c]).collect();
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                data.extend(v.iter().map(|c| c / n));
            }
        }
        SurfaceSamples::new(m, data)
    }
}

/// Runs the damped flow from `(A(s_i, ·), 0)` for `s_i = 2πi/m` up to time `t`
/// and returns the `m × m` samples `Φ(t, γ(s_i))(x_j)`; the damping grid must
/// have `m` points.
pub fn damped_family_slice(damping: &DampingProfile, t: f64, mode: ExecMode) -> Result<SurfaceSamples> {
    let grid = damping.grid();
    let m = grid.n_points();
    let family = HomotopyFamily::new(1)?;
    let dt = CFL_RATIO * grid.spacing();
    let idx: Vec<usize> = (0..m).collect();
    let rows = map_ordered(mode, &idx, |&i| -> Result<Vec<f64>> {
        let s = TAU * i as f64 / m as f64;
        let init = family.state(grid, &[s])?;
        if t <= 0.0 {
            return Ok(init.phi().to_vec());
        }
        let traj = Solver::new(dt).damping(damping).save_every(usize::MAX).run(&init, t)?;
        Ok(traj.final_state().phi().to_vec())
    });
    let mut data = Vec::with_capacity(m * m * 3);
    for r in rows {
        data.extend(r?);
    }
    SurfaceSamples::new(m, data)
}

/// Loop `a(s_i) = H(s_i, x = 0)` of a sampled family.
pub fn anchor_at_origin(samples: &SurfaceSamples) -> Vec<[f64; 3]> {
    (0..samples.m())
        .map(|i| {
            let p = samples.point(i, 0);
            [p[0], p[1], p[2]]
        })
        .collect()
}

/// One row of the non-uniform decay table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub s: f64,
    pub e0: f64,
    /// First time with `E ≤ target`, or `t_max` when censored.
    pub hit_time: f64,
    pub censored: bool,
}

/// For each `s`, runs the damped flow from `(A(s, ·), 0)` on the damping grid
/// and records the first time the energy falls to `energy_target`.
pub fn nonuniform_decay_experiment(
    damping: &DampingProfile,
    s_values: &[f64],
    energy_target: f64,
    t_max: f64,
    mode: ExecMode,
) -> Result<Vec<DecayRow>> {
    if !(energy_target < TAU) || !(energy_target >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "energy target {energy_target} must lie in [0, 2π)"
        )));
    }
    if !(t_max > 0.0) {
        return Err(Error::InvalidArgument(format!("t_max {t_max} must be positive")));
    }
    let grid = damping.grid();
    let family = HomotopyFamily::new(1)?;
    let dt = CFL_RATIO * grid.spacing();
    map_ordered(mode, s_values, |&s| -> Result<DecayRow> {
        let init = family.state(grid, &[s])?;
        let e0 = energy(&init);
        if e0 <= energy_target {
            return Ok(DecayRow {
                s,
                e0,
                hit_time: 0.0,
                censored: false,
            });
        }
        let mut hit = None;
        Solver::new(dt)
            .damping(damping)
            .save_every(usize::MAX)
            .run_until(&init, t_max, 1, |st, e| {
                if e <= energy_target {
                    hit = Some(st.time());
                    true
                } else {
                    false
                }
            })?;
        Ok(DecayRow {
            s,
            e0,
            hit_time: hit.unwrap_or(t_max),
            censored: hit.is_none(),
        })
    })
    .into_iter()
    .collect()
}

/// Comma-separated `s,E0,hit_time,censored`.
pub fn write_decay_csv<W: Write>(rows: &[DecayRow], mut w: W, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "s,E0,hit_time,censored")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt17(r.s),
            fmt17(r.e0),
            fmt17(r.hit_time),
            u8::from(r.censored)
        )?;
    }
    Ok(())
}

/// Comma-separated `family,m,raw_degree,rounded,residual`.
pub fn write_degree_report<W: Write>(
    rows: &[(String, DegreeReport)],
    mut w: W,
    comments: &[String],
) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "family,m,raw_degree,rounded,residual")?;
    for (name, r) in rows {
        writeln!(w, "{name},{},{},{},{}", r.m, fmt17(r.raw), r.rounded, fmt17(r.residual))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ControlRegion;
    use crate::topology::surface_degree;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol)
    }

    #[test]
    fn base_family_examples() {
        for x in [0.0, 0.4, 2.0, 5.5] {
            assert!(close(&family_a(PI / 2.0, x), &[x.cos(), x.sin(), 0.0], 1e-15));
            assert!(close(&family_a(0.0, x), &[0.0, 0.0, 1.0], 1e-15));
            assert!(close(&family_a(3.0 * PI / 2.0, x), &[x.cos(), -x.sin(), 0.0], 1e-15));
        }
    }

    #[test]
    fn unit_norm_and_seam_continuity() {
        for k in 1..=3 {
            let s_near = |eps: f64| vec![PI + eps; k];
            for x in [0.1, 1.7, 4.0] {
                let lo = family_ak(&s_near(-1e-9), x);
                let hi = family_ak(&s_near(1e-9), x);
                assert!(close(&lo, &hi, 1e-8));
                let at0 = family_ak(&vec![1e-9; k], x);
                let at2pi = family_ak(&vec![TAU - 1e-9; k], x);
                assert!(close(&at0, &at2pi, 1e-8));
                for s in [0.3, 2.5, 3.5, 6.0] {
                    let p = family_ak(&vec![s; k], x);
                    let n: f64 = p.iter().map(|v| v * v).sum();
                    assert!((n.sqrt() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn energies_follow_sine_product() {
        let grid = Grid::new(512).unwrap();
        let a = HomotopyFamily::new(1).unwrap();
        let a2 = HomotopyFamily::new(2).unwrap();
        let e = family_energy_curve(&a, grid, &[vec![PI / 3.0], vec![PI / 2.0]], ExecMode::Sequential)
            .unwrap();
        assert!((e[0] - 1.5 * PI).abs() < 1e-3);
        assert!((e[1] - TAU).abs() < 1e-3);
        let e2 = family_energy_curve(
            &a2,
            grid,
            &[vec![PI / 2.0, PI / 2.0], vec![PI / 2.0, PI / 4.0]],
            ExecMode::Sequential,
        )
        .unwrap();
        assert!((e2[0] - TAU).abs() < 1e-3);
        assert!((e2[1] - PI).abs() < 1e-3);
    }

    #[test]
    fn degree_of_a_is_two() {
        let r = HomotopyFamily::new(1).unwrap().degree(256, ExecMode::default()).unwrap();
        assert_eq!(r.rounded, 2);
        assert!(r.residual < 1e-3);
    }

    #[test]
    fn suspension_conventions() {
        let refl = HomotopyFamily::new(2).unwrap().degree(48, ExecMode::default()).unwrap();
        assert_eq!(refl.rounded, 4);
        let neg = HomotopyFamily::with_seam(2, SeamConvention::Negated)
            .unwrap()
            .degree(48, ExecMode::default())
            .unwrap();
        assert_eq!(neg.rounded, 0);
    }

    #[test]
    fn cap_of_anchor_is_constant_in_r() {
        let m = 64;
        let anchor: Vec<[f64; 3]> = (0..m)
            .map(|i| family_a(TAU * i as f64 / m as f64, 0.0))
            .collect();
        let start = SurfaceSamples::from_fn(m, |s, _| family_a(s, 0.0)).unwrap();
        let cap = capped_homotopy(&start, &anchor).unwrap();
        assert!((cap.min_denominator() - 1.0).abs() < 1e-12);
        let a = cap.slice(0.0).unwrap();
        let b = cap.slice(0.7).unwrap();
        for i in 0..m {
            for j in 0..m {
                assert!(close(a.point(i, j), b.point(i, j), 1e-14));
            }
        }
        assert_eq!(surface_degree(&cap.slice(1.0).unwrap()).unwrap().rounded, 0);
    }

    #[test]
    fn antipodal_cap_is_undefined() {
        let m = 64;
        let anchor = vec![[0.0, 0.0, 1.0]; m];
        let start = SurfaceSamples::from_fn(m, |s, x| {
            if s == 0.0 && x == 0.0 {
                [0.0, 0.0, -1.0]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .unwrap();
        assert!(matches!(
            capped_homotopy(&start, &anchor),
            Err(Error::CapUndefined { .. })
        ));
    }

    #[test]
    fn decay_rows_at_trivial_and_stationary_points() {
        let grid = Grid::new(64).unwrap();
        let damping = DampingProfile::new(grid, ControlRegion::full(), 1.0).unwrap();
        let rows =
            nonuniform_decay_experiment(&damping, &[0.0, PI / 2.0], 0.1, 5.0, ExecMode::Sequential)
                .unwrap();
        assert_eq!(rows[0].hit_time, 0.0);
        assert!(!rows[0].censored);
        assert!(rows[1].censored);
        assert_eq!(rows[1].hit_time, 5.0);
    }
}
