//! First-order perturbations of the equator and the quadratic form
//! `F̄ = ∫ (|φ̄₁t|² + |φ̄₁x|² − |φ̄₁|²)` that decides second-order energy changes.
//!
//! With `ū = (cos x, sin x, 0, …)` the linearized equation reads
//!
//! ```text
//! φ̄₁tt = φ̄₁xx + φ̄₁ + 2(ū_x · φ̄₁x) ū − f₁ + (f₁ · ū) ū.
//! ```

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};
use crate::grid::{ControlRegion, Grid};
use crate::solver::{ControlSignal, Forcing, CFL_RATIO};

/// Sampled linearized trajectory.
#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    pub grid: Grid,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Node-major positions per time.
    pub phi: Vec<Vec<f64>>,
    pub phi_t: Vec<Vec<f64>>,
    /// `F̄` at every time.
    pub fbar: Vec<f64>,
}

impl LinearizedTrajectory {
    pub fn final_fbar(&self) -> f64 {
        *self.fbar.last().expect("nonempty trajectory")
    }
}

/// `∫ (|v_t|² + |v_x|² − |v|²)` for node-major vector samples, `v_x` by central differences.
pub fn fbar(grid: &Grid, dim: usize, v: &[f64], v_t: &[f64]) -> f64 {
    let inv = 0.5 / grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n_points() {
        let (jp, jm) = (grid.next(j), grid.prev(j));
        for c in 0..dim {
            let dx = (v[jp * dim + c] - v[jm * dim + c]) * inv;
            let a = v[j * dim + c];
            let b = v_t[j * dim + c];
            acc += dx * dx + b * b - a * a;
        }
    }
    acc * grid.spacing()
}

struct Linearized {
    grid: Grid,
    dim: usize,
    ubar: Vec<f64>,
    ubar_x: Vec<f64>,
}

impl Linearized {
    fn new(grid: Grid, dim: usize) -> Self {
        let mut ubar = vec![0.0; grid.n_points() * dim];
        let mut ubar_x = vec![0.0; grid.n_points() * dim];
        for (j, x) in grid.nodes().into_iter().enumerate() {
            ubar[j * dim] = x.cos();
            ubar[j * dim + 1] = x.sin();
            ubar_x[j * dim] = -x.sin();
            ubar_x[j * dim + 1] = x.cos();
        }
        Self {
            grid,
            dim,
            ubar,
            ubar_x,
        }
    }

    /// `out = D²v + v + 2(ū_x · D¹v) ū − f + (f · ū) ū`.
    fn accel(&self, v: &[f64], f: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let d = self.dim;
        let inv2 = 1.0 / (g.spacing() * g.spacing());
        let inv1 = 0.5 / g.spacing();
        for j in 0..g.n_points() {
            let (jp, jm) = (g.next(j), g.prev(j));
            let u = &self.ubar[j * d..(j + 1) * d];
            let ux = &self.ubar_x[j * d..(j + 1) * d];
            let mut coupling = 0.0;
            let mut fu = 0.0;
            for c in 0..d {
                coupling += ux[c] * (v[jp * d + c] - v[jm * d + c]) * inv1;
                fu += f[j * d + c] * u[c];
            }
            for c in 0..d {
                let lap = (v[jp * d + c] - 2.0 * v[j * d + c] + v[jm * d + c]) * inv2;
                out[j * d + c] =
                    lap + v[j * d + c] + 2.0 * coupling * u[c] - f[j * d + c] + fu * u[c];
            }
        }
    }
}

/// Solves the linearized equation from zero data over `[0, duration]`.
pub fn linearized_solve(f1: &ControlSignal, duration: f64, dt: f64) -> Result<LinearizedTrajectory> {
    let grid = Forcing::grid(f1);
    let dim = f1.dim();
    if dim < 2 {
        return Err(Error::InvalidArgument("linearized forcing needs at least 2 components".into()));
    }
    let limit = CFL_RATIO * grid.spacing();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolated { dt, limit });
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration {duration} must be positive")));
    }
    let n_steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = duration / n_steps as f64;
    let sys = Linearized::new(grid, dim);
    let len = grid.n_points() * dim;
    let mut v = vec![0.0; len];
    let mut u = vec![0.0; len];
    let mut f = vec![0.0; len];
    let mut acc = vec![0.0; len];
    f1.sample(0.0, &[], &mut f);
    sys.accel(&v, &f, &mut acc);
    let mut out = LinearizedTrajectory {
        grid,
        dim,
        times: vec![0.0],
        phi: vec![v.clone()],
        phi_t: vec![u.clone()],
        fbar: vec![0.0],
    };
    let half = 0.5 * dt;
    for s in 1..=n_steps {
        for i in 0..len {
            u[i] += half * acc[i];
            v[i] += dt * u[i];
        }
        let t = s as f64 * dt;
        f1.sample(t, &[], &mut f);
        sys.accel(&v, &f, &mut acc);
        for i in 0..len {
            u[i] += half * acc[i];
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NanDetected { time: t });
        }
        out.times.push(t);
        out.fbar.push(fbar(&grid, dim, &v, &u));
        out.phi.push(v.clone());
        out.phi_t.push(u.clone());
    }
    Ok(out)
}

/// Result of the randomized small-time positivity check.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallTimeReport {
    pub min_fbar: f64,
    pub counted: usize,
    pub discarded: usize,
    /// Largest `|φ̄₁|` at points farther than `t` from the control region, over all times.
    pub cone_leak: f64,
}

/// Nontriviality threshold on the control norm.
pub const NONTRIVIAL_NORM: f64 = 1e-6;
/// Highest spatial Fourier mode in the random ensemble.
pub const ENSEMBLE_MODES: usize = 8;

/// Coefficients of one random control: per component, `2·MODES + 1` spatial
/// coefficients and three temporal modulation coefficients.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    spatial: Vec<f64>,
    temporal: [f64; 3],
}

impl EnsembleMember {
    fn draw(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let per = 2 * ENSEMBLE_MODES + 1;
        let spatial = (0..dim * per).map(|_| StandardNormal.sample(rng)).collect();
        let temporal = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        Self { spatial, temporal }
    }

    fn value(&self, c: usize, t: f64, x: f64, duration: f64) -> f64 {
        let per = 2 * ENSEMBLE_MODES + 1;
        let co = &self.spatial[c * per..(c + 1) * per];
        let mut s = co[0];
        for m in 1..=ENSEMBLE_MODES {
            let (sm, cm) = (m as f64 * x).sin_cos();
            s += co[2 * m - 1] * cm + co[2 * m] * sm;
        }
        let r = std::f64::consts::PI * t / duration;
        let env = r.sin().powi(2);
        let modulation = self.temporal[0] + self.temporal[1] * r.cos() + self.temporal[2] * (2.0 * r).sin();
        s * env * modulation
    }
}

/// Draws `n` ensemble members from a ChaCha8 stream seeded with `seed`.
pub fn draw_ensemble(n: usize, dim: usize, seed: u64) -> Vec<EnsembleMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| EnsembleMember::draw(&mut rng, dim)).collect()
}

/// Samples an ensemble member as a control supported in `region`.
pub fn ensemble_control(
    member: &EnsembleMember,
    grid: Grid,
    region: ControlRegion,
    dim: usize,
    duration: f64,
    dt: f64,
) -> Result<ControlSignal> {
    ControlSignal::from_fn(grid, region, dim, dt, duration, |t, x| {
        (0..dim).map(|c| member.value(c, t, x, duration)).collect()
    })
}

/// Minimum of `F̄(T)` over random nontrivial controls supported in `(−a, a)`,
/// together with the finite-speed check.
pub fn small_time_positive_check(
    a: f64,
    duration: f64,
    n_samples: usize,
    seed: u64,
    grid: Grid,
    mode: ExecMode,
) -> Result<SmallTimeReport> {
    use std::f64::consts::FRAC_PI_2;
    if !(a > 0.0 && a < FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!("half-width {a} must lie in (0, π/2)")));
    }
    if !(duration > 0.0 && duration < FRAC_PI_2 - a) {
        return Err(Error::InvalidArgument(format!("T = {duration} must lie in (0, π/2 − a)")));
    }
    let dim = 3;
    let region = ControlRegion::centered(a)?;
    let dt = CFL_RATIO * grid.spacing();
    let members = draw_ensemble(n_samples, dim, seed);
    let results = map_ordered(mode, &members, |m| -> Result<Option<(f64, f64)>> {
        let ctrl = ensemble_control(m, grid, region, dim, duration, dt)?;
        if ctrl.l2_norm() < NONTRIVIAL_NORM {
            return Ok(None);
        }
        let traj = linearized_solve(&ctrl, duration, dt)?;
        let mut leak = 0.0f64;
        for (t, v) in traj.times.iter().zip(&traj.phi) {
            for (j, x) in grid.nodes().into_iter().enumerate() {
                if region.distance(x) > *t {
                    for c in 0..dim {
                        leak = leak.max(v[j * dim + c].abs());
                    }
                }
            }
        }
        Ok(Some((traj.final_fbar(), leak)))
    });
    let mut report = SmallTimeReport {
        min_fbar: f64::INFINITY,
        counted: 0,
        discarded: 0,
        cone_leak: 0.0,
    };
    for r in results {
        match r? {
            Some((f, leak)) => {
                report.counted += 1;
                report.min_fbar = report.min_fbar.min(f);
                report.cone_leak = report.cone_leak.max(leak);
            }
            None => report.discarded += 1,
        }
    }
    Ok(report)
}

/// Time profile returning `[b, b', b'']`.
pub type TimeProfile = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// `b(t) = 3(t/T)² − 2(t/T)³`.
pub fn smoothstep_profile(duration: f64) -> TimeProfile {
    Arc::new(move |t: f64| {
        let s = t / duration;
        [
            s * s * (3.0 - 2.0 * s),
            6.0 * s * (1.0 - s) / duration,
            (6.0 - 12.0 * s) / (duration * duration),
        ]
    })
}

/// `∫ (φ₀'² − φ₀²)` for `φ₀ = cos(πx/a₁)` on `(−a₁/2, a₁/2)`, by composite Simpson.
pub fn raw_profile_integral(a1: f64) -> f64 {
    let m = 20_000;
    let lo = -0.5 * a1;
    let h = a1 / m as f64;
    let k = std::f64::consts::PI / a1;
    let f = |x: f64| {
        let d = -k * (k * x).sin();
        let v = (k * x).cos();
        d * d - v * v
    };
    let mut s = f(lo) + f(-lo);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// The explicit negative-direction construction and its checks.
#[derive(Debug, Clone)]
pub struct NegativeConstruction {
    pub control: ControlSignal,
    /// `∫ (φ₁'² − φ₁²)` of the mollified profile, by dense quadrature.
    pub fbar_exact: f64,
    /// `F̄(T)` from simulating the linearized equation with `control`.
    pub fbar_simulated: f64,
    /// `∫ (φ₀'² − φ₀²)` of the raw profile.
    pub raw_integral: f64,
    pub a1: f64,
    pub mollifier_radius: f64,
}

/// C² bump `c(1 − (y/r)²)³` of unit mass and its derivative.
fn bump(y: f64, r: f64) -> (f64, f64) {
    let s = y / r;
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let c = 35.0 / (32.0 * r);
    let q = 1.0 - s * s;
    (c * q.powi(3), c * 3.0 * q * q * (-2.0 * s) / r)
}

/// Mollified profile `φ₁ = φ₀ * ρ_r`, returning `[φ₁, φ₁', φ₁'']` at `x`.
fn mollified(x: f64, a1: f64, r: f64) -> [f64; 3] {
    let k = std::f64::consts::PI / a1;
    let half = 0.5 * a1;
    let phi0 = |y: f64| if y.abs() < half { (k * y).cos() } else { 0.0 };
    let dphi0 = |y: f64| if y.abs() < half { -k * (k * y).sin() } else { 0.0 };
    let m = 400;
    let h = 2.0 * r / m as f64;
    let mut out = [0.0; 3];
    for i in 0..=m {
        let y = -r + i as f64 * h;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (rho, drho) = bump(y, r);
        let z = wrap_signed(x - y);
        out[0] += w * phi0(z) * rho;
        out[1] += w * dphi0(z) * rho;
        out[2] += w * dphi0(z) * drho;
    }
    out.map(|v| v * h / 3.0)
}

fn wrap_signed(x: f64) -> f64 {
    crate::grid::wrap_angle(x)
}

/// Builds `φ̄₁³ = b(t) φ₁(x)` with `φ₁` a mollification of `cos(πx/a₁)` on
/// `(−a₁/2, a₁/2)`, `a₁ = a + π/2`, and the control `f₁ = (0, 0, g)` with
/// `g = −b'' φ₁ + b φ₁'' + b φ₁`.
pub fn small_time_negative_construction(
    a: f64,
    duration: f64,
    grid: Grid,
    profile: Option<TimeProfile>,
) -> Result<NegativeConstruction> {
    use std::f64::consts::{FRAC_PI_2, PI};
    if !(a > FRAC_PI_2 && a < PI) {
        return Err(Error::InvalidArgument(format!("half-width {a} must lie in (π/2, π)")));
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("T = {duration} must be positive")));
    }
    let b = profile.unwrap_or_else(|| smoothstep_profile(duration));
    let [b0, db0, _] = b(0.0);
    let [bt, dbt, _] = b(duration);
    let tol = 1e-12;
    if b0.abs() > tol || db0.abs() > tol || (bt - 1.0).abs() > tol || dbt.abs() > tol {
        return Err(Error::InvalidArgument(
            "profile must satisfy b(0) = b'(0) = 0, b(T) = 1, b'(T) = 0".into(),
        ));
    }
    let a1 = a + FRAC_PI_2;
    let r = 0.5 * (a - 0.5 * a1);
    if !(r > 0.0) || 0.5 * a1 + r >= a {
        return Err(Error::Mollification(format!(
            "support {} would exceed the half-width {a}",
            0.5 * a1 + r.max(0.0)
        )));
    }
    let region = ControlRegion::centered(a)?;
    let profile_samples: Vec<[f64; 3]> = grid.nodes().into_iter().map(|x| mollified(x, a1, r)).collect();
    for (j, p) in profile_samples.iter().enumerate() {
        if p[0].abs() > 0.0 && !region.contains(grid.node(j)) {
            return Err(Error::Mollification(format!(
                "profile is nonzero at x = {} outside (−a, a)",
                grid.node(j)
            )));
        }
    }
    let dt = CFL_RATIO * grid.spacing();
    let n_steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = duration / n_steps as f64;
    let mut values = Vec::with_capacity((n_steps + 1) * grid.n_points() * 3);
    for i in 0..=n_steps {
        let [bv, _, bdd] = b(i as f64 * dt);
        for p in &profile_samples {
            values.extend([0.0, 0.0, -bdd * p[0] + bv * p[2] + bv * p[0]]);
        }
    }
    let control = ControlSignal::exact(grid, region, 3, dt, values)?;
    let traj = linearized_solve(&control, duration, dt)?;
    // Dense quadrature of ∫(φ₁'² − φ₁²) over the support.
    let lim = 0.5 * a1 + r;
    let m = 4000;
    let hq = 2.0 * lim / m as f64;
    let mut fbar_exact = 0.0;
    for i in 0..=m {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let [v, dv, _] = mollified(-lim + i as f64 * hq, a1, r);
        fbar_exact += w * (dv * dv - v * v);
    }
    fbar_exact *= hq / 3.0;
    Ok(NegativeConstruction {
        fbar_simulated: traj.final_fbar(),
        control,
        fbar_exact,
        raw_integral: raw_profile_integral(a1),
        a1,
        mollifier_radius: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn raw_profile_values() {
        assert!((raw_profile_integral(1.5 * PI) + 5.0 * PI / 12.0).abs() < 1e-9);
        assert!((raw_profile_integral(1.25 * PI) + 9.0 * PI / 40.0).abs() < 1e-9);
    }

    #[test]
    fn bump_has_unit_mass() {
        let r = 0.3;
        let m = 10000;
        let h = 2.0 * r / m as f64;
        let s: f64 = (0..m).map(|i| bump(-r + (i as f64 + 0.5) * h, r).0).sum::<f64>() * h;
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let grid = Grid::new(32).unwrap();
        let f = ControlSignal::zero(grid, ControlRegion::full(), 3, 0.05, 1.0).unwrap();
        let tr = linearized_solve(&f, 1.0, 0.05).unwrap();
        assert!(tr.phi.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        assert!(tr.fbar.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn trivial_profile_is_rejected() {
        let grid = Grid::new(64).unwrap();
        let zero: TimeProfile = Arc::new(|_| [0.0; 3]);
        assert!(small_time_negative_construction(0.75 * PI, 1.0, grid, Some(zero)).is_err());
        assert!(small_time_negative_construction(0.4 * PI, 1.0, grid, None).is_err());
    }

    #[test]
    fn ensemble_is_reproducible() {
        let a = draw_ensemble(3, 3, 11);
        let b = draw_ensemble(3, 3, 11);
        assert_eq!(a[2].spatial, b[2].spatial);
        assert_eq!(a[2].temporal, b[2].temporal);
    }
}
