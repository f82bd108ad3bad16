//! Energy-lowering controls near closed geodesics.

use nalgebra::DMatrix;

use super::hum::{hum_control, kg_exact_control_with, HumOptions, HumProblem};
use super::kg::ScalarField;
use super::GramianSolveReport;
use crate::error::{Error, Result};
use crate::grid::{ControlRegion, Grid};
use crate::harmonic::GeodesicMap;
use crate::solver::ControlSignal;
use crate::state::{dot, FieldState};

/// Duration of one drop phase.
pub const DROP_TIME: f64 = std::f64::consts::TAU;

/// Orthogonal `A` with `A γ(x) = (cos Nx, sin Nx, 0, …)`: rows `μ`, `−ν`, then
/// a Gram–Schmidt completion from the standard basis.
pub fn rotation_align(g: &GeodesicMap) -> Result<DMatrix<f64>> {
    if g.winding() == 0 {
        return Err(Error::InvalidArgument("rotation_align needs N >= 1".into()));
    }
    let d = g.k() + 1;
    let mu = g.mu();
    let nu = g.nu();
    if (dot(mu, mu).sqrt() - 1.0).abs() > 1e-10
        || (dot(nu, nu).sqrt() - 1.0).abs() > 1e-10
        || dot(mu, nu).abs() > 1e-10
    {
        return Err(Error::InvalidArgument("degenerate (μ, ν) pair".into()));
    }
    let mut rows: Vec<Vec<f64>> = vec![mu.to_vec(), nu.iter().map(|v| -v).collect()];
    let mut used = vec![false; d];
    while rows.len() < d {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (i, u) in used.iter().enumerate() {
            if *u {
                continue;
            }
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            for r in &rows {
                let s = dot(&e, r);
                e.iter_mut().zip(r).for_each(|(a, b)| *a -= s * b);
            }
            let n = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|b| n > b.2 + 1e-12) {
                best = Some((i, e, n));
            }
        }
        let (i, mut e, n) = best.expect("basis completion");
        used[i] = true;
        e.iter_mut().for_each(|v| *v /= n);
        // Second pass for orthogonality to rounding.
        for r in &rows {
            let s = dot(&e, r);
            e.iter_mut().zip(r).for_each(|(a, b)| *a -= s * b);
        }
        let n = dot(&e, &e).sqrt();
        e.iter_mut().for_each(|v| *v /= n);
        rows.push(e);
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

/// `max_x |A γ(x) − ū_N(x)|` over `samples` equispaced points.
pub fn alignment_error(a: &DMatrix<f64>, g: &GeodesicMap, samples: usize) -> f64 {
    let n = g.winding() as f64;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let x = std::f64::consts::TAU * i as f64 / samples as f64;
        let gx = g.eval(x);
        for r in 0..a.nrows() {
            let val: f64 = (0..a.ncols()).map(|c| a[(r, c)] * gx[c]).sum();
            let expect = match r {
                0 => (n * x).cos(),
                1 => (n * x).sin(),
                _ => 0.0,
            };
            worst = worst.max((val - expect).abs());
        }
    }
    worst
}

/// A synthesized drop control with its ingredients.
#[derive(Debug, Clone)]
pub struct DropControl {
    pub signal: ControlSignal,
    pub scalar: ControlSignal,
    pub rotation: DMatrix<f64>,
    pub report: GramianSolveReport,
    pub eps: f64,
}

/// `(2 − 2 cos(N h)) / h²`, the eigenvalue of `−D²` on `cos(N x)`: the mass of
/// the normal linearization of the discrete equation about a degree-`N` geodesic.
pub fn discrete_mass(grid: Grid, n: u32) -> f64 {
    let h = grid.spacing();
    (2.0 - 2.0 * (n as f64 * h).cos()) / (h * h)
}

/// `f = ε Aᵀ (0, 0, g, 0, …)ᵀ` on `[0, 2π] × ω`, with `A = rotation_align(harmonic)`
/// and `g` the HUM control of `v_tt = v_xx + N² v − g` from rest to `(−1, 0)`.
pub fn energy_drop_control(
    harmonic: &GeodesicMap,
    eps: f64,
    region: ControlRegion,
    grid: Grid,
    opts: &HumOptions,
) -> Result<DropControl> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    if harmonic.k() < 2 {
        return Err(Error::InvalidArgument("energy drop needs k >= 2".into()));
    }
    let rotation = rotation_align(harmonic)?;
    let target = ScalarField::from_fn(grid, |_| -1.0, |_| 0.0);
    let mass = discrete_mass(grid, harmonic.winding());
    let (scalar, report) = kg_exact_control_with(&target, region, DROP_TIME, mass, opts)?;
    let d = harmonic.k() + 1;
    let row: Vec<f64> = (0..d).map(|c| eps * rotation[(2, c)]).collect();
    let values: Vec<f64> = scalar
        .values()
        .iter()
        .flat_map(|g| row.iter().map(move |r| r * g))
        .collect();
    let signal = ControlSignal::exact(grid, region, d, scalar.dt(), values)?;
    Ok(DropControl {
        signal,
        scalar,
        rotation,
        report,
        eps,
    })
}

/// Drop control for a start `state` near `harmonic`: every normal component
/// `⟨φ, Aᵀe_c⟩`, `c ≥ 2`, is steered by its own HUM solve, the first to `(−ε, 0)`
/// and the rest to rest. At `state = harmonic` this equals [`energy_drop_control`].
pub fn energy_drop_control_from(
    state: &FieldState,
    harmonic: &GeodesicMap,
    eps: f64,
    region: ControlRegion,
    opts: &HumOptions,
) -> Result<DropControl> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    if harmonic.k() < 2 || state.k() != harmonic.k() {
        return Err(Error::InvalidArgument("energy drop needs k >= 2 and matching spheres".into()));
    }
    let grid = state.grid();
    let rotation = rotation_align(harmonic)?;
    let mass = discrete_mass(grid, harmonic.winding());
    let d = harmonic.k() + 1;
    let mut solves = Vec::with_capacity(d - 2);
    for c in 2..d {
        let axis: Vec<f64> = (0..d).map(|j| rotation[(c, j)]).collect();
        let n = grid.n_points();
        let w = (0..n).map(|j| dot(state.point(j), &axis)).collect();
        let w_t = (0..n).map(|j| dot(state.velocity(j), &axis)).collect();
        let goal = if c == 2 { -eps } else { 0.0 };
        let problem = HumProblem {
            grid,
            region,
            mass,
            duration: DROP_TIME,
            initial: Some(ScalarField::new(grid, w, w_t, 0.0)?),
            target: ScalarField::from_fn(grid, |_| goal, |_| 0.0),
        };
        let (g, report) = hum_control(&problem, opts)?;
        solves.push((axis, g, report));
    }
    let dt = solves[0].1.dt();
    let steps = solves[0].1.values().len();
    let mut values = vec![0.0; steps * d];
    for (axis, g, _) in &solves {
        for (i, gv) in g.values().iter().enumerate() {
            for (c, a) in axis.iter().enumerate() {
                values[i * d + c] += a * gv;
            }
        }
    }
    let signal = ControlSignal::exact(grid, region, d, dt, values)?;
    let (_, scalar, mut report) = solves.swap_remove(0);
    for (_, _, r) in &solves {
        report.residual = report.residual.max(r.residual);
        report.iterations = report.iterations.max(r.iterations);
    }
    Ok(DropControl {
        signal,
        scalar,
        rotation,
        report,
        eps,
    })
}
