//! The linear scalar equation `v_tt = v_xx + m·v − c(t, x)` on the periodic grid.
//!
//! With `m = 1` this is the Klein–Gordon equation obtained by linearizing the
//! wave maps equation at the equator in the normal direction; with `m = N²`
//! at the `N`-fold equator; with `m = 0` it is the polar form of the
//! circle-valued equation.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::{ControlSignal, Forcing, CFL_RATIO};

/// Scalar field state `(v, v_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    v: Vec<f64>,
    v_t: Vec<f64>,
    time: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, v: Vec<f64>, v_t: Vec<f64>, time: f64) -> Result<Self> {
        if v.len() != grid.n_points() || v_t.len() != grid.n_points() {
            return Err(Error::InvalidState("scalar field does not match the grid".into()));
        }
        if v.iter().chain(&v_t).any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("scalar field has non-finite values".into()));
        }
        Ok(Self { grid, v, v_t, time })
    }

    pub fn zero(grid: Grid) -> Self {
        let n = grid.n_points();
        Self {
            grid,
            v: vec![0.0; n],
            v_t: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: Grid, v: impl Fn(f64) -> f64, v_t: impl Fn(f64) -> f64) -> Self {
        let nodes = grid.nodes();
        Self {
            grid,
            v: nodes.iter().map(|&x| v(x)).collect(),
            v_t: nodes.iter().map(|&x| v_t(x)).collect(),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_t(&self) -> &[f64] {
        &self.v_t
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    /// `F = ∫ (v_x² + v_t² − m v²)` with central differences.
    pub fn quadratic_form(&self, mass: f64) -> f64 {
        let d1 = self.grid.d1(&self.v);
        d1.iter()
            .zip(&self.v_t)
            .zip(&self.v)
            .map(|((vx, vt), v)| vx * vx + vt * vt - mass * v * v)
            .sum::<f64>()
            * self.grid.spacing()
    }

    /// `(‖a‖² + ‖a_x‖² + ‖a_t‖²)^{1/2}` of the difference, `a_x` by central differences.
    pub fn h1l2_distance(&self, other: &ScalarField) -> f64 {
        let dv: Vec<f64> = self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect();
        let dx = self.grid.d1(&dv);
        let s: f64 = dv
            .iter()
            .zip(&dx)
            .zip(self.v_t.iter().zip(&other.v_t))
            .map(|((a, b), (c, d))| a * a + b * b + (c - d) * (c - d))
            .sum();
        (s * self.grid.spacing()).sqrt()
    }
}

/// Uniform-in-time discretization of the scalar equation on `[0, duration]`.
#[derive(Debug, Clone)]
pub(crate) struct KgSystem {
    pub grid: Grid,
    pub mass: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl KgSystem {
    /// Chooses the largest step `≤ dt` dividing `duration`. The scalar scheme
    /// is stable up to `dt = spacing`.
    pub fn new(grid: Grid, mass: f64, duration: f64, dt: f64) -> Result<Self> {
        let limit = grid.spacing();
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolated { dt, limit });
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidArgument(format!("duration {duration} must be positive")));
        }
        let n_steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            grid,
            mass,
            dt: duration / n_steps as f64,
            n_steps,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n_points()
    }

    pub fn n_times(&self) -> usize {
        self.n_steps + 1
    }

    /// Trapezoid weight of time sample `i`.
    pub fn time_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// `out = D²v + m v`.
    pub fn apply_k(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        let inv = 1.0 / (self.grid.spacing() * self.grid.spacing());
        for j in 0..n {
            let lap = (v[self.grid.next(j)] - 2.0 * v[j] + v[self.grid.prev(j)]) * inv;
            out[j] = lap + self.mass * v[j];
        }
    }

    /// Forward solve from `(v, u)` with sources `c` (`n_times × n`, or empty for
    /// none). Calls `visit(i, v, u)` at every time index.
    pub fn forward(
        &self,
        v0: &[f64],
        u0: &[f64],
        c: &[f64],
        mut visit: impl FnMut(usize, &[f64], &[f64]),
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let half = 0.5 * self.dt;
        let mut v = v0.to_vec();
        let mut u = u0.to_vec();
        let mut kv = vec![0.0; n];
        let src = |i: usize, j: usize| if c.is_empty() { 0.0 } else { c[i * n + j] };
        visit(0, &v, &u);
        self.apply_k(&v, &mut kv);
        for i in 0..self.n_steps {
            for j in 0..n {
                u[j] += half * (kv[j] - src(i, j));
                v[j] += self.dt * u[j];
            }
            self.apply_k(&v, &mut kv);
            for j in 0..n {
                u[j] += half * (kv[j] - src(i + 1, j));
            }
            visit(i + 1, &v, &u);
        }
        (v, u)
    }

    /// Euclidean gradient of `⟨v̄, v_N⟩ + ⟨ū, u_N⟩` with respect to the sources.
    pub fn adjoint(&self, vbar: &[f64], ubar: &[f64]) -> Vec<f64> {
        let n = self.n();
        let half = 0.5 * self.dt;
        let mut cbar = vec![0.0; self.n_times() * n];
        let mut vb = vbar.to_vec();
        let mut ub = ubar.to_vec();
        let mut tmp = vec![0.0; n];
        for i in (0..self.n_steps).rev() {
            // u' = p + dt/2 (K v' − c_{i+1})
            self.apply_k(&ub, &mut tmp);
            for j in 0..n {
                vb[j] += half * tmp[j];
                cbar[(i + 1) * n + j] -= half * ub[j];
            }
            // v' = v + dt p, then p = u + dt/2 (K v − c_i); ub now holds p̄.
            for j in 0..n {
                ub[j] += self.dt * vb[j];
            }
            self.apply_k(&ub, &mut tmp);
            for j in 0..n {
                vb[j] += half * tmp[j];
                cbar[i * n + j] -= half * ub[j];
            }
        }
        cbar
    }
}

/// Solves `v_tt = v_xx + m v − g` from `initial` over `duration`, returning the
/// state at every step. The step is the largest value `≤ dt` dividing `duration`.
pub fn kg_solve(
    initial: &ScalarField,
    g: Option<&ControlSignal>,
    mass: f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<ScalarField>> {
    let grid = initial.grid();
    let limit = CFL_RATIO * grid.spacing();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolated { dt, limit });
    }
    let sys = KgSystem::new(grid, mass, duration, dt)?;
    let n = grid.n_points();
    let c = match g {
        Some(sig) => {
            if sig.dim() != 1 || Forcing::grid(sig) != grid {
                return Err(Error::InvalidArgument("kg forcing must be scalar on the same grid".into()));
            }
            let mut c = vec![0.0; sys.n_times() * n];
            for i in 0..sys.n_times() {
                sig.sample(initial.time() + i as f64 * sys.dt, &[], &mut c[i * n..(i + 1) * n]);
            }
            c
        }
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(sys.n_times());
    let t0 = initial.time();
    sys.forward(initial.v(), initial.v_t(), &c, |i, v, u| {
        out.push(ScalarField {
            grid,
            v: v.to_vec(),
            v_t: u.to_vec(),
            time: t0 + i as f64 * sys.dt,
        });
    });
    if out.iter().any(|s| s.v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NanDetected { time: t0 + duration });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ControlRegion;

    #[test]
    fn adjoint_matches_forward_pairing() {
        let grid = Grid::new(16).unwrap();
        let sys = KgSystem::new(grid, 1.0, 1.0, 0.1).unwrap();
        let n = 16;
        let c: Vec<f64> = (0..sys.n_times() * n).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
        let vb: Vec<f64> = (0..n).map(|j| (j as f64).sin()).collect();
        let ub: Vec<f64> = (0..n).map(|j| (j as f64 * 0.3).cos()).collect();
        let zero = vec![0.0; n];
        let (v, u) = sys.forward(&zero, &zero, &c, |_, _, _| {});
        let lhs: f64 = v.iter().zip(&vb).map(|(a, b)| a * b).sum::<f64>()
            + u.iter().zip(&ub).map(|(a, b)| a * b).sum::<f64>();
        let cbar = sys.adjoint(&vb, &ub);
        let rhs: f64 = c.iter().zip(&cbar).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid::new(32).unwrap();
        let out = kg_solve(&ScalarField::zero(grid), None, 1.0, 1.0, 0.05).unwrap();
        assert!(out.iter().all(|s| s.v().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn step_divides_duration() {
        let grid = Grid::new(32).unwrap();
        let g = ControlSignal::zero(grid, ControlRegion::full(), 1, 0.05, 1.0).unwrap();
        let out = kg_solve(&ScalarField::zero(grid), Some(&g), 1.0, 1.0, 0.07).unwrap();
        assert!((out.last().unwrap().time() - 1.0).abs() < 1e-14);
    }
}
