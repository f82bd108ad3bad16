//! Detection and reconstruction of approximate harmonic maps.
//!
//! Harmonic maps `S¹ → S^k` are the closed geodesics
//! `γ(x) = μ cos(Nx) − ν sin(Nx)` with `μ ⊥ ν` unit vectors, plus the
//! constant maps (`N = 0`).

use std::f64::consts::TAU;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fourier::fourier_coefficients;
use crate::grid::Grid;
use crate::solver::Trajectory;
use crate::state::{dot, energy, fmt17, FieldState};

/// Energy at or below which the constant-map branch is used.
pub const HARMONIC_FLOOR: f64 = 0.1;
/// Smallest admissible `|2α₀|` for the geodesic reconstruction.
pub const MODE_FLOOR: f64 = 0.05;
/// Minimum number of saved states inside a bump window.
pub const MIN_WINDOW_SAMPLES: usize = 32;

/// Closed geodesic `μ cos(Nx) − ν sin(Nx)`, or the constant `μ` when `N = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicMap {
    mu: Vec<f64>,
    nu: Vec<f64>,
    n: u32,
}

impl GeodesicMap {
    pub fn new(mu: Vec<f64>, nu: Vec<f64>, n: u32) -> Result<Self> {
        if mu.len() < 2 || nu.len() != mu.len() {
            return Err(Error::InvalidArgument("μ and ν must have the same dimension ≥ 2".into()));
        }
        let tol = 1e-12;
        let check = |v: &[f64]| (dot(v, v).sqrt() - 1.0).abs() <= tol;
        if !check(&mu) {
            return Err(Error::NotUnit { norm: dot(&mu, &mu).sqrt() });
        }
        if n >= 1 && (!check(&nu) || dot(&mu, &nu).abs() > tol) {
            return Err(Error::InvalidArgument("ν must be a unit vector orthogonal to μ".into()));
        }
        Ok(Self { mu, nu, n })
    }

    /// Constant map at the unit vector `p`.
    pub fn constant(p: Vec<f64>) -> Result<Self> {
        let nu = vec![0.0; p.len()];
        Self::new(p, nu, 0)
    }

    /// `(cos Nx, sin Nx, 0, …)` in `R^{k+1}`.
    pub fn reference(k: usize, n: u32) -> Result<Self> {
        let mut mu = vec![0.0; k + 1];
        let mut nu = vec![0.0; k + 1];
        mu[0] = 1.0;
        nu[1] = -1.0;
        Self::new(mu, nu, n)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn winding(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        if self.n == 0 {
            return self.mu.clone();
        }
        let (s, c) = (self.n as f64 * x).sin_cos();
        self.mu.iter().zip(&self.nu).map(|(m, v)| m * c - v * s).collect()
    }

    /// Exact energy `2πN²`.
    pub fn energy(&self) -> f64 {
        TAU * (self.n as f64).powi(2)
    }

    /// The state `(γ, 0)` sampled on `grid`.
    pub fn state(&self, grid: Grid) -> Result<FieldState> {
        let k = self.k();
        FieldState::from_fn(grid, k, |x| self.eval(x), |_| vec![0.0; k + 1])
    }

    /// The representative `(−μ, −ν)`, which is `γ` shifted by `π/N`.
    pub fn flipped(&self) -> Self {
        Self {
            mu: self.mu.iter().map(|v| -v).collect(),
            nu: self.nu.iter().map(|v| -v).collect(),
            n: self.n,
        }
    }
}

/// Normalized `(1 − s²)³` bump on `[t_a, t_b]`, `s = (2t − t_a − t_b)/(t_b − t_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpWindow {
    ta: f64,
    tb: f64,
}

impl BumpWindow {
    pub fn new(ta: f64, tb: f64) -> Result<Self> {
        if !(tb > ta) || !ta.is_finite() || !tb.is_finite() {
            return Err(Error::InvalidArgument(format!("window [{ta}, {tb}] is empty")));
        }
        Ok(Self { ta, tb })
    }

    pub fn start(&self) -> f64 {
        self.ta
    }

    pub fn end(&self) -> f64 {
        self.tb
    }

    pub fn psi(&self, t: f64) -> f64 {
        if t <= self.ta || t >= self.tb {
            return 0.0;
        }
        let w = self.tb - self.ta;
        let s = (2.0 * t - self.ta - self.tb) / w;
        35.0 / (16.0 * w) * (1.0 - s * s).powi(3)
    }
}

/// Weighted time average `Σ_i φ(t_i, ·) ψ(t_i) Δt_i` over the saved states.
/// The trapezoid weights are renormalized to sum to one, so constant-in-time
/// data is reproduced exactly.
pub fn time_average(traj: &Trajectory, window: &BumpWindow) -> Result<Vec<f64>> {
    let states = &traj.states;
    let (t_first, t_last) = (states[0].time(), states[states.len() - 1].time());
    if window.start() < t_first - 1e-12 || window.end() > t_last + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "window [{}, {}] is outside the trajectory span [{t_first}, {t_last}]",
            window.start(),
            window.end()
        )));
    }
    let inside: Vec<usize> = (0..states.len())
        .filter(|&i| {
            let t = states[i].time();
            t > window.start() && t < window.end()
        })
        .collect();
    if inside.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::WindowUnresolved {
            samples: inside.len(),
        });
    }
    let mut weights = Vec::with_capacity(inside.len());
    for &i in &inside {
        let t = states[i].time();
        let lo = if i > 0 { states[i - 1].time() } else { t };
        let hi = if i + 1 < states.len() { states[i + 1].time() } else { t };
        weights.push(window.psi(t) * 0.5 * (hi - lo));
    }
    let total: f64 = weights.iter().sum();
    let mut avg = vec![0.0; states[0].phi().len()];
    for (&i, w) in inside.iter().zip(&weights) {
        for (a, p) in avg.iter_mut().zip(states[i].phi()) {
            *a += p * w / total;
        }
    }
    Ok(avg)
}

/// Distance `δ*` from `E` to `{2πn²}` and the nearest `n` (ties to the smaller).
pub fn energy_gap(e: f64) -> (f64, u64) {
    let base = (e.max(0.0) / TAU).sqrt().floor() as u64;
    let mut best = (f64::INFINITY, 0);
    for n in base.saturating_sub(1)..=base + 1 {
        let gap = (e - TAU * (n as f64).powi(2)).abs();
        if gap < best.0 {
            best = (gap, n);
        }
    }
    best
}

fn h1l2_distance(state: &FieldState, target: &[f64]) -> f64 {
    let grid = state.grid();
    let d = state.dim();
    let inv = 0.5 / grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n_points() {
        let (jp, jm) = (grid.next(j), grid.prev(j));
        for c in 0..d {
            let diff = state.phi()[j * d + c] - target[j * d + c];
            let dx = (state.phi()[jp * d + c] - state.phi()[jm * d + c]) * inv
                - (target[jp * d + c] - target[jm * d + c]) * inv;
            let v = state.phi_t()[j * d + c];
            acc += diff * diff + dx * dx + v * v;
        }
    }
    (acc * grid.spacing()).sqrt()
}

/// H¹×L² distance `‖(φ, φ_t) − (γ, 0)‖`, with derivatives of both by
/// central differences.
pub fn geodesic_distance(state: &FieldState, g: &GeodesicMap) -> Result<f64> {
    if g.k() != state.k() {
        return Err(Error::InvalidArgument("geodesic and state dimensions differ".into()));
    }
    let target: Vec<f64> = state.grid().nodes().into_iter().flat_map(|x| g.eval(x)).collect();
    Ok(h1l2_distance(state, &target))
}

/// Constant map at the normalized mean of `φ`.
pub fn nearest_constant(state: &FieldState) -> Result<(GeodesicMap, f64)> {
    let d = state.dim();
    let mut mean = vec![0.0; d];
    for j in 0..state.grid().n_points() {
        for (m, p) in mean.iter_mut().zip(state.point(j)) {
            *m += p;
        }
    }
    let norm = dot(&mean, &mean).sqrt();
    if !(norm > 1e-12) {
        return Err(Error::DegenerateMode { magnitude: norm });
    }
    mean.iter_mut().for_each(|m| *m /= norm);
    let g = GeodesicMap::constant(mean)?;
    let dist = geodesic_distance(state, &g)?;
    Ok((g, dist))
}

/// Geodesic reconstruction from the dominant Fourier mode of `φ`.
pub fn nearest_harmonic(state: &FieldState) -> Result<(GeodesicMap, f64)> {
    if energy(state) <= HARMONIC_FLOOR {
        return nearest_constant(state);
    }
    let grid = state.grid();
    let d = state.dim();
    let table = fourier_coefficients(&grid, state.phi(), d)?;
    let mut n0 = 1i64;
    let mut best = -1.0;
    for n in 1..=table.max_mode() {
        let p = table.mode_power(n) + table.mode_power(-n);
        if p > best {
            best = p;
            n0 = n;
        }
    }
    let a = table.mode(n0);
    let two_alpha: Vec<f64> = a.iter().map(|z| 2.0 * z.re).collect();
    let two_beta: Vec<f64> = a.iter().map(|z| 2.0 * z.im).collect();
    let mag = dot(&two_alpha, &two_alpha).sqrt();
    if mag < MODE_FLOOR {
        return Err(Error::DegenerateMode { magnitude: mag });
    }
    let mu: Vec<f64> = two_alpha.iter().map(|v| v / mag).collect();
    let proj = dot(&two_beta, &mu);
    let mut nu: Vec<f64> = two_beta.iter().zip(&mu).map(|(b, m)| b - proj * m).collect();
    let nn = dot(&nu, &nu).sqrt();
    if nn < MODE_FLOOR {
        return Err(Error::DegenerateMode { magnitude: nn });
    }
    nu.iter_mut().for_each(|v| *v /= nn);
    // Re-orthogonalize once to reach the 1e-12 invariant after rounding.
    let p2 = dot(&nu, &mu);
    nu.iter_mut().zip(&mu).for_each(|(v, m)| *v -= p2 * m);
    let nn = dot(&nu, &nu).sqrt();
    nu.iter_mut().for_each(|v| *v /= nn);
    let g = GeodesicMap::new(mu, nu, n0 as u32)?;
    let dist = geodesic_distance(state, &g)?;
    Ok((g, dist))
}

/// Closest of the reconstructed geodesic and the nearest constant map.
pub fn nearest_harmonic_or_constant(state: &FieldState) -> Result<(GeodesicMap, f64)> {
    let constant = nearest_constant(state);
    let geodesic = if energy(state) <= HARMONIC_FLOOR {
        None
    } else {
        match nearest_harmonic(state) {
            Ok(g) => Some(g),
            Err(Error::DegenerateMode { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    match (constant, geodesic) {
        (Ok(c), Some(g)) => Ok(if c.1 < g.1 { c } else { g }),
        (Ok(c), None) => Ok(c),
        (Err(_), Some(g)) => Ok(g),
        (Err(e), None) => Err(e),
    }
}

/// Whether the state lies within `eps` of some harmonic map (constants included).
pub fn is_approx_harmonic(state: &FieldState, eps: f64) -> bool {
    nearest_harmonic_or_constant(state).is_ok_and(|(_, d)| d <= eps)
}

/// `max_j |φ̃_xx + (E0/2π) φ̃|_j` for node-major samples with `dim` components.
pub fn approximate_kg_residual(grid: &Grid, avg: &[f64], dim: usize, e0: f64) -> f64 {
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    let lambda = e0 / TAU;
    let mut worst = 0.0f64;
    for j in 0..grid.n_points() {
        let (jp, jm) = (grid.next(j), grid.prev(j));
        let mut s = 0.0;
        for c in 0..dim {
            let lap = (avg[jp * dim + c] - 2.0 * avg[j * dim + c] + avg[jm * dim + c]) * inv;
            let r = lap + lambda * avg[j * dim + c];
            s += r * r;
        }
        worst = worst.max(s.sqrt());
    }
    worst
}

/// One row of the diagnostic table.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicRow {
    pub time: f64,
    pub energy: f64,
    pub delta_star: f64,
    pub nearest_n: u32,
    pub distance: f64,
}

/// Diagnostics for every saved state of a trajectory.
pub fn harmonic_report(traj: &Trajectory) -> Vec<HarmonicRow> {
    traj.states
        .iter()
        .map(|s| {
            let e = energy(s);
            let (delta_star, _) = energy_gap(e);
            let (n, distance) = match nearest_harmonic_or_constant(s) {
                Ok((g, d)) => (g.winding(), d),
                Err(_) => (0, f64::NAN),
            };
            HarmonicRow {
                time: s.time(),
                energy: e,
                delta_star,
                nearest_n: n,
                distance,
            }
        })
        .collect()
}

/// Writes `time, energy, delta_star, nearest_N, distance` rows.
pub fn write_harmonic_report<W: Write>(
    rows: &[HarmonicRow],
    mut w: W,
    comments: &[String],
) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "time,energy,delta_star,nearest_N,distance")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(r.time),
            fmt17(r.energy),
            fmt17(r.delta_star),
            r.nearest_n,
            fmt17(r.distance)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn energy_gap_examples() {
        assert_eq!(energy_gap(TAU), (0.0, 1));
        let (d, n) = energy_gap(3.0 * PI);
        assert!((d - PI).abs() < 1e-14);
        assert_eq!(n, 1);
        assert_eq!(energy_gap(0.5), (0.5, 0));
        for n in 0..=5u64 {
            assert_eq!(energy_gap(TAU * (n * n) as f64), (0.0, n));
        }
        // Midpoint between 0 and 2π ties to n = 0.
        assert_eq!(energy_gap(PI).1, 0);
    }

    #[test]
    fn bump_integrates_to_one() {
        let w = BumpWindow::new(1.0, 4.0).unwrap();
        let m = 20000;
        let h = 3.0 / m as f64;
        let s: f64 = (0..m).map(|i| w.psi(1.0 + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((s - 1.0).abs() < 1e-10);
        assert_eq!(w.psi(1.0), 0.0);
        assert_eq!(w.psi(4.0), 0.0);
        assert_eq!(w.psi(5.0), 0.0);
    }

    #[test]
    fn geodesic_invariants() {
        assert!(GeodesicMap::new(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], 1).is_err());
        let g = GeodesicMap::reference(2, 2).unwrap();
        assert_eq!(g.eval(0.3), vec![(0.6f64).cos(), (0.6f64).sin(), 0.0]);
        let s = g.state(Grid::new(256).unwrap()).unwrap();
        let h = TAU / 256.0;
        assert!((energy(&s) - 8.0 * PI).abs() < 8.0 * PI * 4.0 * h * h);
    }

    #[test]
    fn kg_residual_examples() {
        let grid = Grid::new(256).unwrap();
        let eq: Vec<f64> = grid.nodes().iter().flat_map(|x| [x.cos(), x.sin(), 0.0]).collect();
        let h2 = grid.spacing().powi(2);
        assert!(approximate_kg_residual(&grid, &eq, 3, TAU) < h2);
        let r = approximate_kg_residual(&grid, &eq, 3, 2.0 * TAU);
        assert!((r - 1.0).abs() < h2);
        let n2: Vec<f64> = grid
            .nodes()
            .iter()
            .flat_map(|x| [(2.0 * x).cos(), (2.0 * x).sin(), 0.0])
            .collect();
        assert!(approximate_kg_residual(&grid, &n2, 3, 4.0 * TAU) < 4.0 * 4.0 * h2);
    }
}
