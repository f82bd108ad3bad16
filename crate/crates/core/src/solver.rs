//! Time integration of the forced, damped wave maps equation
//!
//! ```text
//! φ_tt = P_φ(φ_xx − f − a φ_t) − |φ_t|² φ,    |φ| = 1,
//! ```
//!
//! where `P_φ` is the projection onto the tangent plane at `φ`. The scheme is a
//! RATTLE-type velocity Verlet step: the sphere constraint is enforced by a
//! normal multiplier in the position update and the velocity is projected
//! onto the new tangent plane. Damping enters trapezoidally.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{ControlRegion, Grid};
use crate::state::{apply_nodewise, dot, energy, fmt17, FieldState};

/// Default ratio `dt / spacing`.
pub const CFL_RATIO: f64 = 0.5;

/// Nonnegative damping coefficient `a(x)` supported in a control region.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingProfile {
    grid: Grid,
    a: Vec<f64>,
    region: ControlRegion,
}

impl DampingProfile {
    /// `a = a_max · χ_ω`.
    pub fn new(grid: Grid, region: ControlRegion, a_max: f64) -> Result<Self> {
        let a = region
            .cutoff_samples(&grid)
            .into_iter()
            .map(|c| a_max * c)
            .collect();
        Self::from_samples(grid, a, region)
    }

    pub fn from_samples(grid: Grid, a: Vec<f64>, region: ControlRegion) -> Result<Self> {
        if a.len() != grid.n_points() {
            return Err(Error::InvalidArgument("damping samples do not match grid".into()));
        }
        for (j, &v) in a.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("damping a[{j}] = {v} is negative")));
            }
            if v != 0.0 && !region.contains(grid.node(j)) {
                return Err(Error::InvalidArgument(format!(
                    "damping is nonzero at x = {} outside the region",
                    grid.node(j)
                )));
            }
        }
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("damping profile vanishes identically".into()));
        }
        Ok(Self { grid, a, region })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.a
    }

    pub fn region(&self) -> ControlRegion {
        self.region
    }

    /// `∫ a |φ_t|²` for a state on the same grid.
    pub fn damped_kinetic(&self, state: &FieldState) -> f64 {
        let d = state.dim();
        self.a
            .iter()
            .enumerate()
            .map(|(j, a)| a * dot(&state.phi_t()[j * d..(j + 1) * d], &state.phi_t()[j * d..(j + 1) * d]))
            .sum::<f64>()
            * self.grid.spacing()
    }
}

/// Ambient forcing `f(t, x)` entering the equation through its tangential part.
pub trait Forcing: Sync {
    /// Number of components per node.
    fn dim(&self) -> usize;

    fn grid(&self) -> Grid;

    /// Writes node-major samples of `f(t, ·)` into `out`. `phi` is the current
    /// position; forcings defined independently of the state ignore it.
    fn sample(&self, t: f64, phi: &[f64], out: &mut [f64]);
}

/// Time-sampled forcing on a uniform time grid `t0 + i·dt`, supported in a region.
///
/// Between samples the forcing is interpolated linearly; outside
/// `[t0, t0 + (n_times − 1)·dt]` it is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: Grid,
    region: ControlRegion,
    dim: usize,
    t0: f64,
    dt: f64,
    /// Layout `(i * n_points + j) * dim + c`.
    values: Vec<f64>,
}

impl ControlSignal {
    /// Builds a signal from raw samples, multiplying them by the cutoff `χ_ω`.
    pub fn new(
        grid: Grid,
        region: ControlRegion,
        dim: usize,
        dt: f64,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        let chi = region.cutoff_samples(&grid);
        Self::check_shape(&grid, dim, dt, &values)?;
        for (i, v) in values.iter_mut().enumerate() {
            *v *= chi[(i / dim) % grid.n_points()];
        }
        Ok(Self {
            grid,
            region,
            dim,
            t0: 0.0,
            dt,
            values,
        })
    }

    /// Builds a signal whose samples already vanish outside the region; no
    /// cutoff is applied.
    pub fn exact(
        grid: Grid,
        region: ControlRegion,
        dim: usize,
        dt: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::check_shape(&grid, dim, dt, &values)?;
        for (i, v) in values.iter().enumerate() {
            let x = grid.node((i / dim) % grid.n_points());
            if *v != 0.0 && !region.contains(x) {
                return Err(Error::InvalidArgument(format!(
                    "control is nonzero at x = {x} outside the region {region}"
                )));
            }
        }
        Ok(Self {
            grid,
            region,
            dim,
            t0: 0.0,
            dt,
            values,
        })
    }

    /// Samples `f(t_i, x_j)` on `[0, duration]`, then applies the cutoff. The
    /// step is shrunk from `dt` so that it divides `duration`.
    pub fn from_fn<F>(
        grid: Grid,
        region: ControlRegion,
        dim: usize,
        dt: f64,
        duration: f64,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> Vec<f64>,
    {
        let (n_times, dt) = time_samples(duration, dt)?;
        let mut values = Vec::with_capacity(n_times * grid.n_points() * dim);
        for i in 0..n_times {
            let t = i as f64 * dt;
            for x in grid.nodes() {
                let v = f(t, x);
                if v.len() != dim {
                    return Err(Error::InvalidArgument(format!("forcing must have {dim} components")));
                }
                values.extend(v);
            }
        }
        Self::new(grid, region, dim, dt, values)
    }

    pub fn zero(grid: Grid, region: ControlRegion, dim: usize, dt: f64, duration: f64) -> Result<Self> {
        let (n_times, dt) = time_samples(duration, dt)?;
        Self::exact(grid, region, dim, dt, vec![0.0; n_times * grid.n_points() * dim])
    }

    fn check_shape(grid: &Grid, dim: usize, dt: f64, values: &[f64]) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidArgument("control needs at least one component".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("control time step {dt} must be positive")));
        }
        let block = grid.n_points() * dim;
        if values.is_empty() || !values.len().is_multiple_of(block) {
            return Err(Error::InvalidArgument(format!(
                "control length {} is not a multiple of {block}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("control contains non-finite values".into()));
        }
        Ok(())
    }

    /// Shifts the time origin of the signal.
    pub fn starting_at(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn region(&self) -> ControlRegion {
        self.region
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn n_times(&self) -> usize {
        self.values.len() / (self.grid.n_points() * self.dim)
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + (self.n_times() - 1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Node-major samples at time index `i`.
    pub fn frame(&self, i: usize) -> &[f64] {
        let b = self.grid.n_points() * self.dim;
        &self.values[i * b..(i + 1) * b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multiplies all samples by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Applies a `dim × dim` matrix node-wise at every instant.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::InvalidArgument(format!("matrix must be {0}x{0}", self.dim)));
        }
        let mut out = self.clone();
        out.values = apply_nodewise(a, &self.values, self.dim);
        Ok(out)
    }

    /// Embeds a scalar signal as component `c` of a `dim`-vector signal.
    pub fn embed(&self, dim: usize, c: usize) -> Result<Self> {
        if self.dim != 1 || c >= dim {
            return Err(Error::InvalidArgument("embed needs a scalar signal and c < dim".into()));
        }
        let mut values = vec![0.0; self.values.len() * dim];
        for (i, v) in self.values.iter().enumerate() {
            values[i * dim + c] = *v;
        }
        Ok(Self {
            values,
            dim,
            ..self.clone()
        })
    }

    /// `(Σ_i w_i Σ_j |f_ij|² spacing)^{1/2}` with trapezoid weights in time.
    pub fn l2_norm(&self) -> f64 {
        let n = self.n_times();
        let mut acc = 0.0;
        for i in 0..n {
            let w = if n == 1 {
                1.0
            } else if i == 0 || i == n - 1 {
                0.5 * self.dt
            } else {
                self.dt
            };
            acc += w * self.frame(i).iter().map(|v| v * v).sum::<f64>();
        }
        (acc * self.grid.spacing()).sqrt()
    }

    /// Largest absolute sample.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Columnar text format: header `# wavemap-control n=<n> dt=<dt> region=<start>,<end>`,
    /// then one row `t x f_0 .. f_{dim-1}` per `(t_i, x_j)`.
    pub fn write_text<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        writeln!(
            w,
            "# wavemap-control n={} dt={} region={},{}",
            self.grid.n_points(),
            fmt17(self.dt),
            fmt17(self.region.start()),
            fmt17(self.region.end())
        )?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut line = String::new();
        for i in 0..self.n_times() {
            let t = self.time(i);
            for (j, node) in self.frame(i).chunks_exact(self.dim).enumerate() {
                line.clear();
                line.push_str(&fmt17(t));
                line.push(' ');
                line.push_str(&fmt17(self.grid.node(j)));
                for v in node {
                    line.push(' ');
                    line.push_str(&fmt17(*v));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty control file".into()))??;
        let rest = header
            .strip_prefix("# wavemap-control")
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let (mut n, mut dt, mut region) = (None, None, None);
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token `{tok}`")))?;
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|_| Error::Parse(v.into()))?),
                "dt" => dt = Some(v.parse::<f64>().map_err(|_| Error::Parse(v.into()))?),
                "region" => {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| Error::Parse(format!("bad region `{v}`")))?;
                    let a: f64 = a.parse().map_err(|_| Error::Parse(a.into()))?;
                    let b: f64 = b.parse().map_err(|_| Error::Parse(b.into()))?;
                    region = Some(ControlRegion::arc(a, b)?);
                }
                _ => return Err(Error::Parse(format!("unknown header key `{k}`"))),
            }
        }
        let (n, dt, region) = match (n, dt, region) {
            (Some(n), Some(dt), Some(r)) => (n, dt, r),
            _ => return Err(Error::Parse("header must define n, dt and region".into())),
        };
        let grid = Grid::new(n)?;
        let mut values = Vec::new();
        let mut dim = None;
        let mut t0 = None;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("cannot parse `{s}`"))))
                .collect::<Result<_>>()?;
            if vals.len() < 3 {
                return Err(Error::Parse("control rows need t, x and values".into()));
            }
            let d = vals.len() - 2;
            if *dim.get_or_insert(d) != d {
                return Err(Error::Parse("inconsistent column count".into()));
            }
            t0.get_or_insert(vals[0]);
            values.extend_from_slice(&vals[2..]);
        }
        let dim = dim.ok_or_else(|| Error::Parse("control file has no rows".into()))?;
        Ok(Self::exact(grid, region, dim, dt, values)?.starting_at(t0.unwrap_or(0.0)))
    }
}

impl Forcing for ControlSignal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grid(&self) -> Grid {
        self.grid
    }

    fn sample(&self, t: f64, _phi: &[f64], out: &mut [f64]) {
        let n = self.n_times();
        let s = (t - self.t0) / self.dt;
        let tol = 1e-9;
        if s < -tol || s > (n - 1) as f64 + tol {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let s = s.clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(2));
        let w = if n == 1 { 0.0 } else { s - i as f64 };
        let a = self.frame(i);
        if w == 0.0 {
            out.copy_from_slice(a);
            return;
        }
        let b = self.frame(i + 1);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = (1.0 - w) * x + w * y;
        }
    }
}

/// Number of samples covering `[0, duration]` and the adjusted uniform step.
pub(crate) fn time_samples(duration: f64, dt: f64) -> Result<(usize, f64)> {
    if !(duration >= 0.0) || !(dt > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} and step {dt} must be nonnegative and positive"
        )));
    }
    let intervals = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    if intervals == 0 {
        return Ok((1, dt));
    }
    Ok((intervals + 1, duration / intervals as f64))
}

/// Energy diagnostics recorded at every time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Cumulative `2∫₀ᵗ∫ (a|φ_t|² + φ_t·f)`, so that `E(t) + D(t) ≈ E(0)`.
    pub dissipation: Vec<f64>,
    pub tangency_error: Vec<f64>,
}

impl EnergyTrace {
    pub(crate) fn push(&mut self, t: f64, e: f64, d: f64, tang: f64) {
        self.times.push(t);
        self.energy.push(e);
        self.dissipation.push(d);
        self.tangency_error.push(tang);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_t |E(t) − E(0) + D(t)|` over every recorded step.
    pub fn balance_residual(&self) -> f64 {
        let Some(&e0) = self.energy.first() else {
            return 0.0;
        };
        self.energy
            .iter()
            .zip(&self.dissipation)
            .fold(0.0f64, |m, (e, d)| m.max((e - e0 + d).abs()))
    }

    /// Comma-separated `time,energy,cumulative_dissipation,tangency_error`.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "time,energy,cumulative_dissipation,tangency_error")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(self.times[i]),
                fmt17(self.energy[i]),
                fmt17(self.dissipation[i]),
                fmt17(self.tangency_error[i])
            )?;
        }
        Ok(())
    }
}

/// Saved states plus the per-step energy trace.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FieldState>,
    pub trace: EnergyTrace,
    pub dt: f64,
    pub n_points: usize,
    pub save_every: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldState {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn initial_state(&self) -> &FieldState {
        &self.states[0]
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time()).collect()
    }

    /// Writes `<prefix>_state_<i>.txt` per saved state and `<prefix>_trace.csv`.
    pub fn export(&self, dir: &Path, prefix: &str, comments: &[String]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            let p = dir.join(format!("{prefix}_state_{i:05}.txt"));
            let f = BufWriter::new(fs::File::create(&p)?);
            s.write_text(f, comments)?;
            written.push(p);
        }
        let p = dir.join(format!("{prefix}_trace.csv"));
        let f = BufWriter::new(fs::File::create(&p)?);
        self.trace.write_csv(f, comments)?;
        written.push(p);
        Ok(written)
    }
}

/// Reusable integrator with cached accelerations.
struct Integrator<'a> {
    grid: Grid,
    d: usize,
    forcing: Option<&'a dyn Forcing>,
    damping: Option<&'a DampingProfile>,
    phi: Vec<f64>,
    v: Vec<f64>,
    /// `P_φ(D²φ − f)` at the current state.
    acc: Vec<f64>,
    /// Forcing at the current time and position.
    force: Vec<f64>,
    t: f64,
    scratch: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(
        state: &FieldState,
        forcing: Option<&'a dyn Forcing>,
        damping: Option<&'a DampingProfile>,
    ) -> Result<Self> {
        let grid = state.grid();
        let d = state.dim();
        if let Some(f) = forcing {
            if f.grid() != grid || f.dim() != d {
                return Err(Error::InvalidArgument(
                    "forcing grid or dimension does not match the state".into(),
                ));
            }
        }
        if let Some(a) = damping {
            if a.grid() != grid {
                return Err(Error::InvalidArgument("damping grid does not match the state".into()));
            }
        }
        let len = grid.n_points() * d;
        let mut it = Self {
            grid,
            d,
            forcing,
            damping,
            phi: state.phi().to_vec(),
            v: state.phi_t().to_vec(),
            acc: vec![0.0; len],
            force: vec![0.0; len],
            t: state.time(),
            scratch: vec![0.0; len],
        };
        it.refresh_acceleration();
        Ok(it)
    }

    fn refresh_acceleration(&mut self) {
        let n = self.grid.n_points();
        let d = self.d;
        let inv = 1.0 / (self.grid.spacing() * self.grid.spacing());
        match self.forcing {
            Some(f) => f.sample(self.t, &self.phi, &mut self.force),
            None => self.force.iter_mut().for_each(|v| *v = 0.0),
        }
        for j in 0..n {
            let (jp, jm) = (self.grid.next(j), self.grid.prev(j));
            let p = &self.phi[j * d..(j + 1) * d];
            let mut s = 0.0;
            for c in 0..d {
                let lap = (self.phi[jp * d + c] - 2.0 * p[c] + self.phi[jm * d + c]) * inv;
                let val = lap - self.force[j * d + c];
                self.scratch[c] = val;
                s += val * p[c];
            }
            for c in 0..d {
                self.acc[j * d + c] = self.scratch[c] - s * p[c];
            }
        }
    }

    fn step(&mut self, dt: f64) -> Result<()> {
        let n = self.grid.n_points();
        let d = self.d;
        let half = 0.5 * dt;
        let a = self.damping.map(|p| p.samples());
        // Half kick and constrained drift.
        for j in 0..n {
            let aj = a.map_or(0.0, |a| a[j]);
            let range = j * d..(j + 1) * d;
            let v = &mut self.v[range.clone()];
            let acc = &self.acc[range.clone()];
            let p = &mut self.phi[range];
            let mut vv = 0.0;
            for c in 0..d {
                v[c] += half * (acc[c] - aj * v[c]);
                vv += v[c] * v[c];
            }
            // Remove the normal drift of v so that the multiplier formula is exact.
            let s = dot(p, v);
            for c in 0..d {
                v[c] -= s * p[c];
            }
            vv -= s * s;
            let disc = 1.0 - dt * dt * vv;
            if disc > 0.0 {
                let r = disc.sqrt();
                for c in 0..d {
                    let np = r * p[c] + dt * v[c];
                    v[c] = (np - p[c]) / dt;
                    p[c] = np;
                }
            } else {
                let mut norm = 0.0;
                for c in 0..d {
                    self.scratch[c] = p[c] + dt * v[c];
                    norm += self.scratch[c] * self.scratch[c];
                }
                let norm = norm.sqrt();
                for c in 0..d {
                    let np = self.scratch[c] / norm;
                    v[c] = (np - p[c]) / dt;
                    p[c] = np;
                }
            }
            let norm = dot(p, p).sqrt();
            p.iter_mut().for_each(|c| *c /= norm);
        }
        self.t += dt;
        self.refresh_acceleration();
        // Second half kick with implicit damping, then tangential projection.
        for j in 0..n {
            let aj = a.map_or(0.0, |a| a[j]);
            let range = j * d..(j + 1) * d;
            let v = &mut self.v[range.clone()];
            let acc = &self.acc[range.clone()];
            let p = &self.phi[range];
            let s = dot(p, v);
            let denom = 1.0 + aj * half;
            for c in 0..d {
                v[c] = (v[c] - s * p[c] + half * acc[c]) / denom;
            }
        }
        if self.v.iter().chain(&self.phi).any(|x| !x.is_finite()) {
            return Err(Error::NanDetected { time: self.t });
        }
        Ok(())
    }

    fn state(&self) -> Result<FieldState> {
        FieldState::new_unchecked(self.grid, self.d - 1, self.phi.clone(), self.v.clone(), self.t)
    }

    /// `2∫(a|φ_t|² + φ_t·f)` at the current state.
    fn loss_rate(&self) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for j in 0..self.grid.n_points() {
            let v = &self.v[j * d..(j + 1) * d];
            if let Some(a) = self.damping {
                acc += a.samples()[j] * dot(v, v);
            }
            if self.forcing.is_some() {
                acc += dot(v, &self.force[j * d..(j + 1) * d]);
            }
        }
        2.0 * acc * self.grid.spacing()
    }
}

fn check_cfl(grid: Grid, dt: f64, ratio: f64) -> Result<()> {
    let limit = ratio * grid.spacing();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolated { dt, limit });
    }
    Ok(())
}

/// One step of size `dt`.
pub fn step(
    state: &FieldState,
    dt: f64,
    forcing: Option<&dyn Forcing>,
    damping: Option<&DampingProfile>,
) -> Result<FieldState> {
    check_cfl(state.grid(), dt, CFL_RATIO)?;
    let mut it = Integrator::new(state, forcing, damping)?;
    it.step(dt)?;
    it.state()
}

/// Configurable time integration.
#[derive(Clone, Copy)]
pub struct Solver<'a> {
    pub dt: f64,
    pub forcing: Option<&'a dyn Forcing>,
    pub damping: Option<&'a DampingProfile>,
    /// Store every `save_every`-th state (the final state is always stored).
    pub save_every: usize,
    /// Largest admissible `dt / spacing`.
    pub cfl_ratio: f64,
}

impl<'a> Solver<'a> {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            forcing: None,
            damping: None,
            save_every: 1,
            cfl_ratio: CFL_RATIO,
        }
    }

    pub fn cfl_ratio(mut self, ratio: f64) -> Self {
        self.cfl_ratio = ratio;
        self
    }

    pub fn forcing(mut self, f: &'a dyn Forcing) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn damping(mut self, a: &'a DampingProfile) -> Self {
        self.damping = Some(a);
        self
    }

    pub fn save_every(mut self, stride: usize) -> Self {
        self.save_every = stride.max(1);
        self
    }

    /// Integrates from `initial.time()` over a duration `duration`.
    pub fn run(&self, initial: &FieldState, duration: f64) -> Result<Trajectory> {
        Ok(self.run_until(initial, duration, usize::MAX, |_, _| false)?.0)
    }

    /// Integrates for at most `duration`; every `check_every` steps calls
    /// `stop(state, energy)` and returns early with `true` if it fires.
    pub fn run_until<F>(
        &self,
        initial: &FieldState,
        duration: f64,
        check_every: usize,
        mut stop: F,
    ) -> Result<(Trajectory, bool)>
    where
        F: FnMut(&FieldState, f64) -> bool,
    {
        if !(self.cfl_ratio > 0.0 && self.cfl_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_ratio {} must lie in (0, 1]",
                self.cfl_ratio
            )));
        }
        check_cfl(initial.grid(), self.dt, self.cfl_ratio)?;
        if !(duration > 0.0) {
            return Err(Error::InvalidArgument(format!("duration {duration} must be positive")));
        }
        let mut it = Integrator::new(initial, self.forcing, self.damping)?;
        let t_end = initial.time() + duration;
        let n_steps = ((duration / self.dt) - 1e-9).ceil().max(1.0) as usize;
        let mut trace = EnergyTrace::default();
        let mut states = vec![initial.clone()];
        let mut cum = 0.0;
        let mut rate = it.loss_rate();
        trace.push(initial.time(), energy(initial), 0.0, initial.tangency_error());
        let mut stopped = false;
        for s in 1..=n_steps {
            let dt = if s == n_steps { t_end - it.t } else { self.dt };
            if dt <= 0.0 {
                break;
            }
            it.step(dt)?;
            if s == n_steps {
                it.t = t_end;
            }
            let state = it.state()?;
            let new_rate = it.loss_rate();
            cum += 0.5 * dt * (rate + new_rate);
            rate = new_rate;
            let e = energy(&state);
            trace.push(it.t, e, cum, state.tangency_error());
            let last = s == n_steps;
            let check = check_every != usize::MAX && s % check_every.max(1) == 0;
            if check && stop(&state, e) {
                stopped = true;
                states.push(state);
                break;
            }
            if last || s % self.save_every == 0 {
                states.push(state);
            }
        }
        Ok((
            Trajectory {
                states,
                trace,
                dt: self.dt,
                n_points: initial.grid().n_points(),
                save_every: self.save_every,
            },
            stopped,
        ))
    }
}

/// Integrates to `initial.time() + duration`, saving every step.
pub fn evolve(
    initial: &FieldState,
    duration: f64,
    forcing: Option<&dyn Forcing>,
    damping: Option<&DampingProfile>,
    dt: f64,
) -> Result<Trajectory> {
    let mut s = Solver::new(dt);
    s.forcing = forcing;
    s.damping = damping;
    s.run(initial, duration)
}

fn trapezoid_residual(states: &[FieldState], rate: impl Fn(&FieldState) -> f64) -> f64 {
    let e0 = energy(&states[0]);
    let mut cum = 0.0;
    let mut prev = rate(&states[0]);
    let mut worst = 0.0f64;
    for w in states.windows(2) {
        let r = rate(&w[1]);
        cum += 0.5 * (w[1].time() - w[0].time()) * (prev + r);
        prev = r;
        worst = worst.max((energy(&w[1]) - e0 + cum).abs());
    }
    worst
}

/// `max_t |E(t) − E(0) + 2∫₀ᵗ∫ a|φ_t|²|` over the saved states, with the time
/// integral by the trapezoid rule on the saved stride.
pub fn energy_balance_residual(traj: &Trajectory, damping: &DampingProfile) -> f64 {
    trapezoid_residual(&traj.states, |s| 2.0 * damping.damped_kinetic(s))
}

/// `max_t |E(t) − E(0) + 2∫₀ᵗ∫ φ_t · f^⊥|` over the saved states.
pub fn forced_energy_rate_residual(traj: &Trajectory, forcing: &dyn Forcing) -> f64 {
    let mut buf = vec![0.0; traj.states[0].phi().len()];
    let buf = std::cell::RefCell::new(&mut buf);
    trapezoid_residual(&traj.states, |s| {
        let mut b = buf.borrow_mut();
        forcing.sample(s.time(), s.phi(), &mut b);
        let d = s.dim();
        let mut acc = 0.0;
        for j in 0..s.grid().n_points() {
            // φ_t is tangent, so φ_t · f^⊥ = φ_t · f.
            acc += dot(s.velocity(j), &b[j * d..(j + 1) * d]);
        }
        2.0 * acc * s.grid().spacing()
    })
}

type Profile = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// Time profile `θ(t)` of the rotationally symmetric trajectory
/// `(cos θ cos x, cos θ sin x, sin θ)`.
#[derive(Clone)]
pub struct RadialSchedule {
    t_final: f64,
    theta_final: f64,
    profile: Profile,
}

impl std::fmt::Debug for RadialSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialSchedule")
            .field("t_final", &self.t_final)
            .field("theta_final", &self.theta_final)
            .finish()
    }
}

impl RadialSchedule {
    /// `θ(t) = θ_f (3τ² − 2τ³)`, `τ = t/T`.
    pub fn smoothstep(t_final: f64, theta_final: f64) -> Result<Self> {
        let profile: Profile = Arc::new(move |t: f64| {
            let tau = t / t_final;
            [
                theta_final * tau * tau * (3.0 - 2.0 * tau),
                theta_final * 6.0 * tau * (1.0 - tau) / t_final,
                theta_final * (6.0 - 12.0 * tau) / (t_final * t_final),
            ]
        });
        Self::custom(t_final, profile)
    }

    /// Arbitrary profile returning `[θ, θ_t, θ_tt]`; boundary conditions are checked.
    pub fn custom(t_final: f64, profile: Profile) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidArgument(format!("final time {t_final} must be positive")));
        }
        let [th0, dth0, _] = profile(0.0);
        let [thf, dthf, _] = profile(t_final);
        let tol = 1e-12;
        if th0.abs() > tol || dth0.abs() > tol || dthf.abs() > tol {
            return Err(Error::InvalidArgument(
                "schedule must satisfy θ(0) = θ'(0) = θ'(T) = 0".into(),
            ));
        }
        if !(0.0..std::f64::consts::PI).contains(&thf) {
            return Err(Error::InvalidArgument(format!("θ(T) = {thf} must lie in [0, π)")));
        }
        Ok(Self {
            t_final,
            theta_final: thf,
            profile,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn theta_final(&self) -> f64 {
        self.theta_final
    }

    /// `[θ, θ_t, θ_tt]` at `t`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        (self.profile)(t)
    }

    /// Scalar control amplitude `w = −θ_tt + sin θ cos θ`.
    pub fn w(&self, t: f64) -> f64 {
        let [th, _, thtt] = self.eval(t);
        -thtt + th.sin() * th.cos()
    }

    /// Exact state at time `t`.
    pub fn state(&self, grid: Grid, t: f64) -> Result<FieldState> {
        let [th, dth, _] = self.eval(t);
        let (s, c) = th.sin_cos();
        FieldState::from_fn(
            grid,
            2,
            |x| vec![c * x.cos(), c * x.sin(), s],
            |x| vec![-dth * s * x.cos(), -dth * s * x.sin(), dth * c],
        )
        .map(|st| st.with_time(t))
    }

    /// Exact energy `2π(θ_t² + cos²θ)`.
    pub fn energy(&self, t: f64) -> f64 {
        let [th, dth, _] = self.eval(t);
        std::f64::consts::TAU * (dth * dth + th.cos() * th.cos())
    }
}

/// Sampled closed-form trajectory and its full-circle control, on the time
/// grid `i·dt`. The trace energies are the exact values.
pub fn closed_form_radial(
    schedule: &RadialSchedule,
    grid: Grid,
    dt: f64,
) -> Result<(Trajectory, ControlSignal)> {
    let t_final = schedule.t_final();
    let (n_times, dt) = time_samples(t_final, dt)?;
    let mut states = Vec::with_capacity(n_times);
    let mut values = Vec::with_capacity(n_times * grid.n_points() * 3);
    let mut trace = EnergyTrace::default();
    for i in 0..n_times {
        let t = i as f64 * dt;
        let st = schedule.state(grid, t)?;
        let w = schedule.w(t);
        let th = schedule.eval(t)[0];
        let (s, c) = th.sin_cos();
        for x in grid.nodes() {
            values.extend([-w * s * x.cos(), -w * s * x.sin(), w * c]);
        }
        let e = schedule.energy(t);
        trace.push(t, e, trace.energy.first().map_or(0.0, |e0| e0 - e), st.tangency_error());
        states.push(st);
    }
    let control = ControlSignal::exact(grid, ControlRegion::full(), 3, dt, values)?;
    Ok((
        Trajectory {
            states,
            trace,
            dt,
            n_points: grid.n_points(),
            save_every: 1,
        },
        control,
    ))
}

/// Maximum node-wise distance between the positions of two states.
pub fn linf_distance(a: &FieldState, b: &FieldState) -> f64 {
    a.phi()
        .iter()
        .zip(b.phi())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn equator(n: usize) -> FieldState {
        FieldState::from_fn(
            Grid::new(n).unwrap(),
            2,
            |x| vec![x.cos(), x.sin(), 0.0],
            |_| vec![0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn constant_state_is_stationary() {
        let s = FieldState::constant(Grid::new(32).unwrap(), &[0.6, 0.0, 0.8]).unwrap();
        let h = s.grid().spacing();
        let next = step(&s, 0.5 * h, None, None).unwrap();
        assert_eq!(next.phi(), s.phi());
        assert!(next.phi_t().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn equator_is_stationary_with_damping() {
        let s = equator(64);
        let g = s.grid();
        let a = DampingProfile::new(g, ControlRegion::centered(1.0).unwrap(), 1.0).unwrap();
        let tr = evolve(&s, 5.0, None, Some(&a), 0.5 * g.spacing()).unwrap();
        assert!(linf_distance(tr.final_state(), &s) < 1e-13);
    }

    #[test]
    fn cfl_is_enforced() {
        let s = equator(64);
        let h = s.grid().spacing();
        assert!(matches!(step(&s, 0.6 * h, None, None), Err(Error::CflViolated { .. })));
    }

    #[test]
    fn damping_must_be_supported_and_nonzero() {
        let g = Grid::new(32).unwrap();
        let r = ControlRegion::centered(0.5).unwrap();
        assert!(DampingProfile::new(g, r, 0.0).is_err());
        assert!(DampingProfile::from_samples(g, vec![1.0; 32], r).is_err());
        assert!(DampingProfile::from_samples(g, vec![-1.0; 32], ControlRegion::full()).is_err());
    }

    #[test]
    fn control_signal_interpolates_and_vanishes_outside_window() {
        let g = Grid::new(8).unwrap();
        let c = ControlSignal::from_fn(g, ControlRegion::full(), 1, 0.5, 1.0, |t, _| vec![t]).unwrap();
        let mut out = vec![0.0; 8];
        c.sample(0.25, &[], &mut out);
        assert!((out[0] - 0.25).abs() < 1e-15);
        c.sample(1.0, &[], &mut out);
        assert!((out[3] - 1.0).abs() < 1e-15);
        c.sample(1.5, &[], &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn control_signal_cutoff_and_exact_support() {
        let g = Grid::new(32).unwrap();
        let r = ControlRegion::centered(PI / 2.0).unwrap();
        let c = ControlSignal::from_fn(g, r, 2, 0.1, 0.5, |_, _| vec![1.0, 1.0]).unwrap();
        for i in 0..c.n_times() {
            for (j, v) in c.frame(i).chunks_exact(2).enumerate() {
                if !r.contains(g.node(j)) {
                    assert_eq!(v, &[0.0, 0.0]);
                }
            }
        }
        assert!(ControlSignal::exact(g, r, 1, 0.1, vec![1.0; 32]).is_err());
    }

    #[test]
    fn control_text_round_trip() {
        let g = Grid::new(8).unwrap();
        let r = ControlRegion::arc(1.0, 3.0).unwrap();
        let c = ControlSignal::from_fn(g, r, 2, 0.25, 0.5, |t, x| vec![t * x, x.sin()]).unwrap();
        let mut buf = Vec::new();
        c.write_text(&mut buf, &["note".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# wavemap-control n=8 dt=2.5000000000000000e-1 region="));
        let back = ControlSignal::read_text(text.as_bytes()).unwrap();
        assert_eq!(back.values(), c.values());
        assert_eq!(back.n_times(), 3);
    }

    #[test]
    fn schedule_boundary_conditions() {
        assert!(RadialSchedule::smoothstep(1.0, PI / 2.0).is_ok());
        assert!(RadialSchedule::smoothstep(1.0, PI).is_err());
        assert!(RadialSchedule::smoothstep(-1.0, 0.5).is_err());
        let bad: Profile = Arc::new(|t| [t, 1.0, 0.0]);
        assert!(RadialSchedule::custom(1.0, bad).is_err());
    }

    #[test]
    fn radial_energy_formula_at_endpoints() {
        let s = RadialSchedule::smoothstep(2.0, PI / 2.0).unwrap();
        assert!((s.energy(0.0) - TAU).abs() < 1e-14);
        assert!(s.energy(2.0) < 1e-28);
        let zero = RadialSchedule::smoothstep(1.0, 0.0).unwrap();
        assert_eq!(zero.w(0.3), 0.0);
    }
}
