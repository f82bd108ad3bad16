//! Sphere-valued field states `(φ, φ_t)` on the periodic grid.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default tolerance on `|φ| = 1` and `φ · φ_t = 0`.
pub const TANG_TOL: f64 = 1e-10;

/// Node-major samples of `φ` and `φ_t`, each `n_points × (k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    grid: Grid,
    k: usize,
    phi: Vec<f64>,
    phi_t: Vec<f64>,
    time: f64,
}

impl FieldState {
    /// Builds a state and checks the sphere and tangency invariants.
    pub fn new(grid: Grid, k: usize, phi: Vec<f64>, phi_t: Vec<f64>, time: f64) -> Result<Self> {
        let state = Self::new_unchecked(grid, k, phi, phi_t, time)?;
        state.validate(TANG_TOL)?;
        Ok(state)
    }

    /// Builds a state, checking shapes only.
    pub(crate) fn new_unchecked(
        grid: Grid,
        k: usize,
        phi: Vec<f64>,
        phi_t: Vec<f64>,
        time: f64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidState("target dimension k must be >= 1".into()));
        }
        let len = grid.n_points() * (k + 1);
        if phi.len() != len || phi_t.len() != len {
            return Err(Error::InvalidState(format!(
                "expected {len} samples per field, got {} and {}",
                phi.len(),
                phi_t.len()
            )));
        }
        Ok(Self {
            grid,
            k,
            phi,
            phi_t,
            time,
        })
    }

    /// Samples arbitrary position/velocity functions, then puts every node on
    /// the sphere and every velocity in its tangent plane.
    pub fn from_fn<P, V>(grid: Grid, k: usize, position: P, velocity: V) -> Result<Self>
    where
        P: Fn(f64) -> Vec<f64>,
        V: Fn(f64) -> Vec<f64>,
    {
        let d = k + 1;
        let mut phi = Vec::with_capacity(grid.n_points() * d);
        let mut phi_t = Vec::with_capacity(grid.n_points() * d);
        for x in grid.nodes() {
            let p = position(x);
            let v = velocity(x);
            if p.len() != d || v.len() != d {
                return Err(Error::InvalidState(format!("samples must have {d} components")));
            }
            phi.extend(p);
            phi_t.extend(v);
        }
        let mut state = Self::new_unchecked(grid, k, phi, phi_t, 0.0)?;
        state.project_to_sphere()?;
        Ok(state)
    }

    /// Constant map `φ ≡ p` at rest.
    pub fn constant(grid: Grid, p: &[f64]) -> Result<Self> {
        let k = p.len().checked_sub(1).filter(|&k| k >= 1).ok_or_else(|| {
            Error::InvalidState("constant point needs at least two components".into())
        })?;
        Self::from_fn(grid, k, |_| p.to_vec(), |_| vec![0.0; k + 1])
    }

    /// Normalizes `φ` node-wise and removes the normal part of `φ_t`.
    pub fn project_to_sphere(&mut self) -> Result<()> {
        let d = self.dim();
        for (p, v) in self.phi.chunks_exact_mut(d).zip(self.phi_t.chunks_exact_mut(d)) {
            let norm = dot(p, p).sqrt();
            if !(norm > 1e-12) || !norm.is_finite() {
                return Err(Error::InvalidState("cannot project a zero sample onto the sphere".into()));
            }
            p.iter_mut().for_each(|c| *c /= norm);
            let s = dot(p, v);
            v.iter_mut().zip(p.iter()).for_each(|(vc, pc)| *vc -= s * pc);
        }
        Ok(())
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let (unit, tang) = self.constraint_errors();
        if !(unit <= tol) {
            return Err(Error::InvalidState(format!("max ||phi| - 1| = {unit:e} exceeds {tol:e}")));
        }
        if !(tang <= tol) {
            return Err(Error::InvalidState(format!("max |phi . phi_t| = {tang:e} exceeds {tol:e}")));
        }
        Ok(())
    }

    /// `(max_j ||φ_j| − 1|, max_j |φ_j · φ_t,j|)`.
    pub fn constraint_errors(&self) -> (f64, f64) {
        let d = self.dim();
        let mut unit = 0.0f64;
        let mut tang = 0.0f64;
        for (p, v) in self.phi.chunks_exact(d).zip(self.phi_t.chunks_exact(d)) {
            unit = unit.max((dot(p, p).sqrt() - 1.0).abs());
            tang = tang.max(dot(p, v).abs());
        }
        (unit, tang)
    }

    /// Larger of the two constraint errors.
    pub fn tangency_error(&self) -> f64 {
        let (a, b) = self.constraint_errors();
        a.max(b)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of ambient components, `k + 1`.
    pub fn dim(&self) -> usize {
        self.k + 1
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_t(&self) -> &[f64] {
        &self.phi_t
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.phi[j * d..(j + 1) * d]
    }

    pub fn velocity(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.phi_t[j * d..(j + 1) * d]
    }

    /// Component `c` of `φ` as a scalar grid function.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.phi.iter().skip(c).step_by(self.dim()).copied().collect()
    }

    pub fn velocity_component(&self, c: usize) -> Vec<f64> {
        self.phi_t.iter().skip(c).step_by(self.dim()).copied().collect()
    }

    /// Applies `A ∈ O(k+1)` node-wise to both position and velocity.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::InvalidArgument(format!("matrix must be {d}x{d}")));
        }
        let phi = apply_nodewise(a, &self.phi, d);
        let phi_t = apply_nodewise(a, &self.phi_t, d);
        Self::new_unchecked(self.grid, self.k, phi, phi_t, self.time)
    }

    /// Writes the columnar text format:
    /// `# wavemap-state k=<k> n=<n> t=<time>` then `x phi_0..phi_k phit_0..phit_k` per node.
    pub fn write_text<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        writeln!(
            w,
            "# wavemap-state k={} n={} t={}",
            self.k,
            self.grid.n_points(),
            fmt17(self.time)
        )?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut line = String::new();
        for j in 0..self.grid.n_points() {
            line.clear();
            line.push_str(&fmt17(self.grid.node(j)));
            for v in self.point(j).iter().chain(self.velocity(j)) {
                line.push(' ');
                line.push_str(&fmt17(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf, &[]).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the columnar text format; extra `#` lines after the header are skipped.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty state file".into()))??;
        let rest = header
            .strip_prefix("# wavemap-state")
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let (mut k, mut n, mut t) = (None, None, None);
        for tok in rest.split_whitespace() {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token `{tok}`")))?;
            match key {
                "k" => k = Some(parse_num::<usize>(val)?),
                "n" => n = Some(parse_num::<usize>(val)?),
                "t" => t = Some(parse_num::<f64>(val)?),
                _ => return Err(Error::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let (k, n, t) = match (k, n, t) {
            (Some(k), Some(n), Some(t)) => (k, n, t),
            _ => return Err(Error::Parse("header must define k, n and t".into())),
        };
        let grid = Grid::new(n)?;
        let d = k + 1;
        let mut phi = Vec::with_capacity(n * d);
        let mut phi_t = Vec::with_capacity(n * d);
        let mut rows = 0;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(parse_num::<f64>)
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 1 + 2 * d {
                return Err(Error::Parse(format!("row {rows} has {} columns", vals.len())));
            }
            phi.extend_from_slice(&vals[1..1 + d]);
            phi_t.extend_from_slice(&vals[1 + d..]);
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse(format!("expected {n} rows, found {rows}")));
        }
        Self::new(grid, k, phi, phi_t, t)
    }
}

/// Full-precision (17 significant digits) float formatting.
pub fn fmt17(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:.16e}").expect("formatting");
    s
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parse(format!("cannot parse `{s}`")))
}

pub(crate) fn apply_nodewise(a: &DMatrix<f64>, data: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        for r in 0..d {
            dst[r] = (0..d).map(|c| a[(r, c)] * src[c]).sum();
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f − ⟨f, φ⟩φ` for a unit vector `φ`.
pub fn project_orthogonal(f: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    if f.len() != phi.len() {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let norm = dot(phi, phi).sqrt();
    if (norm - 1.0).abs() > TANG_TOL {
        return Err(Error::NotUnit { norm });
    }
    let s = dot(f, phi);
    Ok(f.iter().zip(phi).map(|(fc, pc)| fc - s * pc).collect())
}

/// `Σ_j (|φ_x|² + |φ_t|²)_j · spacing`, with `φ_x` by central differences.
pub fn energy(state: &FieldState) -> f64 {
    let grid = state.grid();
    let d = state.dim();
    let inv = 0.5 / grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n_points() {
        let a = state.point(grid.next(j));
        let b = state.point(grid.prev(j));
        let v = state.velocity(j);
        for c in 0..d {
            let dx = (a[c] - b[c]) * inv;
            acc += dx * dx + v[c] * v[c];
        }
    }
    acc * grid.spacing()
}

/// `H¹ × L²` distance between two states on the same grid, with `φ_x` by
/// central differences.
pub fn state_distance(a: &FieldState, b: &FieldState) -> Result<f64> {
    if a.grid() != b.grid() || a.k() != b.k() {
        return Err(Error::InvalidArgument("states must share grid and target sphere".into()));
    }
    let grid = a.grid();
    let d = a.dim();
    let inv = 0.5 / grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n_points() {
        let (jp, jm) = (grid.next(j), grid.prev(j));
        for c in 0..d {
            let diff = a.phi[j * d + c] - b.phi[j * d + c];
            let dx = ((a.phi[jp * d + c] - b.phi[jp * d + c]) - (a.phi[jm * d + c] - b.phi[jm * d + c])) * inv;
            let dv = a.phi_t[j * d + c] - b.phi_t[j * d + c];
            acc += diff * diff + dx * dx + dv * dv;
        }
    }
    Ok((acc * grid.spacing()).sqrt())
}

/// `‖φ_t‖²_{L²}`, the kinetic part of the energy.
pub fn kinetic_energy(state: &FieldState) -> f64 {
    state.phi_t().iter().map(|v| v * v).sum::<f64>() * state.grid().spacing()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
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
    fn constant_state_has_zero_energy() {
        let s = FieldState::constant(Grid::new(32).unwrap(), &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(energy(&s), 0.0);
    }

    #[test]
    fn equator_energy_is_two_pi() {
        let s = equator(256);
        let h = s.grid().spacing();
        assert!((energy(&s) - TAU).abs() < h * h * TAU);
    }

    #[test]
    fn latitude_circle_energy_quadrature_oracle() {
        // γ(π/4): (sin s cos x, sin s sin x, cos s); oracle is Simpson's rule
        // on the analytic density |γ_x|² = sin² s.
        let s = PI / 4.0;
        let grid = Grid::new(256).unwrap();
        let state = FieldState::from_fn(
            grid,
            2,
            |x| vec![s.sin() * x.cos(), s.sin() * x.sin(), s.cos()],
            |_| vec![0.0; 3],
        )
        .unwrap();
        let m = 2000;
        let hq = TAU / m as f64;
        let simpson: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * s.sin().powi(2)
            })
            .sum::<f64>()
            * hq
            / 3.0;
        assert_relative_eq!(simpson, PI, epsilon = 1e-12);
        let h = grid.spacing();
        assert!((energy(&state) - simpson).abs() < h * h * PI);
    }

    #[test]
    fn projection_examples() {
        let phi = [1.0, 0.0, 0.0];
        assert_eq!(project_orthogonal(&[2.0, 0.0, 0.0], &phi).unwrap(), vec![0.0; 3]);
        assert_eq!(project_orthogonal(&[0.0, 5.0, -1.0], &phi).unwrap(), vec![0.0, 5.0, -1.0]);
        assert_eq!(project_orthogonal(&[1.0, 2.0, 3.0], &phi).unwrap(), vec![0.0, 2.0, 3.0]);
        assert!(matches!(
            project_orthogonal(&[1.0, 2.0, 3.0], &[1.0, 1.0, 0.0]),
            Err(Error::NotUnit { .. })
        ));
    }

    #[test]
    fn text_format_round_trip() {
        let mut s = equator(16);
        s.phi_t[1] = 0.5;
        s.phi_t[5] = 0.0;
        s.project_to_sphere().unwrap();
        let s = s.with_time(1.25);
        let text = s.to_text();
        assert!(text.starts_with("# wavemap-state k=2 n=16 t=1.2500000000000000e0\n"));
        let back = FieldState::read_text(text.as_bytes()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(FieldState::read_text("nonsense\n".as_bytes()).is_err());
        assert!(FieldState::read_text("# wavemap-state k=1 n=8 t=0\n0 1 0 0 0\n".as_bytes()).is_err());
    }

    #[test]
    fn invalid_states_are_rejected() {
        let g = Grid::new(8).unwrap();
        let bad = FieldState::new(g, 1, vec![2.0; 16], vec![0.0; 16], 0.0);
        assert!(bad.is_err());
        let short = FieldState::new(g, 1, vec![1.0; 3], vec![0.0; 3], 0.0);
        assert!(short.is_err());
    }
}
