//! Winding numbers of loops in S¹ and degrees of torus maps into spheres.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};
use crate::grid::wrap_angle;
use crate::state::FieldState;

/// Default margin below π for admissible adjacent angular jumps.
pub const JUMP_MARGIN: f64 = 0.5;

/// Residual above which a quadrature degree is not trusted.
pub const DEGREE_RESIDUAL_MAX: f64 = 0.1;

/// Lifts the angles of planar points `(c_j, s_j)` to a continuous sequence
/// starting at the principal angle of the first point. The closing increment
/// from the last point back to the first is returned separately.
pub fn lift_angles(points: &[[f64; 2]], jump_margin: f64) -> Result<(Vec<f64>, f64)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty loop".into()));
    }
    let angle = |p: &[f64; 2]| p[1].atan2(p[0]);
    let limit = std::f64::consts::PI - jump_margin;
    let mut lifted = Vec::with_capacity(n);
    lifted.push(angle(&points[0]));
    for j in 1..=n {
        let prev = angle(&points[j - 1]);
        let next = angle(&points[j % n]);
        let jump = wrap_angle(next - prev);
        if jump.abs() >= limit {
            return Err(Error::UnresolvedLoop { node: j - 1, jump });
        }
        if j < n {
            lifted.push(lifted[j - 1] + jump);
        } else {
            return Ok((lifted, jump));
        }
    }
    unreachable!()
}

/// Winding number of a closed planar loop sampled at `points`.
pub fn loop_winding(points: &[[f64; 2]], jump_margin: f64) -> Result<i64> {
    let (lifted, closing) = lift_angles(points, jump_margin)?;
    let total = lifted[lifted.len() - 1] - lifted[0] + closing;
    Ok((total / std::f64::consts::TAU).round() as i64)
}

/// Winding number of a `k = 1` state.
pub fn winding_number(state: &FieldState) -> Result<i64> {
    winding_number_with_margin(state, JUMP_MARGIN)
}

pub fn winding_number_with_margin(state: &FieldState, jump_margin: f64) -> Result<i64> {
    if state.k() != 1 {
        return Err(Error::InvalidArgument(format!(
            "winding number needs k = 1, got k = {}",
            state.k()
        )));
    }
    let pts: Vec<[f64; 2]> = state.phi().chunks_exact(2).map(|p| [p[0], p[1]]).collect();
    loop_winding(&pts, jump_margin)
}

/// A map from the `d`-torus (all coordinates in `[0, 2π)`) into `S^d ⊂ R^{d+1}`,
/// evaluated on the uniform `m^d` lattice.
pub trait TorusMap: Sync {
    /// Dimension `d` of the torus, which equals the dimension of the target sphere.
    fn torus_dim(&self) -> usize;
    /// Writes the value at lattice multi-index `idx` (each entry in `0..m`) into `out`.
    fn eval(&self, idx: &[usize], out: &mut [f64]);
}

/// Raw and rounded quadrature degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeReport {
    pub m: usize,
    pub raw: f64,
    pub rounded: i64,
    pub residual: f64,
}

/// Surface area of the unit sphere `S^n`.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::TAU;
    match n {
        0 => 2.0,
        1 => TAU,
        _ => TAU / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}

fn det(buf: &[f64], n: usize) -> f64 {
    macro_rules! fixed {
        ($n:literal) => {
            SMatrix::<f64, $n, $n>::from_column_slice(buf).determinant()
        };
    }
    match n {
        2 => fixed!(2),
        3 => fixed!(3),
        4 => fixed!(4),
        5 => fixed!(5),
        6 => fixed!(6),
        7 => fixed!(7),
        _ => panic!("determinant size {n} unsupported"),
    }
}

/// Degree of a torus map by quadrature of `det(∂_1 A, …, ∂_d A, A)` with periodic
/// central differences, normalized by the sphere area. Fails with
/// `DegreeNotResolved` if the raw value is not within 0.1 of an integer.
pub fn torus_degree<M: TorusMap>(map: &M, m: usize, mode: ExecMode) -> Result<DegreeReport> {
    let report = torus_degree_raw(map, m, mode)?;
    if report.residual >= DEGREE_RESIDUAL_MAX {
        return Err(Error::DegreeNotResolved {
            raw: report.raw,
            residual: report.residual,
        });
    }
    Ok(report)
}

/// Like [`torus_degree`] but never fails on the residual.
pub fn torus_degree_raw<M: TorusMap>(map: &M, m: usize, mode: ExecMode) -> Result<DegreeReport> {
    let d = map.torus_dim();
    if !(2..=6).contains(&d) {
        return Err(Error::InvalidArgument(format!("torus dimension {d} unsupported")));
    }
    if m < 8 {
        return Err(Error::InvalidArgument(format!("lattice size {m} too small")));
    }
    let n = d + 1;
    let slabs: Vec<usize> = (0..m).collect();
    let sums = map_ordered(mode, &slabs, |&i0| {
        let mut idx = vec![0usize; d];
        let mut nb = vec![0usize; d];
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let mut mat = vec![0.0; n * n];
        let mut acc = 0.0;
        idx[0] = i0;
        let inner = m.pow(d as u32 - 1);
        for flat in 0..inner {
            let mut rem = flat;
            for slot in idx.iter_mut().skip(1).rev() {
                *slot = rem % m;
                rem /= m;
            }
            for a in 0..d {
                nb.copy_from_slice(&idx);
                nb[a] = (idx[a] + 1) % m;
                map.eval(&nb, &mut plus);
                nb[a] = (idx[a] + m - 1) % m;
                map.eval(&nb, &mut minus);
                for r in 0..n {
                    mat[a * n + r] = plus[r] - minus[r];
                }
            }
            map.eval(&idx, &mut mat[d * n..]);
            acc += det(&mat, n);
        }
        acc
    });
    let total: f64 = sums.into_iter().sum();
    let raw = total / 2f64.powi(d as i32) / sphere_area(d);
    let rounded = raw.round();
    Ok(DegreeReport {
        m,
        raw,
        rounded: rounded as i64,
        residual: (raw - rounded).abs(),
    })
}

/// Precomputed `m × m` samples of a map `S¹_s × S¹_x → S²`.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    m: usize,
    /// Layout `(i_s * m + i_x) * 3 + c`.
    data: Vec<f64>,
}

impl SurfaceSamples {
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for m = {m}",
                m * m * 3
            )));
        }
        for p in data.chunks_exact(3) {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::NotUnit { norm });
            }
        }
        Ok(Self { m, data })
    }

    /// Samples `f(s_i, x_j)` with `s_i = 2πi/m`, `x_j = 2πj/m`.
    pub fn from_fn<F: Fn(f64, f64) -> [f64; 3]>(m: usize, f: F) -> Result<Self> {
        let h = std::f64::consts::TAU / m as f64;
        let mut data = Vec::with_capacity(m * m * 3);
        for i in 0..m {
            for j in 0..m {
                data.extend(f(i as f64 * h, j as f64 * h));
            }
        }
        Self::new(m, data)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn point(&self, i_s: usize, i_x: usize) -> &[f64] {
        let o = (i_s * self.m + i_x) * 3;
        &self.data[o..o + 3]
    }
}

impl TorusMap for SurfaceSamples {
    fn torus_dim(&self) -> usize {
        2
    }

    fn eval(&self, idx: &[usize], out: &mut [f64]) {
        out.copy_from_slice(self.point(idx[0], idx[1]));
    }
}

/// Degree of sampled surface data; requires `m ≥ 64`.
pub fn surface_degree(samples: &SurfaceSamples) -> Result<DegreeReport> {
    surface_degree_with(samples, ExecMode::default())
}

pub fn surface_degree_with(samples: &SurfaceSamples, mode: ExecMode) -> Result<DegreeReport> {
    if samples.m() < 64 {
        return Err(Error::InvalidArgument(format!(
            "surface degree needs m >= 64, got {}",
            samples.m()
        )));
    }
    torus_degree(samples, samples.m(), mode)
}
