//! Discrete Fourier coefficients of grid fields (diagnostics only).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Coefficients `a_n = (1/n_points) Σ_j f_j e^{−i n x_j}` per component, for
/// `n ∈ {−n_points/2, …, n_points/2 − 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTable {
    n_points: usize,
    dim: usize,
    /// Mode-major: entry `(n + n_points/2) * dim + c`.
    coeffs: Vec<Complex64>,
}

impl FourierTable {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_mode(&self) -> i64 {
        -(self.n_points as i64 / 2)
    }

    pub fn max_mode(&self) -> i64 {
        self.n_points as i64 / 2 - 1
    }

    fn offset(&self, n: i64) -> usize {
        assert!(
            n >= self.min_mode() && n <= self.max_mode(),
            "mode {n} out of range"
        );
        (n - self.min_mode()) as usize * self.dim
    }

    /// Coefficient of mode `n`, component `c`.
    pub fn get(&self, n: i64, c: usize) -> Complex64 {
        self.coeffs[self.offset(n) + c]
    }

    /// All components of mode `n`.
    pub fn mode(&self, n: i64) -> &[Complex64] {
        let o = self.offset(n);
        &self.coeffs[o..o + self.dim]
    }

    /// `Σ_c |a_{n,c}|²`.
    pub fn mode_power(&self, n: i64) -> f64 {
        self.mode(n).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Inverse transform back to node-major real samples.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n_points;
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(n);
        let mut out = vec![0.0; n * self.dim];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..self.dim {
            for mode in self.min_mode()..=self.max_mode() {
                buf[mode.rem_euclid(n as i64) as usize] = self.get(mode, c);
            }
            fft.process(&mut buf);
            for (j, z) in buf.iter().enumerate() {
                out[j * self.dim + c] = z.re;
            }
        }
        out
    }
}

/// Removes the Fourier modes with `|n| > max_mode` from a scalar periodic
/// grid function.
pub fn low_pass(samples: &[f64], max_mode: usize) -> Vec<f64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut buf);
    for (i, z) in buf.iter_mut().enumerate() {
        let mode = i.min(n - i);
        if mode > max_mode || (n.is_multiple_of(2) && i == n / 2 && mode >= max_mode && max_mode < n / 2) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    inverse.process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Fourier table of node-major samples with `dim` components per node.
pub fn fourier_coefficients(grid: &Grid, samples: &[f64], dim: usize) -> Result<FourierTable> {
    let n = grid.n_points();
    if dim == 0 || samples.len() != n * dim {
        return Err(Error::InvalidArgument(format!(
            "expected {} samples, got {}",
            n * dim,
            samples.len()
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n * dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let half = n as i64 / 2;
    for c in 0..dim {
        for (j, z) in buf.iter_mut().enumerate() {
            *z = Complex64::new(samples[j * dim + c], 0.0);
        }
        fft.process(&mut buf);
        for mode in -half..half {
            let k = mode.rem_euclid(n as i64) as usize;
            coeffs[(mode + half) as usize * dim + c] = buf[k] / n as f64;
        }
    }
    Ok(FourierTable {
        n_points: n,
        dim,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dft(f: &[f64], n: i64) -> Complex64 {
        let m = f.len();
        f.iter()
            .enumerate()
            .map(|(j, v)| {
                let x = std::f64::consts::TAU * j as f64 / m as f64;
                Complex64::from_polar(*v, -(n as f64) * x)
            })
            .sum::<Complex64>()
            / m as f64
    }

    #[test]
    fn constant_field_has_only_mean() {
        let g = Grid::new(16).unwrap();
        let s: Vec<f64> = (0..16).flat_map(|_| [0.3, -2.0]).collect();
        let t = fourier_coefficients(&g, &s, 2).unwrap();
        for n in t.min_mode()..=t.max_mode() {
            for c in 0..2 {
                let expect = if n == 0 { [0.3, -2.0][c] } else { 0.0 };
                assert!((t.get(n, c) - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn equator_against_direct_dft() {
        let g = Grid::new(16).unwrap();
        let s: Vec<f64> = g.nodes().iter().flat_map(|x| [x.cos(), x.sin(), 0.0]).collect();
        let t = fourier_coefficients(&g, &s, 3).unwrap();
        assert!((t.get(1, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((t.get(1, 1) - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((t.get(-1, 1) - Complex64::new(0.0, 0.5)).norm() < 1e-14);
        for n in t.min_mode()..=t.max_mode() {
            for c in 0..3 {
                let comp: Vec<f64> = s.iter().skip(c).step_by(3).copied().collect();
                assert!((t.get(n, c) - direct_dft(&comp, n)).norm() < 1e-14);
            }
            if n.abs() != 1 {
                assert!(t.mode_power(n) < 1e-28);
            }
        }
    }

    #[test]
    fn real_input_is_conjugate_symmetric_and_invertible() {
        let g = Grid::new(64).unwrap();
        let s: Vec<f64> = g
            .nodes()
            .iter()
            .flat_map(|x| [(3.0 * x).sin() + 0.2 * x.cos().exp(), (x * 5.0).cos()])
            .collect();
        let t = fourier_coefficients(&g, &s, 2).unwrap();
        for n in 1..t.max_mode() {
            for c in 0..2 {
                assert!((t.get(-n, c) - t.get(n, c).conj()).norm() < 1e-14);
            }
        }
        let back = t.reconstruct();
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }
}
