//! Uniform periodic grid on the circle and arcs of it.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Uniform grid `x_j = j * 2π / n` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_points: usize,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 8 || !n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and >= 8, got {n_points}"
            )));
        }
        Ok(Self { n_points })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        TAU / self.n_points as f64
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * TAU / self.n_points as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        if j + 1 == self.n_points {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn prev(&self, j: usize) -> usize {
        if j == 0 {
            self.n_points - 1
        } else {
            j - 1
        }
    }

    /// Central first difference of a scalar periodic grid function.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        let inv = 0.5 / self.spacing();
        (0..self.n_points)
            .map(|j| (f[self.next(j)] - f[self.prev(j)]) * inv)
            .collect()
    }

    /// Three-point second difference of a scalar periodic grid function.
    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (self.spacing() * self.spacing());
        (0..self.n_points)
            .map(|j| (f[self.next(j)] - 2.0 * f[j] + f[self.prev(j)]) * inv)
            .collect()
    }

    /// Midpoint-rule integral `Σ f_j · spacing`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.spacing()
    }
}

/// Open arc ω of the circle running counter-clockwise from `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRegion {
    start: f64,
    length: f64,
}

impl ControlRegion {
    /// Arc from `start` to `end`; `end < start` wraps through 2π.
    /// `end == start + 2π` gives the full circle.
    pub fn arc(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidArgument("region endpoints must be finite".into()));
        }
        let s = start.rem_euclid(TAU);
        let mut length = end - start;
        if length <= 0.0 {
            length = (end - start).rem_euclid(TAU);
        }
        if length <= 0.0 || length > TAU + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "region ({start}, {end}) must be a nonempty arc of length at most 2π"
            )));
        }
        Ok(Self {
            start: s,
            length: length.min(TAU),
        })
    }

    /// Symmetric arc `(-half_width, half_width)`.
    pub fn centered(half_width: f64) -> Result<Self> {
        Self::arc(-half_width, half_width)
    }

    pub fn full() -> Self {
        Self {
            start: 0.0,
            length: TAU,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_full(&self) -> bool {
        self.length >= TAU
    }

    /// Position of `x` measured from the arc start, in `[0, 2π)`.
    fn local(&self, x: f64) -> f64 {
        (x - self.start).rem_euclid(TAU)
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let u = self.local(x);
        u > 0.0 && u < self.length
    }

    /// Smooth cutoff χ_ω: one on the middle 80% of the arc, a C² ramp on
    /// each remaining 10%, zero outside. Identically one on the full circle.
    pub fn cutoff(&self, x: f64) -> f64 {
        if self.is_full() {
            return 1.0;
        }
        let u = self.local(x);
        if u <= 0.0 || u >= self.length {
            return 0.0;
        }
        let ramp = 0.1 * self.length;
        let r = (u.min(self.length - u) / ramp).min(1.0);
        smootherstep(r)
    }

    /// Cutoff with smootherstep ramps of absolute width `ramp` (capped at half
    /// the arc) at both ends.
    pub fn ramp_cutoff(&self, x: f64, ramp: f64) -> f64 {
        if self.is_full() {
            return 1.0;
        }
        let u = self.local(x);
        if u <= 0.0 || u >= self.length {
            return 0.0;
        }
        let ramp = ramp.min(0.5 * self.length);
        if ramp <= 0.0 {
            return 1.0;
        }
        smootherstep((u.min(self.length - u) / ramp).min(1.0))
    }

    pub fn cutoff_samples(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().into_iter().map(|x| self.cutoff(x)).collect()
    }

    /// Distance along the circle from `x` to the closure of the arc.
    pub fn distance(&self, x: f64) -> f64 {
        if self.is_full() {
            return 0.0;
        }
        let u = self.local(x);
        if u <= self.length {
            0.0
        } else {
            (u - self.length).min(TAU - u)
        }
    }
}

impl std::fmt::Display for ControlRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.start, self.end())
    }
}

/// `6r⁵ − 15r⁴ + 10r³`, C² on [0, 1] with flat ends.
pub fn smootherstep(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    r * r * r * (r * (6.0 * r - 15.0) + 10.0)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
