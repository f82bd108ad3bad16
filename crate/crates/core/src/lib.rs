//! Simulation, analysis and control of wave maps from the circle into spheres.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`state`], [`fourier`], [`topology`]: periodic grids, sphere-valued
//!   field states, energies, Fourier diagnostics, winding numbers and degrees.
//! * [`solver`]: a constraint-preserving integrator for the forced and damped
//!   wave maps equation, with energy bookkeeping.
//! * [`harmonic`]: detection of approximate harmonic maps (closed geodesics).
//! * [`control`]: linear Klein–Gordon control by HUM, energy-lowering controls,
//!   the global steering pipeline, small-time quadratic forms and the
//!   sharp-time control of circle-valued maps.
//! * [`obstruction`]: the parameter families with nonzero degree and the
//!   non-uniform decay experiment.
//! * [`harness`]: configuration and named experiments behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod control;
pub mod error;
pub mod exec;
pub mod fourier;
pub mod grid;
pub mod harmonic;
pub mod harness;
pub mod obstruction;
pub mod solver;
pub mod state;
pub mod topology;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use grid::{ControlRegion, Grid};
pub use state::{energy, project_orthogonal, FieldState};
