use thiserror::Error;

use crate::control::GramianSolveReport;

/// Errors raised by the simulation, analysis and control routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("vector is not a unit vector (|phi| = {norm})")]
    NotUnit { norm: f64 },
    #[error("CFL violated: dt = {dt} exceeds {limit}")]
    CflViolated { dt: f64, limit: f64 },
    #[error("NaN detected at t = {time}")]
    NanDetected { time: f64 },
    #[error("unresolved loop: angular jump {jump} at node {node}")]
    UnresolvedLoop { node: usize, jump: f64 },
    #[error("degree not resolved: raw value {raw}, residual {residual}")]
    DegreeNotResolved { raw: f64, residual: f64 },
    #[error("window unresolved: {samples} samples inside the bump window")]
    WindowUnresolved { samples: usize },
    #[error("degenerate mode: |2 alpha| = {magnitude}")]
    DegenerateMode { magnitude: f64 },
    #[error("control synthesis not converged: residual {}", report.residual)]
    NotConverged { report: GramianSolveReport },
    #[error("degree mismatch: initial {initial}, final {target}")]
    DegreeMismatch { initial: i64, target: i64 },
    #[error("cap undefined: sup |H - a| = {sup} is not below 2")]
    CapUndefined { sup: f64 },
    #[error("mollification failure: {0}")]
    Mollification(String),
    #[error("budget exceeded at t = {time}")]
    BudgetExceeded { time: f64 },
    #[error("drop ineffective: energy {start} -> {end} against level {level}")]
    DropIneffective { start: f64, end: f64, level: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
