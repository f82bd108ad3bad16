//! Control constructions: Klein–Gordon steering by HUM, energy-lowering
//! controls near geodesics, the global pipeline, the small-time quadratic form
//! and sharp-time control of circle-valued maps.

mod drop;
mod hum;
mod kg;
mod linearized;
mod pipeline;
mod sharp;

pub use drop::{alignment_error, discrete_mass, energy_drop_control, energy_drop_control_from, rotation_align, DropControl, DROP_TIME};
pub use hum::{
    hum_control, hum_control_unchecked, ControlMask, kg_exact_control, kg_exact_control_with, HumOptions,
    HumProblem,
};
pub use kg::{kg_solve, ScalarField};
pub use linearized::{
    draw_ensemble, ensemble_control, fbar, linearized_solve, raw_profile_integral,
    small_time_negative_construction, small_time_positive_check, smoothstep_profile,
    EnsembleMember, LinearizedTrajectory, NegativeConstruction, SmallTimeReport, TimeProfile,
    ENSEMBLE_MODES, NONTRIVIAL_NORM,
};
pub use pipeline::{
    geometric_schedule, global_pipeline, PhaseKind, PhaseRecord, PipelineOptions, PipelineReport,
};
pub use sharp::{
    polar_hum_options, polar_lift, s1_polar_control, sharp_time, PolarControl, PolarForcing,
    MAX_CORRECTIONS, POLAR_RAMP,
};

/// Outcome of a Gramian solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSolveReport {
    pub iterations: usize,
    /// `H¹ × L²` norm of the steering defect.
    pub residual: f64,
    pub control_norm: f64,
    /// Smallest Rayleigh quotient of the Gramian seen by the Krylov space.
    pub min_curvature_estimate: f64,
}

impl std::fmt::Display for GramianSolveReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iterations={} residual={:.16e} control_norm={:.16e} min_curvature_estimate={:.16e}",
            self.iterations, self.residual, self.control_norm, self.min_curvature_estimate
        )
    }
}
