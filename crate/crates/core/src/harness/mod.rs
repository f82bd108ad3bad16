//! Configuration, named experiments and parameter sweeps behind the
//! `wavemaps` command line.
//!
//! Every artifact starts with `#` lines echoing the full configuration, and
//! each run also writes `<experiment>_summary.txt` with `key = value` lines.

mod config;
mod experiments;
mod sweep;

pub use config::{parse_real, Experiment, ExperimentConfig, FamilyChoice, RegionSpec};
pub use experiments::{
    family_state_with_energy, log_linear_fit, perturbed_geodesic, random_perturbation, run,
    run_with, RunOutcome, DECAY_FLOOR,
};
pub use sweep::{sweep, SweepOutcome, SweepRow};

/// Process exit status for a finished run.
pub fn exit_code(result: &crate::Result<bool>) -> i32 {
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(crate::Error::Config { .. }) => 2,
        Err(_) => 1,
    }
}
