//! Global steering: damp to an approximate harmonic map, lower the energy with
//! a rotated drop control, repeat until below the first nonconstant level,
//! then damp toward a constant.

use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::drop::{energy_drop_control, DROP_TIME};
use super::hum::HumOptions;
use crate::error::{Error, Result};
use crate::grid::ControlRegion;
use crate::harmonic::{nearest_harmonic_or_constant, GeodesicMap};
use crate::solver::{DampingProfile, EnergyTrace, Solver, Trajectory, CFL_RATIO};
use crate::state::{energy, FieldState};

/// Kind of a pipeline phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Damp,
    Drop,
    FinalDamp,
}

impl std::fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhaseKind::Damp => "damp",
            PhaseKind::Drop => "drop",
            PhaseKind::FinalDamp => "final-damp",
        })
    }
}

/// One phase of the pipeline.
#[derive(Debug, Clone)]
pub struct PhaseRecord {
    pub kind: PhaseKind,
    pub start_time: f64,
    pub duration: f64,
    pub start_energy: f64,
    pub end_energy: f64,
    pub geodesic: Option<GeodesicMap>,
    pub rotation: Option<DMatrix<f64>>,
    pub eps: Option<f64>,
    /// Drop attempts made in this phase, including the accepted one.
    pub attempts: usize,
}

/// Per-phase records and the overall outcome.
#[derive(Debug, Clone, Default)]
pub struct PipelineReport {
    pub phases: Vec<PhaseRecord>,
    pub success: bool,
    pub final_energy: f64,
    pub total_time: f64,
}

impl PipelineReport {
    pub fn drop_count(&self) -> usize {
        self.phases.iter().filter(|p| p.kind == PhaseKind::Drop).count()
    }

    /// Whether start and end energies never increase from one phase to the next.
    pub fn boundary_energies_monotone(&self, tol: f64) -> bool {
        let mut last = f64::INFINITY;
        for p in &self.phases {
            if p.start_energy > last + tol || p.end_energy > p.start_energy + tol {
                return false;
            }
            last = p.end_energy;
        }
        true
    }

    /// Comma-separated phase table.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "# success={} final_energy={:.16e} total_time={:.16e}", self.success, self.final_energy, self.total_time)?;
        writeln!(w, "phase,kind,start_time,duration,start_energy,end_energy,winding,eps,attempts")?;
        for (i, p) in self.phases.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                p.kind,
                p.start_time,
                p.duration,
                p.start_energy,
                p.end_energy,
                p.geodesic.as_ref().map_or(String::new(), |g| g.winding().to_string()),
                p.eps.map_or(String::new(), |e| format!("{e:.16e}")),
                p.attempts
            )?;
        }
        Ok(())
    }
}

/// Pipeline settings.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// ε for the i-th drop; the last entry is reused beyond the end.
    pub eps_schedule: Vec<f64>,
    /// Maximum total simulated time.
    pub budget: f64,
    /// Approximate-harmonic gate ν₁.
    pub harmonic_gate: f64,
    /// Drops stop once `E < 2π − margin`.
    pub margin: f64,
    pub final_tol: f64,
    pub control_region: ControlRegion,
    pub hum: HumOptions,
    pub dt_ratio: f64,
    /// Time between harmonic checks while damping.
    pub check_interval: f64,
    /// Saved-state stride of the returned trajectory.
    pub save_every: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            eps_schedule: geometric_schedule(0.1, 0.5, 4),
            budget: 2000.0,
            harmonic_gate: 0.05,
            margin: 0.1,
            final_tol: 1e-2,
            control_region: ControlRegion::centered(0.75 * std::f64::consts::PI)
                .expect("valid arc"),
            hum: HumOptions::default(),
            dt_ratio: CFL_RATIO,
            check_interval: 0.25,
            save_every: 200,
        }
    }
}

/// `first, first·ratio, …` with `len` terms.
pub fn geometric_schedule(first: f64, ratio: f64, len: usize) -> Vec<f64> {
    (0..len).map(|i| first * ratio.powi(i as i32)).collect()
}

struct Assembler {
    states: Vec<FieldState>,
    trace: EnergyTrace,
    offset: f64,
    save_every: usize,
    dt: f64,
}

impl Assembler {
    fn append(&mut self, traj: &Trajectory) {
        let skip = usize::from(!self.trace.is_empty());
        for i in skip..traj.trace.len() {
            self.trace.push(
                traj.trace.times[i],
                traj.trace.energy[i],
                self.offset + traj.trace.dissipation[i],
                traj.trace.tangency_error[i],
            );
        }
        self.offset += traj.trace.dissipation.last().copied().unwrap_or(0.0);
        let skip = usize::from(!self.states.is_empty());
        self.states.extend(traj.states.iter().skip(skip).cloned());
    }
}

/// Runs the three-step strategy from `initial` with `damping` active outside
/// drop phases.
pub fn global_pipeline(
    initial: &FieldState,
    damping: &DampingProfile,
    opts: &PipelineOptions,
) -> Result<(Trajectory, PipelineReport)> {
    if initial.k() < 2 {
        return Err(Error::InvalidArgument("pipeline needs k >= 2".into()));
    }
    if opts.eps_schedule.is_empty() || opts.eps_schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("eps_schedule must be nonempty and positive".into()));
    }
    let grid = initial.grid();
    let dt = opts.dt_ratio * grid.spacing();
    let check_every = ((opts.check_interval / dt).round() as usize).max(1);
    let t0 = initial.time();
    let stride = opts.save_every.max(1);
    let mut out = Assembler {
        states: Vec::new(),
        trace: EnergyTrace::default(),
        offset: 0.0,
        save_every: stride,
        dt,
    };
    let mut report = PipelineReport::default();
    let mut state = initial.clone();
    let threshold = TAU - opts.margin;
    let gate = opts.harmonic_gate;
    let harmonic_hit = |s: &FieldState| -> Option<GeodesicMap> {
        match nearest_harmonic_or_constant(s) {
            Ok((g, d)) if d <= gate && g.winding() >= 1 => Some(g),
            _ => None,
        }
    };

    loop {
        let e = energy(&state);
        if e < threshold {
            break;
        }
        let elapsed = state.time() - t0;
        if elapsed >= opts.budget {
            return Err(Error::BudgetExceeded { time: elapsed });
        }
        let detected = match harmonic_hit(&state) {
            Some(g) => g,
            None => {
                let remaining = opts.budget - elapsed;
                let (traj, stopped) = Solver::new(dt)
                    .damping(damping)
                    .save_every(stride)
                    .run_until(&state, remaining, check_every, |s, e| {
                        e < threshold || harmonic_hit(s).is_some()
                    })?;
                out.append(&traj);
                let end = traj.final_state().clone();
                report.phases.push(PhaseRecord {
                    kind: PhaseKind::Damp,
                    start_time: state.time(),
                    duration: end.time() - state.time(),
                    start_energy: e,
                    end_energy: energy(&end),
                    geodesic: None,
                    rotation: None,
                    eps: None,
                    attempts: 0,
                });
                state = end;
                if !stopped {
                    return Err(Error::BudgetExceeded { time: state.time() - t0 });
                }
                continue;
            }
        };

        let n = detected.winding() as f64;
        let level = TAU * n * n;
        let drop_index = report.drop_count();
        let mut eps = opts.eps_schedule[drop_index.min(opts.eps_schedule.len() - 1)];
        let mut accepted = None;
        let mut attempts = 0;
        let mut last_end = e;
        for _ in 0..2 {
            attempts += 1;
            let control = energy_drop_control(&detected, eps, opts.control_region, grid, &opts.hum)?;
            let forcing = control.signal.clone().starting_at(state.time());
            let traj = Solver::new(control.signal.dt())
                .forcing(&forcing)
                .save_every(stride)
                .run(&state, DROP_TIME)?;
            let end_e = energy(traj.final_state());
            last_end = end_e;
            if end_e < e.min(level) {
                accepted = Some((traj, control));
                break;
            }
            eps *= 0.5;
        }
        let Some((traj, control)) = accepted else {
            return Err(Error::DropIneffective {
                start: e,
                end: last_end,
                level,
            });
        };
        out.append(&traj);
        let end = traj.final_state().clone();
        report.phases.push(PhaseRecord {
            kind: PhaseKind::Drop,
            start_time: state.time(),
            duration: end.time() - state.time(),
            start_energy: e,
            end_energy: energy(&end),
            geodesic: Some(detected),
            rotation: Some(control.rotation),
            eps: Some(control.eps),
            attempts,
        });
        state = end;
    }

    let e = energy(&state);
    if e >= opts.final_tol {
        let remaining = opts.budget - (state.time() - t0);
        if remaining <= 0.0 {
            return Err(Error::BudgetExceeded { time: state.time() - t0 });
        }
        let tol = opts.final_tol;
        let (traj, stopped) = Solver::new(dt)
            .damping(damping)
            .save_every(stride)
            .run_until(&state, remaining, check_every, |_, e| e < tol)?;
        out.append(&traj);
        let end = traj.final_state().clone();
        report.phases.push(PhaseRecord {
            kind: PhaseKind::FinalDamp,
            start_time: state.time(),
            duration: end.time() - state.time(),
            start_energy: e,
            end_energy: energy(&end),
            geodesic: None,
            rotation: None,
            eps: None,
            attempts: 0,
        });
        state = end;
        if !stopped {
            return Err(Error::BudgetExceeded { time: state.time() - t0 });
        }
    } else if out.states.is_empty() {
        out.states.push(state.clone());
        out.trace.push(state.time(), e, 0.0, state.tangency_error());
    }
    report.final_energy = energy(&state);
    report.total_time = state.time() - t0;
    report.success = report.final_energy < opts.final_tol;
    Ok((
        Trajectory {
            states: out.states,
            trace: out.trace,
            dt: out.dt,
            n_points: grid.n_points(),
            save_every: out.save_every,
        },
        report,
    ))
}
