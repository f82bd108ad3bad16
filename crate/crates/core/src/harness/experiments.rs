//! The named experiments.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    discrete_mass, energy_drop_control, energy_drop_control_from, global_pipeline, kg_solve, polar_hum_options,
    raw_profile_integral, s1_polar_control, sharp_time, small_time_negative_construction,
    small_time_positive_check, HumOptions, PipelineOptions, ScalarField, DROP_TIME,
};
use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};
use crate::grid::{ControlRegion, Grid};
use crate::harmonic::{harmonic_report, write_harmonic_report, GeodesicMap};
use crate::obstruction::{
    family_energy_curve, nonuniform_decay_experiment, write_decay_csv, write_degree_report,
    HomotopyFamily,
};
use crate::solver::{closed_form_radial, linf_distance, DampingProfile, RadialSchedule, Solver};
use crate::state::{energy, fmt17, state_distance, FieldState};
use crate::topology::{winding_number, DEGREE_RESIDUAL_MAX};

use super::config::{Experiment, ExperimentConfig, FamilyChoice, RegionSpec};

/// Artifacts and verdict of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub files: Vec<PathBuf>,
    /// Ordered `key, value` pairs, also written to `<stem>_summary.txt`.
    pub summary: Vec<(String, String)>,
    pub violations: Vec<String>,
}

impl RunOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    mode: ExecMode,
    header: Vec<String>,
    files: Vec<PathBuf>,
    summary: Vec<(String, String)>,
    violations: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig, mode: ExecMode) -> Self {
        let mut header = vec![format!("wavemaps {}", cfg.experiment)];
        header.extend(cfg.echo());
        Self {
            cfg,
            mode,
            header,
            files: Vec::new(),
            summary: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.cfg
            .output_dir
            .join(format!("{}_{suffix}", self.cfg.experiment.stem()))
    }

    fn write<F>(&mut self, suffix: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write, &[String]) -> std::io::Result<()>,
    {
        let p = self.path(suffix);
        let mut w = BufWriter::new(fs::File::create(&p)?);
        body(&mut w, &self.header)?;
        w.flush()?;
        self.files.push(p);
        Ok(())
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn put_f(&mut self, key: &str, value: f64) {
        self.put(key, fmt17(value));
    }

    fn violate(&mut self, message: impl Into<String>) {
        self.violations.push(message.into());
    }

    fn finish(mut self) -> Result<RunOutcome> {
        let status = if self.violations.is_empty() { "ok" } else { "violation" };
        let mut lines: Vec<String> = self.header.iter().map(|h| format!("# {h}")).collect();
        lines.push(format!("status = {status}"));
        lines.extend(self.summary.iter().map(|(k, v)| format!("{k} = {v}")));
        lines.extend(self.violations.iter().map(|v| format!("violation = {v}")));
        let p = self.path("summary.txt");
        fs::write(&p, lines.join("\n") + "\n")?;
        self.files.push(p);
        Ok(RunOutcome {
            experiment: self.cfg.experiment,
            files: self.files,
            summary: self.summary,
            violations: self.violations,
        })
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.cfg.n_points)
    }

    fn dt(&self, grid: &Grid) -> f64 {
        self.cfg.dt_ratio * grid.spacing()
    }

    fn damping(&self, grid: Grid) -> Result<DampingProfile> {
        DampingProfile::new(grid, self.cfg.damping_region.region()?, self.cfg.damping_amplitude)
    }

    fn control_region(&self, default: RegionSpec) -> Result<ControlRegion> {
        self.cfg.control_region.unwrap_or(default).region()
    }

    fn check_state(&mut self, what: &str, s: &FieldState) {
        let (norm, tang) = s.constraint_errors();
        if !(norm <= 1e-8 && tang <= 1e-8) {
            self.violate(format!("{what}: constraint errors {norm:e}, {tang:e}"));
        }
    }
}

/// Least-squares fit `log y ≈ c − r t`; returns `(r, R²)`.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(a, v)| (*a, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r2 = sty * sty / (stt * syy);
    Some((-slope, r2))
}

/// Energies above this fraction of `E(0)` form the decaying window.
pub const DECAY_FLOOR: f64 = 1e-10;

/// Family member `A_{k−1}(s, π/2, …, π/2, ·)` at rest whose discrete energy
/// `2π sin² s · (sin h / h)²` equals `e0`; above that range it is the equator.
pub fn family_state_with_energy(grid: Grid, k: usize, e0: f64) -> Result<FieldState> {
    if k < 2 {
        return Err(Error::InvalidArgument("family states need k >= 2".into()));
    }
    if !(e0 > 0.0 && e0 <= TAU) {
        return Err(Error::InvalidArgument(format!("energy {e0} must lie in (0, 2π]")));
    }
    let family = HomotopyFamily::new(k - 1)?;
    let mut s = vec![PI / 2.0; k - 1];
    let h = grid.spacing();
    let scale = (h.sin() / h).powi(2);
    s[0] = (e0 / (TAU * scale)).min(1.0).sqrt().asin();
    family.state(grid, &s)
}

/// The geodesic `(cos Nx, sin Nx, 0, …)` with velocity `c cos(Nx) e₃`, `c` chosen
/// so that the discrete energy equals `e0`.
pub fn perturbed_geodesic(grid: Grid, k: usize, n: u32, e0: f64) -> Result<FieldState> {
    let base = GeodesicMap::reference(k, n)?.state(grid)?;
    let base_e = energy(&base);
    if !(e0 > base_e) {
        return Err(Error::InvalidArgument(format!(
            "energy {e0} must exceed the geodesic energy {base_e}"
        )));
    }
    let nf = n as f64;
    let bump: f64 = grid.nodes().iter().map(|x| (nf * x).cos().powi(2)).sum::<f64>() * grid.spacing();
    let c = ((e0 - base_e) / bump).sqrt();
    FieldState::from_fn(
        grid,
        k,
        |x| GeodesicMap::reference(k, n).map(|g| g.eval(x)).unwrap_or_default(),
        |x| {
            let mut v = vec![0.0; k + 1];
            v[2] = c * (nf * x).cos();
            v
        },
    )
}

/// A seeded smooth perturbation of `base` at `H¹ × L²` distance at most `radius`.
pub fn random_perturbation(base: &FieldState, radius: f64, rng: &mut ChaCha8Rng) -> Result<FieldState> {
    let grid = base.grid();
    let d = base.dim();
    let modes = 4;
    let mut coeffs = || -> Vec<f64> { (0..d * (2 * modes + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let pc = coeffs();
    let vc = coeffs();
    let eval = |co: &[f64], c: usize, x: f64| {
        let co = &co[c * (2 * modes + 1)..(c + 1) * (2 * modes + 1)];
        let mut s = co[0];
        for m in 1..=modes {
            let (sm, cm) = (m as f64 * x).sin_cos();
            s += co[2 * m - 1] * cm + co[2 * m] * sm;
        }
        s
    };
    let target = radius * rng.gen_range(0.25..1.0);
    let build = |amp: f64| -> Result<FieldState> {
        let mut phi = Vec::with_capacity(base.phi().len());
        let mut vel = Vec::with_capacity(base.phi().len());
        for (j, x) in grid.nodes().into_iter().enumerate() {
            let p = base.point(j);
            let q: Vec<f64> = (0..d).map(|c| p[c] + amp * eval(&pc, c, x)).collect();
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let q: Vec<f64> = q.iter().map(|v| v / n).collect();
            let w: Vec<f64> = (0..d).map(|c| base.velocity(j)[c] + amp * eval(&vc, c, x)).collect();
            let dotp: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
            vel.extend(w.iter().zip(&q).map(|(a, b)| a - dotp * b));
            phi.extend(q);
        }
        FieldState::new(grid, base.k(), phi, vel, base.time())
    };
    let mut amp = 1e-3;
    let probe = state_distance(&build(amp)?, base)?;
    amp *= target / probe;
    let mut out = build(amp)?;
    while state_distance(&out, base)? > radius {
        amp *= 0.95;
        out = build(amp)?;
    }
    Ok(out)
}

/// Validates `cfg`, creates the output directory and runs the experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_with(cfg, ExecMode::default())
}

pub fn run_with(cfg: &ExperimentConfig, mode: ExecMode) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut r = Run::new(cfg, mode);
    match cfg.experiment {
        Experiment::DampDecay => damp_decay(&mut r)?,
        Experiment::HarmonicDetect => harmonic_detect(&mut r)?,
        Experiment::EnergyDrop => energy_drop(&mut r)?,
        Experiment::Radial => radial(&mut r)?,
        Experiment::KgControl => kg_control(&mut r)?,
        Experiment::Pipeline => pipeline(&mut r)?,
        Experiment::S1Control => s1_control(&mut r)?,
        Experiment::Degree => degree(&mut r)?,
        Experiment::NonuniformDecay => nonuniform(&mut r)?,
        Experiment::SmallTime => small_time(&mut r)?,
    }
    r.finish()
}

fn damp_decay(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let damping = r.damping(grid)?;
    let init = family_state_with_energy(grid, cfg.k, cfg.initial_energy.unwrap_or(PI))?;
    let duration = cfg.duration.unwrap_or(20.0);
    let traj = Solver::new(r.dt(&grid))
        .damping(&damping)
        .save_every(usize::MAX)
        .run(&init, duration)?;
    let tr = &traj.trace;
    let e0 = tr.energy[0];
    r.write("trace.csv", |w, h| tr.write_csv(w, h))?;
    r.put_f("e0", e0);
    r.put_f("e_final", *tr.energy.last().expect("nonempty trace"));
    r.put_f("balance_residual", tr.balance_residual());
    let hit = tr
        .times
        .iter()
        .zip(&tr.energy)
        .find(|(_, e)| **e <= 0.01 * e0)
        .map(|(t, _)| *t);
    r.put("time_to_one_percent", hit.map_or("never".to_string(), fmt17));
    let end = tr
        .energy
        .iter()
        .position(|e| *e < DECAY_FLOOR * e0)
        .unwrap_or(tr.len());
    match log_linear_fit(&tr.times[..end], &tr.energy[..end]) {
        Some((rate, r2)) => {
            r.put_f("decay_rate", rate);
            r.put_f("fit_r2", r2);
        }
        None => {
            r.put("decay_rate", "undefined");
            r.put("fit_r2", "undefined");
        }
    }
    let tang = tr.tangency_error.iter().fold(0.0f64, |m, v| m.max(*v));
    r.put_f("max_tangency_error", tang);
    r.check_state("final state", traj.final_state());
    Ok(())
}

fn harmonic_detect(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let n = cfg.winding.unwrap_or(1);
    let level = TAU * (n * n) as f64;
    let e0 = cfg.initial_energy.unwrap_or(level + 0.15);
    let damping = r.damping(grid)?;
    let init = perturbed_geodesic(grid, cfg.k, n, e0)?;
    let traj = Solver::new(r.dt(&grid))
        .damping(&damping)
        .save_every(cfg.save_every)
        .run(&init, cfg.duration.unwrap_or(300.0))?;
    let rows = harmonic_report(&traj);
    r.write("report.csv", |w, h| write_harmonic_report(&rows, w, h))?;
    let trapped = rows
        .iter()
        .find(|row| row.nearest_n == n && row.distance <= 0.05 && row.delta_star <= 0.05);
    let dropped = rows.iter().find(|row| row.energy < level - 0.1);
    r.put_f("e0", energy(&init));
    let outcome = match (trapped, dropped) {
        (Some(a), Some(b)) if a.time <= b.time => ("trapped", a.time),
        (_, Some(b)) => ("dropped", b.time),
        (Some(a), None) => ("trapped", a.time),
        (None, None) => ("neither", f64::NAN),
    };
    r.put("outcome", outcome.0);
    r.put_f("event_time", outcome.1);
    r.put_f("e_final", energy(traj.final_state()));
    if outcome.0 == "neither" {
        r.violate("run neither entered the harmonic neighbourhood nor dropped below the level");
    }
    r.check_state("final state", traj.final_state());
    Ok(())
}

fn energy_drop(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let n = cfg.winding.unwrap_or(1);
    let region = r.control_region(RegionSpec::Full)?;
    let g = GeodesicMap::reference(cfg.k, n)?;
    let init = g.state(grid)?;
    let opts = HumOptions {
        dt_ratio: cfg.dt_ratio,
        ..HumOptions::default()
    };
    let dc = energy_drop_control(&g, cfg.eps, region, grid, &opts)?;
    let traj = Solver::new(dc.signal.dt())
        .forcing(&dc.signal)
        .save_every(usize::MAX)
        .run(&init, DROP_TIME)?;
    r.write("trace.csv", |w, h| traj.trace.write_csv(w, h))?;
    let e0 = energy(&init);
    let e1 = energy(traj.final_state());
    let de = e1 - e0;
    let law = -TAU * (n * n) as f64;
    r.put_f("e0", e0);
    r.put_f("e_final", e1);
    r.put_f("delta_e", de);
    r.put_f("delta_e_over_eps2", de / cfg.eps.powi(2));
    r.put_f("ratio_to_law", de / cfg.eps.powi(2) / law);
    r.put_f("hum_residual", dc.report.residual);
    r.put("hum_iterations", dc.report.iterations);
    if !(e1 < e0) {
        r.violate(format!("energy did not drop: {e0} -> {e1}"));
    }
    r.check_state("final state", traj.final_state());
    Ok(())
}

fn radial(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let t_final = cfg.duration.unwrap_or(4.0);
    let schedule = RadialSchedule::smoothstep(t_final, cfg.theta_final)?;
    let (exact, control) = closed_form_radial(&schedule, grid, r.dt(&grid))?;
    let sim = Solver::new(control.dt())
        .forcing(&control)
        .save_every(usize::MAX)
        .run(exact.initial_state(), t_final)?;
    r.write("trace.csv", |w, h| sim.trace.write_csv(w, h))?;
    let err = linf_distance(sim.final_state(), exact.final_state());
    let h = grid.spacing();
    let dt = control.dt();
    let bound = 20.0 * (h * h + dt * dt);
    r.put_f("linf_error", err);
    r.put_f("error_bound", bound);
    r.put_f("e_final_simulated", energy(sim.final_state()));
    r.put_f("e_final_exact", schedule.energy(t_final));
    if err > bound {
        r.violate(format!("closed-form mismatch {err:e} exceeds {bound:e}"));
    }
    r.check_state("final state", sim.final_state());
    Ok(())
}

fn kg_control(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let n = cfg.winding.unwrap_or(1);
    let region = r.control_region(RegionSpec::Centered(0.75 * PI))?;
    let g = GeodesicMap::reference(cfg.k, n)?;
    let opts = HumOptions {
        dt_ratio: cfg.dt_ratio,
        ..HumOptions::default()
    };
    let dc = energy_drop_control(&g, cfg.eps, region, grid, &opts)?;
    let mass = discrete_mass(grid, n);
    let fields = kg_solve(&ScalarField::zero(grid), Some(&dc.scalar), mass, DROP_TIME, dc.scalar.dt())?;
    let f_end = fields.last().expect("nonempty").quadratic_form(mass);
    let law = -TAU * (n * n) as f64;
    r.put_f("hum_residual", dc.report.residual);
    r.put("hum_iterations", dc.report.iterations);
    r.put_f("hum_min_curvature", dc.report.min_curvature_estimate);
    r.put_f("quadratic_form_change", f_end);
    r.put_f("quadratic_form_ratio", f_end / law);

    let base = g.state(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![base.clone()];
    for _ in 1..cfg.samples {
        starts.push(random_perturbation(&base, 0.02, &mut rng)?);
    }
    let rows: Vec<Result<(f64, f64, f64, f64)>> = map_ordered(r.mode, &starts, |s| {
        let own = energy_drop_control_from(s, &g, cfg.eps, region, &opts)?;
        let traj = Solver::new(own.signal.dt())
            .forcing(&own.signal)
            .save_every(usize::MAX)
            .run(s, DROP_TIME)?;
        Ok((
            state_distance(s, &base)?,
            energy(s),
            energy(traj.final_state()),
            own.report.residual,
        ))
    });
    let rows: Vec<(f64, f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    r.write("runs.csv", |w, h| {
        for c in h {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "sample,distance,e0,e_final")?;
        for (i, (d, e0, e1, _)) in rows.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", fmt17(*d), fmt17(*e0), fmt17(*e1))?;
        }
        Ok(())
    })?;
    let worst = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.2));
    let max_dist = rows.iter().fold(0.0f64, |m, r| m.max(r.0));
    r.put("runs", rows.len());
    r.put_f("max_start_distance", max_dist);
    r.put_f("max_e_final", worst);
    r.put_f("e_final_from_geodesic", rows[0].2);
    r.put_f("max_run_hum_residual", rows.iter().fold(0.0f64, |m, r| m.max(r.3)));
    if !(worst < TAU * (n * n) as f64) {
        r.violate(format!("a controlled run ended at energy {worst}, not below the level"));
    }
    Ok(())
}

fn pipeline(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let n = cfg.winding.unwrap_or(2);
    let region = r.control_region(RegionSpec::Centered(0.75 * PI))?;
    let init = GeodesicMap::reference(cfg.k, n)?.state(grid)?;
    let damping = r.damping(grid)?;
    let opts = PipelineOptions {
        eps_schedule: cfg.eps_schedule.clone(),
        budget: cfg.budget,
        control_region: region,
        dt_ratio: cfg.dt_ratio,
        save_every: cfg.save_every,
        ..PipelineOptions::default()
    };
    let (traj, report) = global_pipeline(&init, &damping, &opts)?;
    r.write("phases.csv", |w, h| report.write_csv(w, h))?;
    r.write("trace.csv", |w, h| traj.trace.write_csv(w, h))?;
    r.put("success", report.success);
    r.put_f("e0", energy(&init));
    r.put_f("final_energy", report.final_energy);
    r.put_f("total_time", report.total_time);
    r.put("phases", report.phases.len());
    r.put("drop_phases", report.drop_count());
    let monotone = report.boundary_energies_monotone(1e-9);
    r.put("boundary_energies_monotone", monotone);
    if !monotone {
        r.violate("phase-boundary energies increased");
    }
    if !report.success {
        r.violate("pipeline did not reach the final tolerance");
    }
    r.check_state("final state", traj.final_state());
    Ok(())
}

fn winding_loop(grid: Grid, n: i64, bend: f64) -> Result<FieldState> {
    FieldState::from_fn(
        grid,
        1,
        |x| {
            let a = n as f64 * x + bend * x.sin();
            vec![a.cos(), a.sin()]
        },
        |_| vec![0.0, 0.0],
    )
}

fn s1_control(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let n = cfg.winding.unwrap_or(1) as i64;
    let region = r.control_region(RegionSpec::Arc(0.0, PI))?;
    let t0 = sharp_time(region);
    let duration = cfg.duration.unwrap_or(t0 + 0.2);
    let initial = winding_loop(grid, n, 0.0)?;
    let target = winding_loop(grid, n, 0.3)?;
    let opts = HumOptions {
        dt_ratio: cfg.dt_ratio,
        ..polar_hum_options()
    };
    r.put_f("sharp_time", t0);
    r.put_f("duration", duration);
    let solve = |t: f64| match s1_polar_control(&initial, &target, t, region, &opts) {
        Ok(pc) => Ok((true, pc.report.clone(), pc.corrections, Some(pc))),
        Err(Error::NotConverged { report }) => Ok((false, report, 0, None)),
        Err(e) => Err(e),
    };
    let (converged, report, corrections, pc) = solve(duration)?;
    r.put("converged", converged);
    r.put_f("residual", report.residual);
    r.put("iterations", report.iterations);
    r.put("corrections", corrections);
    r.put_f("min_curvature", report.min_curvature_estimate);
    if let Some(pc) = pc {
        r.write("control.txt", |w, h| pc.h.write_text(w, h))?;
        r.put("final_winding", winding_number(&pc.final_state)?);
        r.check_state("final state", &pc.final_state);
    } else {
        r.violate(format!("steering did not converge at T = {duration}"));
    }
    if duration >= t0 {
        let (_, below, _, _) = solve(t0 - 0.2)?;
        r.put_f("min_curvature_below_sharp_time", below.min_curvature_estimate);
        r.put_f(
            "curvature_ratio",
            report.min_curvature_estimate / below.min_curvature_estimate,
        );
    }
    Ok(())
}

fn degree(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let family = HomotopyFamily::new(cfg.family.params())?;
    let m = cfg.lattice.unwrap_or(match cfg.family {
        FamilyChoice::A | FamilyChoice::A2 => 256,
        FamilyChoice::A3 => 64,
    });
    let rep = family.degree(m, r.mode)?;
    let rows = vec![(family.name(), rep)];
    r.write("report.csv", |w, h| write_degree_report(&rows, w, h))?;
    r.put("family", family.name());
    r.put("m", m);
    r.put_f("raw_degree", rep.raw);
    r.put("rounded", rep.rounded);
    r.put_f("residual", rep.residual);
    if rep.residual >= DEGREE_RESIDUAL_MAX {
        r.violate(format!("degree not resolved: residual {}", rep.residual));
    }

    let grid = r.grid()?;
    let per_axis: usize = if family.params() == 1 { 64 } else { 16 };
    let mut samples = Vec::new();
    for flat in 0..per_axis.pow(family.params() as u32) {
        let mut rem = flat;
        let mut s = vec![0.0; family.params()];
        for v in s.iter_mut().rev() {
            *v = TAU * (rem % per_axis) as f64 / per_axis as f64;
            rem /= per_axis;
        }
        samples.push(s);
    }
    let energies = family_energy_curve(&family, grid, &samples, r.mode)?;
    let mut max_e = f64::NEG_INFINITY;
    let mut max_dev = 0.0f64;
    for (s, e) in samples.iter().zip(&energies) {
        max_e = max_e.max(*e);
        max_dev = max_dev.max((e - family.exact_energy(s)).abs());
    }
    r.write("energy.csv", |w, h| {
        for c in h {
            writeln!(w, "# {c}")?;
        }
        let names: Vec<String> = (1..=family.params()).map(|i| format!("s{i}")).collect();
        writeln!(w, "{},energy,exact", names.join(","))?;
        for (s, e) in samples.iter().zip(&energies) {
            let cols: Vec<String> = s.iter().map(|v| fmt17(*v)).collect();
            writeln!(w, "{},{},{}", cols.join(","), fmt17(*e), fmt17(family.exact_energy(s)))?;
        }
        Ok(())
    })?;
    r.put_f("max_family_energy", max_e);
    r.put_f("max_energy_deviation", max_dev);
    let windings: Vec<String> = (1..=5)
        .map(|k| winding_loop(grid, k, 0.0).and_then(|s| winding_number(&s)).map(|w| w.to_string()))
        .collect::<Result<_>>()?;
    r.put("loop_windings", windings.join(" "));
    Ok(())
}

fn nonuniform(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let damping = r.damping(grid)?;
    let rows = nonuniform_decay_experiment(&damping, &cfg.s, cfg.energy_target, cfg.t_max, r.mode)?;
    r.write("table.csv", |w, h| write_decay_csv(&rows, w, h))?;
    let censored: Vec<String> = rows
        .iter()
        .filter(|row| row.censored)
        .map(|row| fmt17(row.s))
        .collect();
    let finite: Vec<f64> = rows.iter().filter(|row| !row.censored).map(|row| row.hit_time).collect();
    let monotone = finite.windows(2).all(|w| w[1] >= w[0]);
    r.put("rows", rows.len());
    r.put("censored", censored.len());
    r.put("censored_s", if censored.is_empty() { "none".into() } else { censored.join(" ") });
    r.put("finite_hit_times_nondecreasing", monotone);
    Ok(())
}

fn small_time(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let grid = r.grid()?;
    let half = match cfg.control_region.unwrap_or(RegionSpec::Centered(PI / 4.0)) {
        RegionSpec::Centered(h) => h,
        other => {
            return Err(Error::Config {
                field: "control_region".into(),
                message: format!("small-time needs a centered region, got {other}"),
            })
        }
    };
    let duration = cfg.duration.unwrap_or(if half < PI / 2.0 { PI / 8.0 } else { 1.0 });
    r.put_f("half_width", half);
    r.put_f("duration", duration);
    if half < PI / 2.0 {
        let rep = small_time_positive_check(half, duration, cfg.samples, cfg.seed, grid, r.mode)?;
        r.put("mode", "positive");
        r.put_f("min_fbar", rep.min_fbar);
        r.put("counted", rep.counted);
        r.put("discarded", rep.discarded);
        r.put_f("cone_leak", rep.cone_leak);
        if !(rep.min_fbar > 0.0) {
            r.violate(format!("minimum F̄ = {} is not positive", rep.min_fbar));
        }
    } else {
        let nc = small_time_negative_construction(half, duration, grid, None)?;
        r.put("mode", "negative");
        r.put_f("fbar_exact", nc.fbar_exact);
        r.put_f("fbar_simulated", nc.fbar_simulated);
        r.put_f("a1", nc.a1);
        r.put_f("raw_integral", nc.raw_integral);
        r.put_f("raw_integral_full_width", raw_profile_integral(2.0 * half));
        r.put_f("mollifier_radius", nc.mollifier_radius);
        r.write("control.txt", |w, h| nc.control.write_text(w, h))?;
        if !(nc.fbar_simulated < 0.0) {
            r.violate(format!("F̄(T) = {} is not negative", nc.fbar_simulated));
        }
    }
    Ok(())
}

/// Replaces characters that are awkward in file names.
pub(crate) fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}
