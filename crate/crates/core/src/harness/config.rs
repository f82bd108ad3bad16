//! Flat `key = value` experiment configuration.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::ControlRegion;

/// Named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    DampDecay,
    HarmonicDetect,
    EnergyDrop,
    Radial,
    KgControl,
    Pipeline,
    S1Control,
    Degree,
    NonuniformDecay,
    SmallTime,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::DampDecay,
        Experiment::HarmonicDetect,
        Experiment::EnergyDrop,
        Experiment::Radial,
        Experiment::KgControl,
        Experiment::Pipeline,
        Experiment::S1Control,
        Experiment::Degree,
        Experiment::NonuniformDecay,
        Experiment::SmallTime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::DampDecay => "damp-decay",
            Experiment::HarmonicDetect => "harmonic-detect",
            Experiment::EnergyDrop => "energy-drop",
            Experiment::Radial => "radial",
            Experiment::KgControl => "kg-control",
            Experiment::Pipeline => "pipeline",
            Experiment::S1Control => "s1-control",
            Experiment::Degree => "degree",
            Experiment::NonuniformDecay => "nonuniform-decay",
            Experiment::SmallTime => "small-time",
        }
    }

    /// Output file stem (`damp-decay` becomes `damp_decay`).
    pub fn stem(&self) -> String {
        self.name().replace('-', "_")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| config_err("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Which family the `degree` experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    A,
    A2,
    A3,
}

impl FamilyChoice {
    pub fn params(&self) -> usize {
        match self {
            FamilyChoice::A => 1,
            FamilyChoice::A2 => 2,
            FamilyChoice::A3 => 3,
        }
    }
}

impl fmt::Display for FamilyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyChoice::A => "A",
            FamilyChoice::A2 => "A2",
            FamilyChoice::A3 => "A3",
        })
    }
}

/// A region in config syntax: `full`, `centered:<half-width>` or `arc:<start>:<end>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionSpec {
    Full,
    Centered(f64),
    Arc(f64, f64),
}

impl RegionSpec {
    pub fn region(&self) -> Result<ControlRegion> {
        match *self {
            RegionSpec::Full => Ok(ControlRegion::full()),
            RegionSpec::Centered(h) => ControlRegion::centered(h),
            RegionSpec::Arc(a, b) => ControlRegion::arc(a, b),
        }
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionSpec::Full => write!(f, "full"),
            RegionSpec::Centered(h) => write!(f, "centered:{h}"),
            RegionSpec::Arc(a, b) => write!(f, "arc:{a}:{b}"),
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses a real number, accepting multiples and fractions of `pi`
/// such as `pi/8`, `3pi/4`, `0.75*pi` or `-pi`.
pub fn parse_real(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (t, None),
    };
    let numerator = if let Some(head) = num.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        let coef = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().map_err(|_| format!("cannot parse `{text}` as a number"))?,
        };
        coef * PI
    } else {
        num.parse::<f64>()
            .map_err(|_| format!("cannot parse `{text}` as a number"))?
    };
    let value = match den {
        Some(d) => {
            let d: f64 = d.parse().map_err(|_| format!("cannot parse `{text}` as a number"))?;
            if d == 0.0 {
                return Err(format!("division by zero in `{text}`"));
            }
            numerator / d
        }
        None => numerator,
    };
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(value)
}

fn parse_region(text: &str) -> std::result::Result<RegionSpec, String> {
    let t = text.trim();
    if t == "full" {
        return Ok(RegionSpec::Full);
    }
    if let Some(h) = t.strip_prefix("centered:") {
        return Ok(RegionSpec::Centered(parse_real(h)?));
    }
    if let Some(rest) = t.strip_prefix("arc:") {
        let (a, b) = rest
            .split_once(':')
            .ok_or_else(|| format!("arc needs `arc:<start>:<end>`, got `{t}`"))?;
        return Ok(RegionSpec::Arc(parse_real(a)?, parse_real(b)?));
    }
    Err(format!("expected `full`, `centered:<w>` or `arc:<a>:<b>`, got `{t}`"))
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split_whitespace().map(parse_real).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

/// Every setting of a run. Optional fields print as `auto` and fall back to the
/// experiment's own default.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_points: usize,
    pub dt_ratio: f64,
    pub k: usize,
    pub damping_region: RegionSpec,
    pub damping_amplitude: f64,
    pub control_region: Option<RegionSpec>,
    pub eps: f64,
    pub eps_schedule: Vec<f64>,
    pub duration: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub initial_energy: Option<f64>,
    pub winding: Option<u32>,
    pub theta_final: f64,
    pub family: FamilyChoice,
    pub lattice: Option<usize>,
    pub s: Vec<f64>,
    pub energy_target: f64,
    pub t_max: f64,
    pub samples: usize,
    pub budget: f64,
    pub save_every: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            n_points: 256,
            dt_ratio: if experiment == Experiment::S1Control { 1.0 } else { 0.5 },
            k: if experiment == Experiment::S1Control { 1 } else { 2 },
            damping_region: RegionSpec::Centered(0.75 * PI),
            damping_amplitude: 1.0,
            control_region: None,
            eps: 0.05,
            eps_schedule: vec![0.1, 0.05, 0.025, 0.0125],
            duration: None,
            seed: 42,
            output_dir: PathBuf::from("out"),
            initial_energy: None,
            winding: None,
            theta_final: PI / 2.0,
            family: FamilyChoice::A,
            lattice: None,
            s: vec![0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, 7.0 * PI / 16.0, PI / 2.0],
            energy_target: 0.1,
            t_max: 200.0,
            samples: 100,
            budget: 2000.0,
            save_every: 200,
        }
    }

    /// All keys in echo order.
    pub const KEYS: [&'static str; 23] = [
        "experiment",
        "n_points",
        "dt_ratio",
        "k",
        "damping_region",
        "damping_amplitude",
        "control_region",
        "eps",
        "eps_schedule",
        "duration",
        "seed",
        "output_dir",
        "initial_energy",
        "winding",
        "theta_final",
        "family",
        "lattice",
        "s",
        "energy_target",
        "t_max",
        "samples",
        "budget",
        "save_every",
    ];

    /// Current value of `key` in config syntax.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "experiment" => self.experiment.to_string(),
            "n_points" => self.n_points.to_string(),
            "dt_ratio" => self.dt_ratio.to_string(),
            "k" => self.k.to_string(),
            "damping_region" => self.damping_region.to_string(),
            "damping_amplitude" => self.damping_amplitude.to_string(),
            "control_region" => fmt_opt(&self.control_region),
            "eps" => self.eps.to_string(),
            "eps_schedule" => fmt_list(&self.eps_schedule),
            "duration" => fmt_opt(&self.duration),
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "initial_energy" => fmt_opt(&self.initial_energy),
            "winding" => fmt_opt(&self.winding),
            "theta_final" => self.theta_final.to_string(),
            "family" => self.family.to_string(),
            "lattice" => fmt_opt(&self.lattice),
            "s" => fmt_list(&self.s),
            "energy_target" => self.energy_target.to_string(),
            "t_max" => self.t_max.to_string(),
            "samples" => self.samples.to_string(),
            "budget" => self.budget.to_string(),
            "save_every" => self.save_every.to_string(),
            _ => return None,
        })
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let err = |m: String| config_err(key, m);
        let real = || parse_real(v).map_err(err);
        let uint = || {
            v.parse::<usize>()
                .map_err(|_| config_err(key, format!("expected a nonnegative integer, got `{v}`")))
        };
        let auto = v == "auto";
        match key {
            "experiment" => self.experiment = v.parse()?,
            "n_points" => self.n_points = uint()?,
            "dt_ratio" => self.dt_ratio = real()?,
            "k" => self.k = uint()?,
            "damping_region" => self.damping_region = parse_region(v).map_err(err)?,
            "damping_amplitude" => self.damping_amplitude = real()?,
            "control_region" => {
                self.control_region = if auto { None } else { Some(parse_region(v).map_err(err)?) }
            }
            "eps" => self.eps = real()?,
            "eps_schedule" => self.eps_schedule = parse_list(v).map_err(err)?,
            "duration" => self.duration = if auto { None } else { Some(real()?) },
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| config_err(key, format!("expected an unsigned integer, got `{v}`")))?
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "initial_energy" => self.initial_energy = if auto { None } else { Some(real()?) },
            "winding" => {
                self.winding = if auto {
                    None
                } else {
                    Some(uint()? as u32)
                }
            }
            "theta_final" => self.theta_final = real()?,
            "family" => {
                self.family = match v {
                    "A" => FamilyChoice::A,
                    "A2" => FamilyChoice::A2,
                    "A3" => FamilyChoice::A3,
                    _ => return Err(err(format!("expected A, A2 or A3, got `{v}`"))),
                }
            }
            "lattice" => self.lattice = if auto { None } else { Some(uint()?) },
            "s" => self.s = parse_list(v).map_err(err)?,
            "energy_target" => self.energy_target = real()?,
            "t_max" => self.t_max = real()?,
            "samples" => self.samples = uint()?,
            "budget" => self.budget = real()?,
            "save_every" => self.save_every = uint()?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(assignment, "override must have the form key=value"))?;
        self.set(k.trim(), v)
    }

    /// Parses config text. The `experiment` key may be omitted when
    /// `experiment` is given; if both are present they must agree.
    pub fn parse(text: &str, experiment: Option<Experiment>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let declared = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .map(|(_, v)| v.parse::<Experiment>())
            .transpose()?;
        let exp = match (declared, experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err(
                    "experiment",
                    format!("config declares `{a}` but `{b}` was requested"),
                ))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(config_err("experiment", "missing")),
        };
        let mut cfg = Self::new(exp);
        for (k, v) in &pairs {
            if k != "experiment" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    /// Checks every field against the preconditions of the experiment.
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: String| Err(config_err(f, m));
        if self.n_points < 16 || !self.n_points.is_multiple_of(2) {
            return bad("n_points", format!("must be even and at least 16, got {}", self.n_points));
        }
        if !(self.dt_ratio > 0.0 && self.dt_ratio <= 1.0) {
            return bad("dt_ratio", format!("must lie in (0, 1], got {}", self.dt_ratio));
        }
        let cfl_cap = if self.experiment == Experiment::S1Control { 1.0 } else { 0.5 };
        if self.dt_ratio > cfl_cap {
            return bad("dt_ratio", format!("must not exceed {cfl_cap} for {}", self.experiment));
        }
        if self.k < 1 || self.k > 6 {
            return bad("k", format!("must lie in 1..=6, got {}", self.k));
        }
        let needs_k2 = matches!(
            self.experiment,
            Experiment::Radial | Experiment::NonuniformDecay | Experiment::SmallTime
        );
        if needs_k2 && self.k != 2 {
            return bad("k", format!("{} needs k = 2", self.experiment));
        }
        if self.experiment == Experiment::S1Control && self.k != 1 {
            return bad("k", "s1-control needs k = 1".into());
        }
        if matches!(
            self.experiment,
            Experiment::EnergyDrop | Experiment::KgControl | Experiment::Pipeline | Experiment::HarmonicDetect
        ) && self.k < 2
        {
            return bad("k", format!("{} needs k >= 2", self.experiment));
        }
        self.damping_region
            .region()
            .map_err(|e| config_err("damping_region", e.to_string()))?;
        if let Some(r) = &self.control_region {
            r.region().map_err(|e| config_err("control_region", e.to_string()))?;
        }
        if !(self.damping_amplitude > 0.0) {
            return bad("damping_amplitude", format!("must be positive, got {}", self.damping_amplitude));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps", format!("must lie in (0, 1), got {}", self.eps));
        }
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("eps_schedule", "needs at least one value in (0, 1)".into());
        }
        if let Some(t) = self.duration {
            if !(t > 0.0) {
                return bad("duration", format!("must be positive, got {t}"));
            }
        }
        if let Some(e) = self.initial_energy {
            if !(e > 0.0) {
                return bad("initial_energy", format!("must be positive, got {e}"));
            }
            if self.experiment == Experiment::DampDecay && !(e <= 2.0 * PI) {
                return bad(
                    "initial_energy",
                    format!("damp-decay starts from a family member, so E0 must not exceed 2π, got {e}"),
                );
            }
        }
        if self.experiment == Experiment::DampDecay && self.k < 2 {
            return bad("k", "damp-decay needs k >= 2".into());
        }
        if let Some(n) = self.winding {
            if n == 0 {
                return bad("winding", "must be at least 1".into());
            }
        }
        if !(0.0..PI).contains(&self.theta_final) {
            return bad("theta_final", format!("must lie in [0, π), got {}", self.theta_final));
        }
        if let Some(m) = self.lattice {
            let min = if self.family == FamilyChoice::A { 64 } else { 8 };
            if m < min {
                return bad("lattice", format!("must be at least {min} for family {}", self.family));
            }
        }
        if self.s.is_empty() {
            return bad("s", "needs at least one value".into());
        }
        if !(self.energy_target >= 0.0 && self.energy_target < 2.0 * PI) {
            return bad("energy_target", format!("must lie in [0, 2π), got {}", self.energy_target));
        }
        if !(self.t_max > 0.0) {
            return bad("t_max", format!("must be positive, got {}", self.t_max));
        }
        if self.samples == 0 {
            return bad("samples", "must be positive".into());
        }
        if !(self.budget > 0.0) {
            return bad("budget", format!("must be positive, got {}", self.budget));
        }
        if self.save_every == 0 {
            return bad("save_every", "must be positive".into());
        }
        Ok(())
    }

    /// `key = value` lines for every field.
    pub fn echo(&self) -> Vec<String> {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}", self.get(k).unwrap_or_default()))
            .collect()
    }
}
