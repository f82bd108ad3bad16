use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wavemaps::harness::{exit_code, run, sweep, Experiment, ExperimentConfig};
use wavemaps::{Error, ExecMode, Result};

/// Runs a named wave maps experiment or a sweep over one configuration field.
///
/// Experiments: damp-decay, harmonic-detect, energy-drop, radial, kg-control,
/// pipeline, s1-control, degree, nonuniform-decay, small-time.
///
/// Exit status: 0 on success, 1 on an invariant violation or failed run,
/// 2 on a configuration error.
#[derive(Debug, Parser)]
#[command(name = "wavemaps", version)]
struct Cli {
    /// Experiment name, or `sweep`.
    target: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Field to vary (sweep only).
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values for the swept field (sweep only).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    values: Vec<String>,
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn load(cli: &Cli, experiment: Option<Experiment>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_error("config", format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text, experiment)?
        }
        None => match experiment {
            Some(e) => ExperimentConfig::new(e),
            None => return Err(config_error("config", "sweep needs --config")),
        },
    };
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &[(String, String)]) {
    for (k, v) in summary {
        println!("{k} = {v}");
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    if cli.target == "sweep" {
        let cfg = load(cli, None)?;
        let param = cli
            .param
            .as_deref()
            .ok_or_else(|| config_error("param", "sweep needs --param"))?;
        let out = sweep(&cfg, param, &cli.values, ExecMode::default())?;
        for row in &out.rows {
            println!("{param} = {}: {}", row.value, row.status());
        }
        println!("table = {}", out.table.display());
        if let Some(p) = &out.failure_report {
            eprintln!("failed values: {}", out.failed_values().join(", "));
            eprintln!("failure report = {}", p.display());
        }
        return Ok(out.failure_report.is_none());
    }
    if cli.param.is_some() || !cli.values.is_empty() {
        return Err(config_error("param", "--param and --values are only valid for sweep"));
    }
    let experiment: Experiment = cli.target.parse()?;
    let cfg = load(cli, Some(experiment))?;
    let outcome = run(&cfg)?;
    print_summary(&outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for v in &outcome.violations {
        eprintln!("invariant violation: {v}");
    }
    Ok(outcome.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
