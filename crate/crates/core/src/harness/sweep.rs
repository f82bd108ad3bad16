//! Batch runs over one configuration field.

use std::fs;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};

use super::config::ExperimentConfig;
use super::experiments::{run_with, sanitize, RunOutcome};

/// Result of one value of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub outcome: std::result::Result<RunOutcome, String>,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        match &self.outcome {
            Ok(o) if o.ok() => "ok",
            Ok(_) => "violation",
            Err(_) => "error",
        }
    }
}

/// Aggregated sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub param: String,
    pub rows: Vec<SweepRow>,
    pub table: PathBuf,
    /// Written only when some value failed.
    pub failure_report: Option<PathBuf>,
}

impl SweepOutcome {
    /// Values whose run errored or violated an invariant.
    pub fn failed_values(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.status() != "ok")
            .map(|r| r.value.as_str())
            .collect()
    }
}

/// Runs `base` once per value of `param`, each in its own subdirectory of
/// `base.output_dir`, and writes `sweep_<param>.csv` there. All configs are
/// validated before any run starts. Unless `param` is `seed`, run `i` uses
/// seed `base.seed + i`.
pub fn sweep(base: &ExperimentConfig, param: &str, values: &[String], mode: ExecMode) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Config {
            field: "values".into(),
            message: "sweep needs at least one value".into(),
        });
    }
    if base.get(param).is_none() || param == "output_dir" || param == "experiment" {
        return Err(Error::Config {
            field: "param".into(),
            message: format!("`{param}` is not a sweepable field"),
        });
    }
    let mut configs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut c = base.clone();
        c.set(param, v)?;
        if param != "seed" {
            c.seed = base.seed.wrapping_add(i as u64);
        }
        c.output_dir = base
            .output_dir
            .join(format!("{}-{i:02}-{}", sanitize(param), sanitize(v)));
        c.validate()?;
        configs.push(c);
    }
    fs::create_dir_all(&base.output_dir)?;
    let outcomes = map_ordered(mode, &configs, |c| {
        run_with(c, ExecMode::Sequential).map_err(|e| e.to_string())
    });
    let rows: Vec<SweepRow> = values
        .iter()
        .cloned()
        .zip(outcomes)
        .map(|(value, outcome)| SweepRow { value, outcome })
        .collect();

    let mut keys: Vec<String> = Vec::new();
    for r in &rows {
        if let Ok(o) = &r.outcome {
            for (k, _) in &o.summary {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
    }
    let mut lines: Vec<String> = vec![format!("# wavemaps sweep {}", base.experiment)];
    lines.extend(base.echo().into_iter().map(|l| format!("# {l}")));
    lines.push(format!("# param = {param}"));
    lines.push(format!("# values = {}", values.join(" ")));
    let mut head = vec![param.to_string(), "status".to_string()];
    head.extend(keys.iter().cloned());
    lines.push(head.join(","));
    for r in &rows {
        let mut cols = vec![r.value.clone(), r.status().to_string()];
        for k in &keys {
            let v = r
                .outcome
                .as_ref()
                .ok()
                .and_then(|o| o.value(k))
                .unwrap_or("")
                .replace(',', ";");
            cols.push(v);
        }
        lines.push(cols.join(","));
    }
    let table = base.output_dir.join(format!("sweep_{}.csv", sanitize(param)));
    fs::write(&table, lines.join("\n") + "\n")?;

    let failed: Vec<String> = rows
        .iter()
        .filter(|r| r.status() != "ok")
        .map(|r| match &r.outcome {
            Err(e) => format!("{} = {}: error: {e}", param, r.value),
            Ok(o) => format!("{} = {}: violation: {}", param, r.value, o.violations.join("; ")),
        })
        .collect();
    let failure_report = if failed.is_empty() {
        None
    } else {
        let p = base.output_dir.join(format!("sweep_{}_failures.txt", sanitize(param)));
        fs::write(&p, failed.join("\n") + "\n")?;
        Some(p)
    };
    Ok(SweepOutcome {
        param: param.to_string(),
        rows,
        table,
        failure_report,
    })
}
