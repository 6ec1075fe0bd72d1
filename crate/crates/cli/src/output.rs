//! Run artifacts: CSV tables and the TOML manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use abc_smc2::StepDiagnostics;
use serde::Serialize;

use crate::infer::RunSummary;
use crate::CliError;

pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const POSTERIOR_FILE: &str = "theta_posterior.csv";
pub const FILTERING_FILE: &str = "filtering.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_atomic(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    fs::write(&tmp, text).map_err(|e| CliError::Runtime(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, &dest).map_err(|e| CliError::Runtime(format!("{}: {e}", dest.display())))?;
    Ok(())
}

pub fn thresholds_csv(eps: &[f64]) -> String {
    let mut s = String::from("t,epsilon\n");
    for (i, e) in eps.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt_real(*e)));
    }
    s
}

pub fn posterior_csv(names: &[String], thetas: &[Vec<f64>], weights: &[f64]) -> String {
    let mut s = format!("m,{},weight\n", names.join(","));
    for (m, (theta, w)) in thetas.iter().zip(weights).enumerate() {
        s.push_str(&(m + 1).to_string());
        for v in theta {
            s.push(',');
            s.push_str(&fmt_real(*v));
        }
        s.push(',');
        s.push_str(&fmt_real(*w));
        s.push('\n');
    }
    s
}

pub fn filtering_csv(quantiles: &[[f64; 3]], truth: Option<&[f64]>) -> String {
    let mut s = String::from(if truth.is_some() { "t,q025,q500,q975,truth\n" } else { "t,q025,q500,q975\n" });
    for (i, q) in quantiles.iter().enumerate() {
        s.push_str(&format!("{},{},{},{}", i + 1, fmt_real(q[0]), fmt_real(q[1]), fmt_real(q[2])));
        if let Some(x) = truth {
            s.push(',');
            s.push_str(&fmt_real(x[i]));
        }
        s.push('\n');
    }
    s
}

pub fn diagnostics_csv(diag: &[StepDiagnostics]) -> String {
    let mut s = String::from("t,ess,epsilon,rejuvenated,mh_accept_rate\n");
    for d in diag {
        let rate = d.mh_accept_rate.map(fmt_real).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", d.t, fmt_real(d.ess), fmt_real(d.epsilon), d.rejuvenated, rate));
    }
    s
}

#[derive(Serialize)]
struct ManifestStep {
    t: usize,
    epsilon: f64,
    ess: f64,
    rejuvenated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    mh_accept_rate: Option<f64>,
    live_particles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    software_version: &'static str,
    model: &'a str,
    seed: u64,
    log_evidence: f64,
    thresholds: &'a [f64],
    config: &'a BTreeMap<String, toml::Value>,
    resolved: &'a toml::Table,
    steps: Vec<ManifestStep>,
}

pub fn manifest_toml(
    summary: &RunSummary,
    config: &BTreeMap<String, toml::Value>,
    seed: u64,
    timings: bool,
) -> Result<String, CliError> {
    let steps = summary
        .diagnostics
        .iter()
        .enumerate()
        .map(|(i, d)| ManifestStep {
            t: d.t,
            epsilon: d.epsilon,
            ess: d.ess,
            rejuvenated: d.rejuvenated,
            mh_accept_rate: d.mh_accept_rate,
            live_particles: d.live_particles,
            wall_seconds: timings.then(|| summary.step_seconds.get(i).copied().unwrap_or(f64::NAN)),
        })
        .collect();
    let manifest = Manifest {
        software_version: env!("CARGO_PKG_VERSION"),
        model: &summary.model,
        seed,
        log_evidence: summary.log_evidence,
        thresholds: &summary.thresholds,
        config,
        resolved: &summary.resolved,
        steps,
    };
    toml::to_string(&manifest).map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))
}

/// Write every artifact of a finished run into `dir`, creating it if needed.
/// The manifest is written last.
pub fn persist_outputs(
    summary: &RunSummary,
    config: &BTreeMap<String, toml::Value>,
    seed: u64,
    dir: &Path,
    timings: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    write_atomic(dir, THRESHOLDS_FILE, &thresholds_csv(&summary.thresholds))?;
    write_atomic(dir, POSTERIOR_FILE, &posterior_csv(&summary.param_names, &summary.thetas, &summary.weights))?;
    write_atomic(dir, FILTERING_FILE, &filtering_csv(&summary.filtering, summary.truth.as_deref()))?;
    write_atomic(dir, DIAGNOSTICS_FILE, &diagnostics_csv(&summary.diagnostics))?;
    write_atomic(dir, MANIFEST_FILE, &manifest_toml(summary, config, seed, timings)?)?;
    Ok(())
}

/// A CSV artifact read back as a header and rows of raw fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Runtime(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| r[i].parse().map_err(|e| CliError::Runtime(format!("column {name}: {e}"))))
            .collect()
    }
}

pub fn read_thresholds(path: &Path) -> Result<Vec<f64>, CliError> {
    Table::read(path)?.column("epsilon")
}
