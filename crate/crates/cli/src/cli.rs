//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use abc_smc2::models::{simulate_hawkes, simulate_skew_normal, simulate_sv, ExampleModel};
use clap::{Parser, Subcommand};
use log::error;

use crate::config::{load_config, DataSource, ModelSettings};
use crate::data::{write_data, write_truth};
use crate::infer::{infer_to_dir, with_threads};
use crate::output::{Table, DIAGNOSTICS_FILE, FILTERING_FILE, POSTERIOR_FILE, THRESHOLDS_FILE};
use crate::validate::{find_suite, run_suite, SUITES};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "abcsmc2", version, about = "Self-calibrated ABC-SMC2 inference for state space models")]
pub struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate observations and latent truth from an example model.
    Simulate {
        /// skew_normal, sv or hawkes (default constants), unless --config is given.
        #[arg(long, required_unless_present = "config")]
        model: Option<String>,
        /// Parameter values, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "config")]
        params: Vec<f64>,
        #[arg(long, required_unless_present = "config")]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        obs_per_step: usize,
        /// Take the model, constants, true parameters, horizon and data seed from a run configuration.
        #[arg(long, conflicts_with_all = ["model", "params", "horizon"])]
        config: Option<PathBuf>,
        /// Directory for data.csv and truth.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run inference from a configuration file.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock time per step in the manifest.
        #[arg(long)]
        timings: bool,
    },
    /// Run validation suites, printing one JSON record per check.
    Validate {
        /// Suite to run (repeatable); `all` runs every suite. Default: the quick suites.
        #[arg(long)]
        suite: Vec<String>,
        /// List the suites and exit.
        #[arg(long)]
        list: bool,
    },
    /// Rewrite a run directory as one long-format table for plotting.
    PlotData {
        /// Output directory of an `infer` run.
        #[arg(long)]
        run: PathBuf,
        /// Destination CSV (default: <run>/plot_data.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { model, params, horizon, seed, obs_per_step, config, out } => {
            simulate(model, params, horizon, seed, obs_per_step, config, &out)
        }
        Command::Infer { config, out, timings } => {
            let summary = infer_to_dir(&config, &out, cli.threads, timings, None)?;
            println!("wrote {} steps to {}", summary.thresholds.len(), out.display());
            Ok(())
        }
        Command::Validate { suite, list } => {
            if list {
                for s in SUITES {
                    println!("{:<18}{}{}", s.name, s.about, if s.default { "" } else { " (not in default set)" });
                }
                return Ok(());
            }
            validate(&suite, cli.threads)
        }
        Command::PlotData { run, out } => {
            let out = out.unwrap_or_else(|| run.join("plot_data.csv"));
            fs::write(&out, plot_data(&run)?).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
            Ok(())
        }
    }
}

fn simulate(
    model: Option<String>,
    params: Vec<f64>,
    horizon: Option<usize>,
    seed: u64,
    obs_per_step: usize,
    config: Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    let ds = match config {
        Some(path) => {
            let cfg = load_config(&path)?;
            let DataSource::Simulate { params, seed } = &cfg.data else {
                return Err(CliError::Config("the configuration reads its data from a file".into()));
            };
            let horizon = cfg.run.horizon;
            match &cfg.model {
                ModelSettings::SkewNormal { obs_per_step, .. } => simulate_skew_normal(params, *obs_per_step, horizon, *seed)?,
                ModelSettings::Sv { known, .. } => simulate_sv(known, params, horizon, *seed)?,
                ModelSettings::Hawkes { known, .. } => simulate_hawkes(known, params, horizon, *seed)?,
            }
        }
        None => {
            let name = model.expect("required by the parser");
            let horizon = horizon.expect("required by the parser");
            let kind = ExampleModel::parse(&name)?;
            let names = kind.param_names();
            if params.len() != names.len() {
                return Err(CliError::Config(format!("{name} takes parameters {}", names.join(","))));
            }
            match kind {
                ExampleModel::SkewNormal => simulate_skew_normal(&params, obs_per_step, horizon, seed),
                _ => abc_smc2::models::simulate_dataset(&name, &params, horizon, seed),
            }
            .map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_data(&out.join("data.csv"), &ds.data)?;
    write_truth(&out.join("truth.csv"), &ds.truth)?;
    Ok(())
}

fn validate(names: &[String], threads: Option<usize>) -> Result<(), CliError> {
    let suites: Vec<_> = if names.is_empty() {
        SUITES.iter().filter(|s| s.default).collect()
    } else if names.iter().any(|n| n == "all") {
        SUITES.iter().collect()
    } else {
        names.iter().map(|n| find_suite(n)).collect::<Result<_, _>>()?
    };
    let mut failed = Vec::new();
    for suite in suites {
        let records = with_threads(threads, || run_suite(suite))?;
        for r in &records {
            println!("{}", r.to_json());
            if !r.pass {
                failed.push(format!("{}/{}", r.suite, r.check));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}

/// Long format `table,t,series,value` over every artifact of a run.
pub fn plot_data(run: &Path) -> Result<String, CliError> {
    let mut out = String::from("table,t,series,value\n");
    for (file, table, index) in [
        (THRESHOLDS_FILE, "thresholds", "t"),
        (FILTERING_FILE, "filtering", "t"),
        (DIAGNOSTICS_FILE, "diagnostics", "t"),
        (POSTERIOR_FILE, "posterior", "m"),
    ] {
        let t = Table::read(&run.join(file))?;
        let key = t.header.iter().position(|h| h == index).ok_or_else(|| CliError::Runtime(format!("{file}: no {index} column")))?;
        for row in &t.rows {
            for (i, (h, v)) in t.header.iter().zip(row).enumerate() {
                if i != key && !v.is_empty() {
                    out.push_str(&format!("{table},{},{h},{v}\n", row[key]));
                }
            }
        }
    }
    Ok(out)
}
