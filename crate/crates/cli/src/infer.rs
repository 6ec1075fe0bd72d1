//! Running the engine on a configured example model.

use std::path::Path;
use std::time::{Duration, Instant};

use abc_smc2::models::hawkes::hawkes_pilot;
use abc_smc2::models::hawkes::fit_regression_adjustment;
use abc_smc2::models::skew_normal::pilot_summary_weights;
use abc_smc2::models::{
    simulate_hawkes, simulate_skew_normal, simulate_sv, HawkesModel, SimulatedData, SkewNormalSsm, StableVolModel,
};
use abc_smc2::{filtering_quantiles, EngineOptions, Model, RunConfig, Smc2, StepDiagnostics};
use log::info;
use toml::Value;

use crate::config::{DataSource, LoadedConfig, ModelSettings};
use crate::{data, output, CliError};

pub const FILTER_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub model: String,
    pub param_names: Vec<String>,
    pub thetas: Vec<Vec<f64>>,
    /// Normalized theta weights.
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Per-step 2.5%, 50% and 97.5% filtering quantiles.
    pub filtering: Vec<[f64; 3]>,
    pub truth: Option<Vec<f64>>,
    pub step_seconds: Vec<f64>,
    /// Model constants after defaults and pilot runs were applied.
    pub resolved: toml::Table,
    pub log_evidence: f64,
}

impl RunSummary {
    /// Weighted `q`-quantile of parameter `k`.
    pub fn credible_quantile(&self, k: usize, q: f64) -> f64 {
        let mut pairs: Vec<(f64, f64)> = self.thetas.iter().map(|t| t[k]).zip(self.weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for &(v, w) in &pairs {
            acc += w;
            if acc >= q {
                return v;
            }
        }
        pairs.last().map_or(f64::NAN, |p| p.0)
    }

    /// Steps whose truth lies inside the 95% filtering interval.
    pub fn truth_coverage(&self) -> Option<usize> {
        let truth = self.truth.as_ref()?;
        Some(self.filtering.iter().zip(truth).filter(|(q, x)| q[0] <= **x && **x <= q[2]).count())
    }
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn table(entries: Vec<(&str, Value)>) -> toml::Table {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Run the engine step by step, summarizing each step's filtering
/// distribution. Stops with a runtime error once `deadline` has passed.
pub fn run_model<M: Model>(
    model: &M,
    cfg: &RunConfig,
    opts: EngineOptions,
    observations: &[M::Data],
    truth: Option<Vec<f64>>,
    resolved: toml::Table,
    deadline: Option<Instant>,
) -> Result<RunSummary, CliError> {
    let engine = Smc2::new(model, cfg.clone(), opts)?;
    let horizon = cfg.horizon;
    if observations.len() < horizon {
        return Err(CliError::Config(format!("{} observations for horizon {horizon}", observations.len())));
    }
    let mut filtering = Vec::with_capacity(horizon);
    let mut step_seconds = Vec::with_capacity(horizon);
    let mut clock = Instant::now();
    let mut cloud = engine.init_step(observations)?;
    loop {
        let q = filtering_quantiles(model, &cloud, &FILTER_PROBS)?;
        filtering.push([q[0], q[1], q[2]]);
        step_seconds.push(clock.elapsed().as_secs_f64());
        let d = cloud.diagnostics.last().expect("one diagnostic per step");
        info!(
            "t={} eps={:.4e} ess={:.1} rejuvenated={} live={}",
            d.t, d.epsilon, d.ess, d.rejuvenated, d.live_particles
        );
        if cloud.t >= horizon {
            break;
        }
        if deadline.is_some_and(|dl| Instant::now() > dl) {
            return Err(CliError::Runtime(format!("time budget exhausted after step {}", cloud.t)));
        }
        clock = Instant::now();
        cloud = engine.update_step(cloud, observations)?;
    }
    let truth = truth.map(|mut t| {
        t.truncate(horizon);
        t
    });
    Ok(RunSummary {
        model: model.name().to_string(),
        param_names: model.param_names(),
        thetas: cloud.particles.iter().map(|p| p.theta.clone()).collect(),
        weights: cloud.normalized_weights(),
        thresholds: cloud.thresholds.as_slice().to_vec(),
        diagnostics: cloud.diagnostics.clone(),
        filtering,
        truth,
        step_seconds,
        resolved,
        log_evidence: cloud.log_evidence,
    })
}

/// Build the configured model, load or simulate its data, and run it.
pub fn infer(cfg: &LoadedConfig, deadline: Option<Instant>) -> Result<RunSummary, CliError> {
    let opts = EngineOptions { rejuvenation: cfg.rejuvenation, ..EngineOptions::default() };
    let horizon = cfg.run.horizon;
    let file_truth = |truth: &Option<std::path::PathBuf>| -> Result<Option<Vec<f64>>, CliError> {
        truth.as_deref().map(|p| data::read_truth(p, horizon)).transpose()
    };
    match &cfg.model {
        &ModelSettings::SkewNormal { obs_per_step, kernel_c, pilot_size, pilot_seed, summary_weights } => {
            let weights = match summary_weights {
                Some(w) => w,
                None => pilot_summary_weights(obs_per_step, pilot_size, pilot_seed)?,
            };
            let model = SkewNormalSsm::new(obs_per_step, weights, kernel_c)?;
            let resolved = table(vec![
                ("obs_per_step", Value::Integer(obs_per_step as i64)),
                ("kernel_c", Value::Float(kernel_c)),
                ("summary_weights", floats(&weights)),
            ]);
            let (obs, truth) = match &cfg.data {
                DataSource::File { data, truth } => {
                    (data::read_skew_normal(data, obs_per_step, horizon)?, file_truth(truth)?)
                }
                DataSource::Simulate { params, seed } => {
                    let ds = simulate_skew_normal(params, obs_per_step, horizon, *seed)?;
                    match ds.data {
                        SimulatedData::SkewNormal(d) => (d, Some(ds.truth)),
                        _ => unreachable!(),
                    }
                }
            };
            run_model(&model, &cfg.run, opts, &obs, truth, resolved, deadline)
        }
        ModelSettings::Sv { known, kernel_c } => {
            let model = StableVolModel::new(*known, *kernel_c)?;
            let s = known.stable;
            let resolved = table(vec![
                ("mu", Value::Float(known.mu)),
                ("sigma_h", Value::Float(known.sigma_h)),
                ("alpha", Value::Float(s.alpha)),
                ("beta", Value::Float(s.beta)),
                ("gamma", Value::Float(s.gamma)),
                ("delta", Value::Float(s.delta)),
                ("kernel_c", Value::Float(*kernel_c)),
                ("grid_eligible", Value::Boolean(cfg.grid_eligible)),
            ]);
            let (obs, truth) = match &cfg.data {
                DataSource::File { data, truth } => (data::read_sv(data, horizon)?, file_truth(truth)?),
                DataSource::Simulate { params, seed } => {
                    let ds = simulate_sv(known, params, horizon, *seed)?;
                    match ds.data {
                        SimulatedData::StochasticVolatility(d) => (d, Some(ds.truth)),
                        _ => unreachable!(),
                    }
                }
            };
            run_model(&model, &cfg.run, opts, &obs, truth, resolved, deadline)
        }
        ModelSettings::Hawkes { known, kernel_c, pilot_size, pilot_seed } => {
            let maps = fit_regression_adjustment(&hawkes_pilot(known, *pilot_size, *pilot_seed))?;
            let model = HawkesModel::new(*known, *kernel_c, maps.clone())?;
            let coefficients = ["theta1", "theta2", "ell"]
                .iter()
                .zip(&maps.coefficients)
                .map(|(name, c)| (name.to_string(), floats(c)))
                .collect();
            let resolved = table(vec![
                ("theta0", Value::Float(known.theta0)),
                ("sigma_l", Value::Float(known.sigma_l)),
                ("phi", Value::Float(known.phi)),
                ("interval", Value::Float(known.interval)),
                ("kernel_c", Value::Float(*kernel_c)),
                ("regression", Value::Table(coefficients)),
            ]);
            let (obs, truth) = match &cfg.data {
                DataSource::File { data, truth } => (data::read_hawkes(data, known, horizon)?, file_truth(truth)?),
                DataSource::Simulate { params, seed } => {
                    let ds = simulate_hawkes(known, params, horizon, *seed)?;
                    match ds.data {
                        SimulatedData::Hawkes(d) => (d, Some(ds.truth)),
                        _ => unreachable!(),
                    }
                }
            };
            run_model(&model, &cfg.run, opts, &obs, truth, resolved, deadline)
        }
    }
}

/// Run `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// The `infer` subcommand.
pub fn infer_to_dir(
    config: &Path,
    out: &Path,
    threads: Option<usize>,
    timings: bool,
    budget: Option<Duration>,
) -> Result<RunSummary, CliError> {
    let cfg = crate::config::load_config(config)?;
    let deadline = budget.map(|b| Instant::now() + b);
    let summary = with_threads(threads, || infer(&cfg, deadline))??;
    output::persist_outputs(&summary, &cfg.snapshot, cfg.run.seed, out, timings)?;
    Ok(summary)
}
