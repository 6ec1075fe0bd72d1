//! Validation suites: each check compares the engine or a sampler with an
//! independent reference and yields a pass/fail record.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use abc_smc2::distributions::{normal_cdf, sample_stable, StableParams};
use abc_smc2::models::hawkes::{simulate_hawkes_interval, simulate_series};
use abc_smc2::models::{HawkesKnown, SimulatedData, SkewNormalSsm, SvKnown};
use abc_smc2::oracle::compensator::{hawkes_compensator, HawkesRates};
use abc_smc2::oracle::grid::{grid_reference_posterior, uniform_grid};
use abc_smc2::oracle::ks::{ks_statistic, ks_two_sample};
use abc_smc2::oracle::toy::DiscreteToySsm;
use abc_smc2::oracle::EstimatorTriple;
use abc_smc2::particle::{acceptance_fraction, ess, multinomial_resample, weighted_quantile_threshold};
use abc_smc2::{CalibrationRecord, EngineOptions, Model, Purpose, RunConfig, Smc2, StreamFactory, ThetaCloud};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::parse_config;
use crate::infer::{infer, infer_to_dir, RunSummary};
use crate::CliError;

/// Outcome of one check, printed as a JSON line.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub check: String,
    pub pass: bool,
    pub statistic: f64,
    /// The condition `statistic` had to meet.
    pub criterion: String,
    pub detail: String,
    pub seconds: f64,
}

impl CheckRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

pub struct Suite {
    pub name: &'static str,
    pub about: &'static str,
    /// Included when no suite is named.
    pub default: bool,
    pub budget: Duration,
    run: fn(Instant) -> Vec<CheckRecord>,
}

pub const SUITES: &[Suite] = &[
    Suite { name: "calibration", about: "threshold calibration coverage", default: true, budget: mins(1), run: calibration },
    Suite { name: "toy-enumeration", about: "two exact routes to the toy target agree", default: true, budget: mins(1), run: toy_enumeration },
    Suite { name: "unbiasedness", about: "unnormalized estimator mean on the toy model", default: true, budget: mins(5), run: unbiasedness },
    Suite { name: "consistency", about: "estimator error shrinks with N_theta", default: true, budget: mins(10), run: consistency },
    Suite { name: "stable", about: "stable sampler against closed forms", default: true, budget: mins(1), run: stable },
    Suite { name: "hawkes-sim", about: "Hawkes simulator time rescaling", default: true, budget: mins(5), run: hawkes_sim },
    Suite { name: "rejuvenation", about: "rejuvenation resets weights and keeps the posterior", default: true, budget: mins(10), run: rejuvenation },
    Suite { name: "skew-normal", about: "skew-normal example recovers the truth", default: false, budget: mins(15), run: skew_normal_example },
    Suite { name: "sv-grid", about: "Gaussian SV posterior against a grid reference", default: false, budget: mins(20), run: sv_grid },
    Suite { name: "hawkes-inference", about: "Hawkes example recovers the truth", default: false, budget: mins(30), run: hawkes_inference },
    Suite { name: "determinism", about: "repeated runs give identical artifacts", default: false, budget: mins(20), run: determinism },
];

const fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

pub fn find_suite(name: &str) -> Result<&'static Suite, CliError> {
    SUITES.iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<_> = SUITES.iter().map(|s| s.name).collect();
        CliError::Config(format!("unknown suite `{name}` (expected one of: {}, all)", names.join(", ")))
    })
}

/// Run a suite. A suite that overruns its budget gets a failing `runtime`
/// record.
pub fn run_suite(suite: &Suite) -> Vec<CheckRecord> {
    let start = Instant::now();
    let mut records = (suite.run)(start + suite.budget);
    let elapsed = start.elapsed();
    records.push(CheckRecord {
        suite: suite.name.into(),
        check: "runtime".into(),
        pass: elapsed <= suite.budget,
        statistic: elapsed.as_secs_f64(),
        criterion: format!("<= {} s", suite.budget.as_secs()),
        detail: String::new(),
        seconds: elapsed.as_secs_f64(),
    });
    records
}

struct Recorder {
    suite: &'static str,
    clock: Instant,
    out: Vec<CheckRecord>,
}

impl Recorder {
    fn new(suite: &'static str) -> Self {
        Self { suite, clock: Instant::now(), out: Vec::new() }
    }

    fn check(&mut self, check: impl Into<String>, pass: bool, statistic: f64, criterion: impl Into<String>, detail: impl Into<String>) {
        self.out.push(CheckRecord {
            suite: self.suite.into(),
            check: check.into(),
            pass,
            statistic,
            criterion: criterion.into(),
            detail: detail.into(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    fn error(&mut self, check: impl Into<String>, e: impl std::fmt::Display) {
        self.check(check, false, f64::NAN, "completes", e.to_string());
    }

    fn finish(self) -> Vec<CheckRecord> {
        self.out
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// Calibration

/// Smallest candidate distance whose weighted acceptance fraction reaches
/// `p`, trying every record distance in turn.
fn brute_force_threshold(records: &[CalibrationRecord], p: f64) -> f64 {
    let mut candidates: Vec<f64> = records.iter().map(|r| r.distance).collect();
    candidates.sort_by(f64::total_cmp);
    let total: f64 = records.iter().map(|r| r.weight).sum();
    candidates
        .into_iter()
        .find(|&d| records.iter().filter(|r| r.distance <= d).map(|r| r.weight).sum::<f64>() / total >= p)
        .unwrap_or(f64::NAN)
}

/// `(holds, detail)` for the coverage condition at every recorded step.
pub fn coverage_holds(log: &[Vec<CalibrationRecord>], eps: &[f64], p_acc: f64) -> (bool, String) {
    for (t, (records, &e)) in log.iter().zip(eps).enumerate() {
        let at = acceptance_fraction(records, e);
        if !(at >= p_acc) {
            return (false, format!("t={}: fraction {at} at eps {e}", t + 1));
        }
        let below = records.iter().map(|r| r.distance).filter(|&d| d < e).fold(f64::NEG_INFINITY, f64::max);
        if below.is_finite() {
            let f = acceptance_fraction(records, below);
            if !(f < p_acc) {
                return (false, format!("t={}: fraction {f} at next smaller distance {below}", t + 1));
            }
        }
    }
    (true, format!("{} steps", log.len()))
}

fn coverage_run<M: Model>(rec: &mut Recorder, name: &str, model: &M, cfg: RunConfig, y: &[M::Data]) {
    let opts = EngineOptions { keep_calibration_records: true, ..EngineOptions::default() };
    let p_acc = cfg.p_acc;
    match Smc2::new(model, cfg, opts).and_then(|e| e.run(y, |_| {})) {
        Ok(cloud) => {
            let (ok, detail) = coverage_holds(&cloud.calibration_log, cloud.thresholds.as_slice(), p_acc);
            let steps = cloud.calibration_log.len() as f64;
            rec.check(format!("coverage_{name}"), ok, steps, format!("fraction >= {p_acc} at eps, < {p_acc} below"), detail);
        }
        Err(e) => rec.error(format!("coverage_{name}"), e),
    }
}

fn calibration(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("calibration");
    let mut rng = StreamFactory::new(11).stream(Purpose::Validation, &[0]);
    let mut mismatches = 0;
    let mut first = String::new();
    for i in 0..1000 {
        let n = rng.gen_range(1..60);
        // Coarse distances so ties are common.
        let anchor = CalibrationRecord::new(rng.gen::<f64>(), 0.5);
        let records: Vec<CalibrationRecord> = (0..n)
            .map(|_| {
                let d = if rng.gen_bool(0.5) { rng.gen_range(0..8) as f64 } else { rng.gen::<f64>() * 8.0 };
                let w = if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() };
                CalibrationRecord::new(d, w)
            })
            .chain(std::iter::once(anchor))
            .collect();
        let p = if rng.gen_bool(0.1) { 1.0 } else { rng.gen_range(0.001..1.0) };
        let fast = weighted_quantile_threshold(&records, p).unwrap_or(f64::NAN);
        let slow = brute_force_threshold(&records, p);
        if fast.to_bits() != slow.to_bits() {
            mismatches += 1;
            if first.is_empty() {
                first = format!("instance {i}: {fast} vs {slow}");
            }
        }
    }
    rec.check("quantile_vs_brute_force", mismatches == 0, mismatches as f64, "== 0 mismatches in 1000", first);

    let cfg = |n_theta, n_x, n_y, p_acc, horizon| RunConfig { n_theta, n_x, n_y, p_acc, ess_fraction: 0.5, seed: 5, horizon };
    match abc_smc2::models::simulate_skew_normal(&[0.25, 2.0], 100, 5, 1) {
        Ok(ds) => {
            if let (SimulatedData::SkewNormal(y), Ok(model)) = (ds.data, SkewNormalSsm::new(100, [1.0; 3], 1.0)) {
                coverage_run(&mut rec, "skew_normal", &model, cfg(60, 30, 10, 0.05, 5), &y);
            }
        }
        Err(e) => rec.error("coverage_skew_normal", e),
    }
    let known = SvKnown::default();
    match (abc_smc2::models::simulate_sv(&known, &[0.7], 10, 1), abc_smc2::models::StableVolModel::new(known, 0.1)) {
        (Ok(ds), Ok(model)) => {
            if let SimulatedData::StochasticVolatility(y) = ds.data {
                coverage_run(&mut rec, "sv", &model, cfg(100, 30, 10, 0.05, 10), &y);
            }
        }
        (Err(e), _) | (_, Err(e)) => rec.error("coverage_sv", e),
    }
    let known = HawkesKnown::default();
    match (
        abc_smc2::models::simulate_hawkes(&known, &[0.5, 0.5], 10, 1),
        abc_smc2::models::HawkesModel::with_pilot(known, 0.1, 500, 2),
    ) {
        (Ok(ds), Ok(model)) => {
            if let SimulatedData::Hawkes(y) = ds.data {
                coverage_run(&mut rec, "hawkes", &model, cfg(200, 10, 1, 0.05, 10), &y);
            }
        }
        (Err(e), _) | (_, Err(e)) => rec.error("coverage_hawkes", e),
    }
    rec.finish()
}

// Toy model checks

const TOY_Y: [usize; 2] = [0, 2];
const TOY_EPS: [f64; 2] = [0.0, 1.0];

/// Bounded test functions of `(x_t, k)`.
fn toy_phis() -> [(&'static str, fn(usize, usize) -> f64); 3] {
    [
        ("x_is_0", |x, _| (x == 0) as u8 as f64),
        ("k", |_, k| k as f64),
        ("mixed", |x, k| 0.5 * x as f64 - 0.3 * k as f64 + 0.1),
    ]
}

fn toy_run(toy: &DiscreteToySsm, n_theta: usize, seed: u64) -> abc_smc2::Result<ThetaCloud<usize>> {
    let cfg = RunConfig { n_theta, n_x: 2, n_y: 2, p_acc: 0.5, ess_fraction: 0.5, seed, horizon: TOY_Y.len() };
    let opts = EngineOptions { rejuvenation: false, fixed_thresholds: Some(TOY_EPS.to_vec()), keep_calibration_records: false };
    Smc2::new(toy, cfg, opts)?.run(&TOY_Y, |_| {})
}

fn toy_enumeration(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("toy-enumeration");
    let toy = DiscreteToySsm::example();
    let cases: [(&[usize], &[f64]); 4] =
        [(&[0], &[0.0]), (&TOY_Y, &TOY_EPS), (&[1, 0, 2], &[1.0, 0.0, 1.0]), (&[2, 2, 1, 0], &[0.0, 1.0, 1.0, 2.0])];
    for (y, eps) in cases {
        for (name, phi) in toy_phis() {
            let check = format!("y={y:?}_{name}");
            match toy.enumerate_target(y, eps, phi) {
                Ok((a, b)) => {
                    let (c, d) = toy.recursive_target(y, eps, phi);
                    let diff = (a - c).abs().max((b - d).abs());
                    rec.check(check, diff <= 1e-12, diff, "<= 1e-12", "");
                }
                Err(e) => rec.error(check, e),
            }
        }
    }
    rec.finish()
}

fn unbiasedness(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("unbiasedness");
    let toy = DiscreteToySsm::example_with_proposals();
    let runs = 10_000;
    let clouds: Vec<_> = (0..runs).into_par_iter().map(|r| toy_run(&toy, 2, 1_000 + r as u64)).collect();
    for (name, phi) in toy_phis() {
        let exact = match toy.enumerate_target(&TOY_Y, &TOY_EPS, phi) {
            Ok((num, _)) => num,
            Err(e) => {
                rec.error(name, e);
                continue;
            }
        };
        let estimates: Vec<f64> = clouds
            .iter()
            .map(|c| match c {
                Ok(cloud) => EstimatorTriple::from_cloud(cloud, |x, th| phi(*x, th[0] as usize)).phi_check,
                Err(abc_smc2::Error::TotalParticleDeath { .. }) => 0.0,
                Err(_) => f64::NAN,
            })
            .collect();
        let (mean, sd) = mean_sd(&estimates);
        let se = sd / (runs as f64).sqrt();
        let z = (mean - exact).abs() / se;
        rec.check(name, z <= 3.0, z, "|mean - exact| <= 3 SE", format!("mean {mean:.6} exact {exact:.6} se {se:.2e}"));
    }
    rec.finish()
}

fn consistency(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("consistency");
    let toy = DiscreteToySsm::example_with_proposals();
    let (name, phi) = toy_phis()[0];
    let exact = match toy.enumerate_target(&TOY_Y, &TOY_EPS, phi) {
        Ok((num, norm)) => num / norm,
        Err(e) => {
            rec.error(name, e);
            return rec.finish();
        }
    };
    let rmse = |n_theta: usize, base: u64| -> f64 {
        let sq: Vec<f64> = (0..200u64)
            .into_par_iter()
            .map(|r| match toy_run(&toy, n_theta, base + r) {
                Ok(cloud) => {
                    let est = EstimatorTriple::from_cloud(&cloud, |x, th| phi(*x, th[0] as usize));
                    (est.phi_hat.unwrap_or(0.0) - exact).powi(2)
                }
                Err(_) => exact * exact,
            })
            .collect();
        (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
    };
    let small = rmse(250, 50_000);
    let large = rmse(4000, 60_000);
    let ratio = small / large;
    rec.check(
        "rmse_ratio_250_vs_4000",
        (2.0..=8.0).contains(&ratio),
        ratio,
        "in [2, 8]",
        format!("rmse {small:.3e} at 250, {large:.3e} at 4000"),
    );
    rec.finish()
}

// Samplers

fn stable(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("stable");
    let streams = StreamFactory::new(21);
    let n = 100_000;
    let draw = |p: StableParams, i: u64| -> Vec<f64> {
        let mut rng = streams.stream(Purpose::Validation, &[i]);
        (0..n).map(|_| sample_stable(&p, &mut rng)).collect()
    };
    let (gamma, delta) = (1.3, 0.4);
    let sd = 2f64.sqrt() * gamma;
    let cases: [(&str, StableParams, Box<dyn Fn(f64) -> f64>); 3] = [
        ("gaussian", StableParams { alpha: 2.0, beta: 0.0, gamma, delta }, Box::new(move |x| normal_cdf((x - delta) / sd))),
        (
            "cauchy",
            StableParams { alpha: 1.0, beta: 0.0, gamma, delta },
            Box::new(move |x| 0.5 + ((x - delta) / gamma).atan() / std::f64::consts::PI),
        ),
        (
            "levy",
            StableParams { alpha: 0.5, beta: 1.0, gamma, delta },
            Box::new(move |x| if x <= delta { 0.0 } else { 2.0 * (1.0 - normal_cdf((gamma / (x - delta)).sqrt())) }),
        ),
    ];
    for (i, (name, p, cdf)) in cases.into_iter().enumerate() {
        let ks = ks_statistic(&draw(p, i as u64), cdf);
        rec.check(name, ks.p_value > 0.01, ks.p_value, "KS p > 0.01", format!("D = {:.4e}", ks.statistic));
    }
    // X1 + X2 for iid S(a, b, g, 0) is S(a, b, 2^(1/a) g, 0) when a != 1;
    // a X + c is S(a, b, a g, a d + c).
    for (j, (alpha, beta)) in [(1.5, 0.5), (0.8, -0.3)].into_iter().enumerate() {
        let base = StableParams { alpha, beta, gamma: 0.7, delta: 0.0 };
        let (a, b) = (draw(base, 10 + 3 * j as u64), draw(base, 11 + 3 * j as u64));
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let direct = draw(StableParams { gamma: 0.7 * 2f64.powf(1.0 / alpha), ..base }, 12 + 3 * j as u64);
        let ks = ks_two_sample(&sum, &direct);
        rec.check(format!("sum_closure_alpha_{alpha}"), ks.p_value > 0.01, ks.p_value, "KS p > 0.01", "");
        let affine: Vec<f64> = a.iter().map(|x| 2.5 * x - 1.0).collect();
        let direct = draw(StableParams { alpha, beta, gamma: 0.7 * 2.5, delta: -1.0 }, 100 + j as u64);
        let ks = ks_two_sample(&affine, &direct);
        rec.check(format!("affine_closure_alpha_{alpha}"), ks.p_value > 0.01, ks.p_value, "KS p > 0.01", "");
    }
    rec.finish()
}

fn hawkes_sim(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("hawkes-sim");
    let known = HawkesKnown::default();
    let streams = StreamFactory::new(31);
    let theta = [0.5, 0.5];
    let mut rng = streams.stream(Purpose::Validation, &[0]);
    let (data, ell) = simulate_series(&known, &theta, 1000, &mut rng);
    let mut gaps = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut carry = 0.0;
    for (series, &l) in data.iter().zip(&ell) {
        let rates = HawkesRates { theta0: known.theta0, ell: l, theta1: theta[0], theta2: theta[1] };
        match hawkes_compensator(&series.events, &history, rates, series.start, series.end) {
            Ok(inc) => {
                // The increment up to the interval end continues into the
                // next interval.
                for (j, v) in inc.iter().enumerate() {
                    carry += v;
                    if j + 1 < inc.len() {
                        gaps.push(carry);
                        carry = 0.0;
                    }
                }
            }
            Err(e) => {
                rec.error("time_rescaling", e);
                return rec.finish();
            }
        }
        history.extend_from_slice(&series.events);
    }
    let ks = ks_statistic(&gaps, |x| 1.0 - (-x).exp());
    rec.check("time_rescaling", ks.p_value > 0.01, ks.p_value, "KS p > 0.01", format!("{} gaps", gaps.len()));

    let ell = 0.4;
    let n = 1000;
    let mut rng = streams.stream(Purpose::Validation, &[1]);
    let counts: Vec<f64> =
        (1..=n).map(|t| simulate_hawkes_interval(&known, &[], ell, &[0.0, 0.5], t, &mut rng).events.len() as f64).collect();
    let rate = known.theta0 * ell * known.interval;
    let mean = counts.iter().sum::<f64>() / n as f64;
    let se = (rate / n as f64).sqrt();
    let z = (mean - rate).abs() / se;
    rec.check("poisson_mean_count", z <= 3.0, z, "|mean - rate| <= 3 SE", format!("mean {mean:.4} rate {rate}"));
    rec.finish()
}

// Engine runs

fn rejuvenation(_deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("rejuvenation");
    let horizon = 8;
    let ds = match abc_smc2::models::simulate_skew_normal(&[0.25, 2.0], 100, horizon, 7) {
        Ok(ds) => ds,
        Err(e) => {
            rec.error("setup", e);
            return rec.finish();
        }
    };
    let SimulatedData::SkewNormal(y) = ds.data else { unreachable!() };
    let model = match abc_smc2::models::skew_normal::pilot_summary_weights(100, 1000, 8)
        .and_then(|w| SkewNormalSsm::new(100, w, 1.0))
    {
        Ok(m) => m,
        Err(e) => {
            rec.error("setup", e);
            return rec.finish();
        }
    };
    let n_theta = 300;
    let cfg = RunConfig { n_theta, n_x: 100, n_y: 20, p_acc: 0.05, ess_fraction: 0.5, seed: 17, horizon };
    let engine = match Smc2::new(&model, cfg, EngineOptions::default()) {
        Ok(e) => e,
        Err(e) => {
            rec.error("setup", e);
            return rec.finish();
        }
    };

    // Natural rejuvenations along the run.
    let mut reset_ok = true;
    let mut seen = 0;
    let mut detail = String::new();
    let mut cloud = match engine.init_step(&y) {
        Ok(c) => c,
        Err(e) => {
            rec.error("run", e);
            return rec.finish();
        }
    };
    loop {
        if cloud.diagnostics.last().is_some_and(|d| d.rejuvenated) {
            seen += 1;
            let z = cloud.z_values();
            let e = ess(&z).unwrap_or(f64::NAN);
            if e != n_theta as f64 || z.iter().any(|&v| v != 1.0) {
                reset_ok = false;
                detail = format!("t={}: ess {e}", cloud.t);
            }
        }
        if cloud.t >= horizon - 1 {
            break;
        }
        cloud = match engine.update_step(cloud, &y) {
            Ok(c) => c,
            Err(e) => {
                rec.error("run", e);
                return rec.finish();
            }
        };
    }
    rec.check("reset_after_rejuvenation", reset_ok && seen > 0, seen as f64, "ESS = N_theta and all Z = 1 after each", detail);

    // Forced rejuvenation at the last step, from a weighted cloud.
    let opts = EngineOptions { rejuvenation: false, ..EngineOptions::default() };
    let cfg = engine.config().clone();
    let before = match Smc2::new(&model, cfg, opts).and_then(|e| e.update_step(cloud, &y)) {
        Ok(c) => c,
        Err(e) => {
            rec.error("forced", e);
            return rec.finish();
        }
    };
    let mean_before = before.posterior_mean();
    let weights = before.normalized_weights();
    let thetas: Vec<Vec<f64>> = before.particles.iter().map(|p| p.theta.clone()).collect();
    let mut rng = StreamFactory::new(99).stream(Purpose::Validation, &[0]);
    let boot: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let idx = multinomial_resample(&weights, n_theta, &mut rng).unwrap_or_default();
            (0..2).map(|k| idx.iter().map(|&i| thetas[i][k]).sum::<f64>() / n_theta as f64).collect()
        })
        .collect();
    let after = match engine.rejuvenate(before, &y) {
        Ok(c) => c,
        Err(e) => {
            rec.error("forced", e);
            return rec.finish();
        }
    };
    let z = after.z_values();
    let e = ess(&z).unwrap_or(f64::NAN);
    rec.check("forced_reset", e == n_theta as f64 && z.iter().all(|&v| v == 1.0), e, "ESS = N_theta, all Z = 1", "");
    let mean_after = after.posterior_mean();
    for (k, name) in ["sigma", "gamma"].iter().enumerate() {
        let col: Vec<f64> = boot.iter().map(|b| b[k]).collect();
        let (_, se) = mean_sd(&col);
        let shift = (mean_after[k] - mean_before[k]).abs() / se;
        rec.check(
            format!("mean_shift_{name}"),
            shift < 3.0,
            shift,
            "< 3 bootstrap SE",
            format!("before {:.5} after {:.5} se {se:.2e}", mean_before[k], mean_after[k]),
        );
    }
    rec.finish()
}

fn load(text: &str) -> Result<crate::config::LoadedConfig, CliError> {
    parse_config(text, Path::new("."))
}

fn credible_checks(rec: &mut Recorder, s: &RunSummary, truth: &[f64]) {
    for (k, (&v, name)) in truth.iter().zip(&s.param_names).enumerate() {
        let (lo, hi) = (s.credible_quantile(k, 0.025), s.credible_quantile(k, 0.975));
        rec.check(
            format!("{name}_in_95_interval"),
            lo <= v && v <= hi,
            v,
            format!("in [{lo:.4}, {hi:.4}]"),
            format!("posterior mean {:.4}", s.thetas.iter().zip(&s.weights).map(|(t, w)| t[k] * w).sum::<f64>()),
        );
    }
}

pub const SKEW_NORMAL_EXAMPLE: &str = "model = \"skew_normal\"
n_theta = 500
n_x = 500
n_y = 50
p_acc = 0.05
ess_fraction = 0.5
seed = 2024
horizon = 20
skew.obs_per_step = 100
skew.true_sigma = 0.25
skew.true_gamma = 2.0
";

fn skew_normal_example(deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("skew-normal");
    match load(SKEW_NORMAL_EXAMPLE).and_then(|c| infer(&c, Some(deadline))) {
        Ok(s) => {
            credible_checks(&mut rec, &s, &[0.25, 2.0]);
            let covered = s.truth_coverage().unwrap_or(0);
            rec.check("state_coverage", covered >= 16, covered as f64, ">= 16 of 20 steps", "");
        }
        Err(e) => rec.error("run", e),
    }
    rec.finish()
}

pub const SV_GRID_EXAMPLE: &str = "model = \"sv\"
n_theta = 1000
n_x = 200
n_y = 20
p_acc = 0.05
ess_fraction = 0.5
seed = 77
horizon = 20
sv.alpha = 2.0
sv.beta = 0.0
sv.true_theta = 0.7
";

fn sv_grid(deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("sv-grid");
    let cfg = match load(SV_GRID_EXAMPLE) {
        Ok(c) => c,
        Err(e) => {
            rec.error("config", e);
            return rec.finish();
        }
    };
    let (crate::config::ModelSettings::Sv { known, .. }, crate::config::DataSource::Simulate { params, seed }) =
        (&cfg.model, &cfg.data)
    else {
        unreachable!()
    };
    let y = match abc_smc2::models::simulate_sv(known, params, cfg.run.horizon, *seed) {
        Ok(ds) => match ds.data {
            SimulatedData::StochasticVolatility(y) => y,
            _ => unreachable!(),
        },
        Err(e) => {
            rec.error("data", e);
            return rec.finish();
        }
    };
    let summary = match infer(&cfg, Some(deadline)) {
        Ok(s) => s,
        Err(e) => {
            rec.error("run", e);
            return rec.finish();
        }
    };
    let cells = 200;
    let grid = uniform_grid(cells);
    let masses = match grid_reference_posterior(known, &y, &grid, 10_000, 5) {
        Ok(m) => m,
        Err(e) => {
            rec.error("grid", e);
            return rec.finish();
        }
    };
    let streams = StreamFactory::new(123);
    let mut rng = streams.stream(Purpose::Validation, &[0]);
    let n = 1000;
    let abc: Vec<f64> = match multinomial_resample(&summary.weights, n, &mut rng) {
        Ok(idx) => idx.iter().map(|&i| summary.thetas[i][0]).collect(),
        Err(e) => {
            rec.error("resample", e);
            return rec.finish();
        }
    };
    let half = 1.0 / cells as f64;
    let reference: Vec<f64> = match multinomial_resample(&masses, n, &mut rng) {
        Ok(idx) => idx.iter().map(|&i| grid[i] + half * (2.0 * rng.gen::<f64>() - 1.0)).collect(),
        Err(e) => {
            rec.error("resample", e);
            return rec.finish();
        }
    };
    let ks = ks_two_sample(&abc, &reference);
    let (ma, _) = mean_sd(&abc);
    let (mr, _) = mean_sd(&reference);
    rec.check("ks_vs_grid", ks.statistic < 0.2, ks.statistic, "KS distance < 0.2", format!("means {ma:.4} vs {mr:.4}"));
    rec.finish()
}

pub const HAWKES_EXAMPLE: &str = "model = \"hawkes\"
n_theta = 2000
n_x = 20
n_y = 1
p_acc = 0.05
ess_fraction = 0.5
seed = 314
horizon = 30
hawkes.true_theta1 = 0.5
hawkes.true_theta2 = 0.5
";

fn hawkes_inference(deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("hawkes-inference");
    match load(HAWKES_EXAMPLE).and_then(|c| infer(&c, Some(deadline))) {
        Ok(s) => {
            credible_checks(&mut rec, &s, &[0.5, 0.5]);
            let covered = s.truth_coverage().unwrap_or(0);
            let need = (0.8 * s.filtering.len() as f64).ceil();
            rec.check(
                "ell_coverage",
                covered as f64 >= need,
                covered as f64,
                format!(">= {need} of {} steps", s.filtering.len()),
                "",
            );
        }
        Err(e) => rec.error("run", e),
    }
    rec.finish()
}

pub const DETERMINISM_CONFIGS: [(&str, &str); 2] = [
    (
        "sv",
        "model = \"sv\"\nn_theta = 400\nn_x = 100\nn_y = 10\np_acc = 0.05\ness_fraction = 0.5\nseed = 8\nhorizon = 20\nsv.true_theta = 0.7\n",
    ),
    (
        "skew_normal",
        "model = \"skew_normal\"\nn_theta = 200\nn_x = 100\nn_y = 10\np_acc = 0.05\ness_fraction = 0.5\nseed = 9\nhorizon = 10\nskew.true_sigma = 0.25\nskew.true_gamma = 2.0\n",
    ),
];

/// Names and contents of every file in `dir`, sorted by name.
pub fn directory_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        files.push((entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path())?));
    }
    files.sort();
    Ok(files)
}

fn determinism(deadline: Instant) -> Vec<CheckRecord> {
    let mut rec = Recorder::new("determinism");
    let outcome = || -> Result<Vec<(String, bool, usize)>, CliError> {
        let tmp = tempfile::tempdir()?;
        let mut out = Vec::new();
        for (name, text) in DETERMINISM_CONFIGS {
            let config = tmp.path().join(format!("{name}.toml"));
            fs::write(&config, text)?;
            let mut dirs = Vec::new();
            for threads in [1, 4] {
                let dir = tmp.path().join(format!("{name}_{threads}"));
                let budget = deadline.saturating_duration_since(Instant::now());
                infer_to_dir(&config, &dir, Some(threads), false, Some(budget))?;
                dirs.push(directory_contents(&dir)?);
            }
            out.push((name.to_string(), dirs[0] == dirs[1], dirs[0].len()));
        }
        Ok(out)
    };
    match outcome() {
        Ok(results) => {
            for (name, same, files) in results {
                rec.check(format!("identical_{name}"), same, files as f64, "byte-identical with 1 and 4 threads", "");
            }
        }
        Err(e) => rec.error("run", e),
    }
    rec.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_agrees_on_small_case() {
        let r = [CalibrationRecord::new(2.0, 1.0), CalibrationRecord::new(1.0, 1.0), CalibrationRecord::new(3.0, 2.0)];
        assert_eq!(brute_force_threshold(&r, 0.25), 1.0);
        assert_eq!(brute_force_threshold(&r, 0.5), 2.0);
        assert_eq!(brute_force_threshold(&r, 0.51), 3.0);
    }

    #[test]
    fn coverage_detects_violation() {
        let log = vec![vec![CalibrationRecord::new(1.0, 1.0), CalibrationRecord::new(2.0, 1.0)]];
        assert!(coverage_holds(&log, &[1.0], 0.5).0);
        assert!(!coverage_holds(&log, &[2.0], 0.5).0);
        assert!(!coverage_holds(&log, &[0.5], 0.5).0);
    }

    #[test]
    fn suite_names_unique_and_found() {
        for s in SUITES {
            assert_eq!(find_suite(s.name).unwrap().name, s.name);
        }
        assert!(matches!(find_suite("nope"), Err(CliError::Config(_))));
    }

    #[test]
    fn toy_enumeration_suite_passes() {
        let records = run_suite(find_suite("toy-enumeration").unwrap());
        assert!(records.iter().all(|r| r.pass), "{records:?}");
    }
}
