//! The self-calibrated ABC-SMC² update loop.
//!
//! Each theta-particle carries its own ABC particle filter over the states.
//! At every time step all clouds are propagated and simulated first; the
//! ABC threshold for the step is then chosen once, globally, as the
//! smallest observed distance whose `Z * u` weighted acceptance fraction
//! reaches `p_acc`; only then are state weights and theta weights updated.
//! When the theta weights degenerate, particles are resampled and moved
//! with a particle Metropolis-Hastings kernel whose likelihood estimates
//! come from fresh filters run with the thresholds already calibrated.

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate_config, CloudStatistics, Model, ParamVector, RunConfig};
use crate::particle::{
    ess, grouped_quantile_threshold, multinomial_resample, normalize_in_place,
    weighted_quantile_threshold, CalibrationRecord, WeightedGroup,
};
use crate::rng::{Purpose, StreamFactory};

/// Calibrated thresholds `eps_1..eps_t`. Append-only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThresholdSchedule {
    eps: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(eps: Vec<f64>) -> Self {
        Self { eps }
    }

    pub fn push(&mut self, eps: f64) {
        self.eps.push(eps);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

/// Weighted state particles for one theta. Weights sum to one, or are all
/// zero when the cloud died.
#[derive(Clone, Debug, PartialEq)]
pub struct StateCloud<S> {
    pub states: Vec<S>,
    pub weights: Vec<f64>,
}

impl<S> StateCloud<S> {
    pub fn empty() -> Self {
        Self { states: Vec::new(), weights: Vec::new() }
    }

    pub fn is_dead(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParticle<S> {
    pub theta: ParamVector,
    /// Importance weight of the particle since the last rejuvenation,
    /// rescaled so that the cloud maximum is one. Zero iff the particle died.
    pub z: f64,
    /// Log of the ABC likelihood estimate accumulated over `1..t`.
    pub log_likelihood: f64,
    pub states: StateCloud<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: usize,
    pub epsilon: f64,
    /// ESS of the theta weights after the weight update.
    pub ess: f64,
    pub rejuvenated: bool,
    pub mh_accept_rate: Option<f64>,
    pub live_particles: usize,
}

#[derive(Clone, Debug)]
pub struct ThetaCloud<S> {
    pub particles: Vec<ThetaParticle<S>>,
    pub thresholds: ThresholdSchedule,
    pub t: usize,
    pub diagnostics: Vec<StepDiagnostics>,
    /// `ln` of the factor removed from every `z` by the running rescale since
    /// the last rejuvenation; `z * exp(log_z_scale)` is the unscaled weight.
    pub log_z_scale: f64,
    /// Running estimate of the log ABC evidence.
    pub log_evidence: f64,
    /// Per-step calibration records, kept only when requested.
    pub calibration_log: Vec<Vec<CalibrationRecord>>,
}

impl<S> ThetaCloud<S> {
    pub fn z_values(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.z).collect()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let mut w = self.z_values();
        normalize_in_place(&mut w);
        w
    }

    /// `Z_t^m` without the running rescale.
    pub fn unscaled_weight(&self, m: usize) -> f64 {
        self.particles[m].z * self.log_z_scale.exp()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let w = self.normalized_weights();
        let dim = self.particles.first().map_or(0, |p| p.theta.len());
        let mut mean = vec![0.0; dim];
        for (p, w) in self.particles.iter().zip(&w) {
            for (m, x) in mean.iter_mut().zip(&p.theta) {
                *m += w * x;
            }
        }
        mean
    }

    pub fn live_count(&self) -> usize {
        self.particles.iter().filter(|p| p.z > 0.0).count()
    }
}

/// Switches that sit outside the run configuration.
#[derive(Clone, Debug)]
pub struct EngineOptions {
    pub rejuvenation: bool,
    /// Use these thresholds instead of calibrating (thresholds set a priori).
    pub fixed_thresholds: Option<Vec<f64>>,
    pub keep_calibration_records: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { rejuvenation: true, fixed_thresholds: None, keep_calibration_records: false }
    }
}

/// Likelihood estimate and final cloud of one conditional filter run.
#[derive(Clone, Debug)]
pub struct FilterEstimate<S> {
    pub log_likelihood: f64,
    pub states: StateCloud<S>,
}

impl<S> FilterEstimate<S> {
    pub fn z(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

/// `eps` for the records: smallest distance whose weighted acceptance
/// fraction reaches `p_acc`.
pub fn calibrate_threshold(records: &[CalibrationRecord], p_acc: f64) -> Result<f64> {
    weighted_quantile_threshold(records, p_acc)
}

fn emission_weight(accepted: usize, n_y: usize, u: f64) -> f64 {
    u * (accepted as f64 / n_y as f64)
}

/// `u * #{d <= eps} / N_y`.
pub fn abc_emission_weight(distances: &[f64], eps: f64, u: f64) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    let accepted = distances.iter().filter(|&&d| d <= eps).count();
    emission_weight(accepted, distances.len(), u)
}

/// Propagated states, their weight ratios and the sorted distance block of
/// each state (`n_y` entries per state, ascending).
struct Propagated<S> {
    states: Vec<S>,
    ratios: Vec<f64>,
    distances: Vec<f64>,
}

pub struct Smc2<'a, M: Model> {
    model: &'a M,
    cfg: RunConfig,
    opts: EngineOptions,
    streams: StreamFactory,
}

impl<'a, M: Model> Smc2<'a, M> {
    pub fn new(model: &'a M, cfg: RunConfig, opts: EngineOptions) -> Result<Self> {
        let violations = validate_config(&cfg);
        if !violations.is_empty() {
            return Err(Error::InvalidConfig(violations));
        }
        if let Some(fixed) = &opts.fixed_thresholds {
            if fixed.iter().any(|e| e.is_nan() || *e < 0.0) {
                return Err(Error::Domain("fixed thresholds must be >= 0".into()));
            }
        }
        let streams = StreamFactory::new(cfg.seed);
        Ok(Self { model, cfg, opts, streams })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &M {
        self.model
    }

    /// Runs the whole observation series, calling `on_step` after every
    /// completed step (including any rejuvenation).
    pub fn run<F>(&self, observations: &[M::Data], mut on_step: F) -> Result<ThetaCloud<M::State>>
    where
        F: FnMut(&ThetaCloud<M::State>),
    {
        let horizon = self.cfg.horizon.min(observations.len());
        if horizon == 0 {
            return Err(Error::Domain("no observations to process".into()));
        }
        let mut cloud = self.init_step(observations)?;
        on_step(&cloud);
        while cloud.t < horizon {
            cloud = self.update_step(cloud, observations)?;
            on_step(&cloud);
        }
        Ok(cloud)
    }

    /// First step: draw the theta-cloud from the prior and process `y_1`.
    pub fn init_step(&self, observations: &[M::Data]) -> Result<ThetaCloud<M::State>> {
        if observations.is_empty() {
            return Err(Error::Domain("no observations to process".into()));
        }
        let particles: Vec<ThetaParticle<M::State>> = (0..self.cfg.n_theta)
            .into_par_iter()
            .map(|m| {
                let mut rng = self.streams.stream(Purpose::Prior, &[m as u64]);
                ThetaParticle {
                    theta: self.model.prior_sample(&mut rng),
                    z: 1.0,
                    log_likelihood: 0.0,
                    states: StateCloud::empty(),
                }
            })
            .collect();
        let cloud = ThetaCloud {
            particles,
            thresholds: ThresholdSchedule::new(),
            t: 0,
            diagnostics: Vec::new(),
            log_z_scale: 0.0,
            log_evidence: 0.0,
            calibration_log: Vec::new(),
        };
        self.advance(cloud, observations)
    }

    /// Process `y_t` with `t = cloud.t + 1`; `observations` must hold at
    /// least `y_1..y_t` (the prefix is needed by rejuvenation).
    pub fn update_step(
        &self,
        cloud: ThetaCloud<M::State>,
        observations: &[M::Data],
    ) -> Result<ThetaCloud<M::State>> {
        if cloud.t == 0 {
            return Err(Error::Domain("update_step needs an initialized cloud".into()));
        }
        if cloud.live_count() == 0 {
            return Err(Error::TotalParticleDeath {
                t: cloud.t,
                epsilon: cloud.thresholds.as_slice().last().copied().unwrap_or(f64::NAN),
            });
        }
        self.advance(cloud, observations)
    }

    fn advance(
        &self,
        mut cloud: ThetaCloud<M::State>,
        observations: &[M::Data],
    ) -> Result<ThetaCloud<M::State>> {
        let t = cloud.t + 1;
        if observations.len() < t {
            return Err(Error::Domain(format!("observation y_{t} missing")));
        }
        let initial = t == 1;
        let propagated: Vec<Option<Propagated<M::State>>> = cloud
            .particles
            .par_iter()
            .enumerate()
            .map(|(m, p)| {
                if p.z == 0.0 {
                    return Ok(None);
                }
                let mut rng = self.streams.stream(Purpose::Propagate, &[t as u64, m as u64]);
                let prev = (!initial).then_some(&p.states);
                self.propagate(&p.theta, prev, t, observations, &mut rng).map(Some)
            })
            .collect::<Result<_>>()?;

        let epsilon = match &self.opts.fixed_thresholds {
            Some(fixed) => *fixed.get(t - 1).ok_or_else(|| {
                Error::Domain(format!("no fixed threshold supplied for t = {t}"))
            })?,
            None => self.calibrate(&cloud, &propagated, t)?,
        };
        if self.opts.keep_calibration_records {
            cloud.calibration_log.push(self.records(&cloud, &propagated));
        }

        let n_y = self.cfg.n_y;
        let old_total: f64 = cloud.particles.iter().map(|p| p.z).sum();
        let updated: Vec<(StateCloud<M::State>, f64)> = propagated
            .into_par_iter()
            .map(|prop| match prop {
                Some(prop) => weigh(prop, epsilon, n_y),
                None => (StateCloud::empty(), 0.0),
            })
            .collect();
        for (p, (states, p_hat)) in cloud.particles.iter_mut().zip(updated) {
            if p.z == 0.0 {
                continue;
            }
            p.z *= p_hat;
            p.log_likelihood += p_hat.ln();
            p.states = states;
        }
        cloud.thresholds.push(epsilon);
        cloud.t = t;

        let new_total: f64 = cloud.particles.iter().map(|p| p.z).sum();
        let max_z = cloud.particles.iter().map(|p| p.z).fold(0.0, f64::max);
        if !(max_z > 0.0) {
            return Err(Error::TotalParticleDeath { t, epsilon });
        }
        cloud.log_evidence += (new_total / old_total).ln();
        for p in cloud.particles.iter_mut() {
            p.z /= max_z;
        }
        cloud.log_z_scale += max_z.ln();

        let ess_now = ess(&cloud.z_values())?;
        let mut diag = StepDiagnostics {
            t,
            epsilon,
            ess: ess_now,
            rejuvenated: false,
            mh_accept_rate: None,
            live_particles: cloud.live_count(),
        };
        debug!("t={t} eps={epsilon:.6e} ess={ess_now:.1} live={}", diag.live_particles);
        let degenerate = self.check_degeneracy(&cloud);
        if degenerate && self.opts.rejuvenation {
            let (rejuvenated, rate) = self.rejuvenate_with_rate(cloud, observations)?;
            cloud = rejuvenated;
            diag.rejuvenated = true;
            diag.mh_accept_rate = Some(rate);
            info!("t={t}: rejuvenated, MH acceptance {rate:.3}");
        }
        cloud.diagnostics.push(diag);
        Ok(cloud)
    }

    fn propagate<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        prev: Option<&StateCloud<M::State>>,
        t: usize,
        observations: &[M::Data],
        rng: &mut R,
    ) -> Result<Propagated<M::State>> {
        let (n_x, n_y) = (self.cfg.n_x, self.cfg.n_y);
        let observed = &observations[t - 1];
        let ancestors = match prev {
            Some(cloud) => Some(multinomial_resample(&cloud.weights, n_x, rng)?),
            None => None,
        };
        let mut states = Vec::with_capacity(n_x);
        let mut ratios = Vec::with_capacity(n_x);
        let mut distances = Vec::with_capacity(n_x * n_y);
        for n in 0..n_x {
            let (x, u) = match (prev, &ancestors) {
                (Some(cloud), Some(a)) => {
                    let parent = &cloud.states[a[n]];
                    let x = self.model.transition_proposal_sample(
                        parent,
                        theta,
                        t,
                        &observations[..t - 1],
                        rng,
                    );
                    let u = self.model.transition_weight_ratio(&x, parent, theta, t);
                    (x, u)
                }
                _ => {
                    let x = self.model.initial_proposal_sample(theta, rng);
                    let u = self.model.initial_weight_ratio(&x, theta);
                    (x, u)
                }
            };
            let start = distances.len();
            for _ in 0..n_y {
                distances.push(self.model.simulate_distance(&x, theta, t, observed, rng));
            }
            distances[start..].sort_unstable_by(f64::total_cmp);
            states.push(x);
            ratios.push(u);
        }
        Ok(Propagated { states, ratios, distances })
    }

    fn calibrate(
        &self,
        cloud: &ThetaCloud<M::State>,
        propagated: &[Option<Propagated<M::State>>],
        t: usize,
    ) -> Result<f64> {
        let n_y = self.cfg.n_y;
        let groups: Vec<WeightedGroup<'_>> = cloud
            .particles
            .iter()
            .zip(propagated)
            .filter_map(|(p, prop)| prop.as_ref().map(|prop| (p.z, prop)))
            .flat_map(|(z, prop)| {
                prop.ratios
                    .iter()
                    .zip(prop.distances.chunks_exact(n_y))
                    .map(move |(&u, block)| WeightedGroup { weight: z * u, sorted: block })
            })
            .collect();
        grouped_quantile_threshold(&groups, self.cfg.p_acc).map_err(|_| {
            Error::TotalParticleDeath { t, epsilon: f64::NAN }
        })
    }

    fn records(
        &self,
        cloud: &ThetaCloud<M::State>,
        propagated: &[Option<Propagated<M::State>>],
    ) -> Vec<CalibrationRecord> {
        let n_y = self.cfg.n_y;
        let mut out = Vec::new();
        for (p, prop) in cloud.particles.iter().zip(propagated) {
            let Some(prop) = prop else { continue };
            for (&u, block) in prop.ratios.iter().zip(prop.distances.chunks_exact(n_y)) {
                out.extend(block.iter().map(|&d| CalibrationRecord::new(d, p.z * u)));
            }
        }
        out
    }

    /// True iff the ESS of the theta weights is below
    /// `ess_fraction * n_theta`.
    pub fn check_degeneracy(&self, cloud: &ThetaCloud<M::State>) -> bool {
        let threshold = self.cfg.ess_fraction * cloud.particles.len() as f64;
        match ess(&cloud.z_values()) {
            Ok(e) => e < threshold,
            Err(_) => true,
        }
    }

    /// ABC particle filter for a single theta over `y_1..y_t` with the given
    /// thresholds held fixed. Stops early with a dead cloud if a step
    /// accepts nothing.
    pub fn run_conditional_filter<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        thresholds: &ThresholdSchedule,
        observations: &[M::Data],
        rng: &mut R,
    ) -> Result<FilterEstimate<M::State>> {
        self.conditional_filter_above(theta, thresholds, observations, f64::NEG_INFINITY, rng)
    }

    /// [`run_conditional_filter`](Self::run_conditional_filter) that gives up
    /// with a dead cloud once the final log-likelihood is certain to fall
    /// below `floor`. Needs the model's weight ratio bound.
    fn conditional_filter_above<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        thresholds: &ThresholdSchedule,
        observations: &[M::Data],
        floor: f64,
        rng: &mut R,
    ) -> Result<FilterEstimate<M::State>> {
        let t_end = thresholds.len();
        if observations.len() < t_end {
            return Err(Error::Domain("fewer observations than thresholds".into()));
        }
        let log_bound = self.model.weight_ratio_bound().map(f64::ln);
        let mut log_likelihood = 0.0;
        let mut cloud: Option<StateCloud<M::State>> = None;
        for (s, &eps) in thresholds.as_slice().iter().enumerate() {
            let t = s + 1;
            let prop = self.propagate(theta, cloud.as_ref(), t, observations, rng)?;
            let (states, p_hat) = weigh(prop, eps, self.cfg.n_y);
            if p_hat == 0.0 {
                return Ok(FilterEstimate { log_likelihood: f64::NEG_INFINITY, states });
            }
            log_likelihood += p_hat.ln();
            if let Some(lb) = log_bound {
                let ceiling = log_likelihood + (t_end - t) as f64 * lb;
                if ceiling < floor - 1e-9 * (1.0 + floor.abs()) {
                    return Ok(FilterEstimate { log_likelihood: f64::NEG_INFINITY, states: StateCloud::empty() });
                }
            }
            cloud = Some(states);
        }
        Ok(FilterEstimate { log_likelihood, states: cloud.unwrap_or_else(StateCloud::empty) })
    }

    /// Resample by `z`, move every particle with the PMMH kernel using the
    /// recorded thresholds, then reset all `z` to one.
    pub fn rejuvenate(
        &self,
        cloud: ThetaCloud<M::State>,
        observations: &[M::Data],
    ) -> Result<ThetaCloud<M::State>> {
        let (mut cloud, rate) = self.rejuvenate_with_rate(cloud, observations)?;
        if let Some(d) = cloud.diagnostics.iter_mut().rev().find(|d| d.t == cloud.t) {
            d.rejuvenated = true;
            d.mh_accept_rate = Some(rate);
        }
        Ok(cloud)
    }

    fn rejuvenate_with_rate(
        &self,
        mut cloud: ThetaCloud<M::State>,
        observations: &[M::Data],
    ) -> Result<(ThetaCloud<M::State>, f64)> {
        let t = cloud.t;
        let n_theta = cloud.particles.len();
        let z = cloud.z_values();
        let working: Vec<Vec<f64>> =
            cloud.particles.iter().map(|p| self.model.to_working(&p.theta)).collect();
        let stats = CloudStatistics::from_weighted(&working, &z);
        let mut rng = self.streams.stream(Purpose::Resample, &[t as u64]);
        let ancestors = multinomial_resample(&z, n_theta, &mut rng)?;
        let thresholds = &cloud.thresholds;
        let particles = &cloud.particles;

        let moved: Vec<(ThetaParticle<M::State>, bool)> = ancestors
            .par_iter()
            .enumerate()
            .map(|(m, &a)| {
                let current = &particles[a];
                let mut rng = self.streams.stream(Purpose::Rejuvenate, &[t as u64, m as u64]);
                let keep = || ThetaParticle { z: 1.0, ..current.clone() };
                let proposed = self.model.kernel_propose(&current.theta, &stats, &mut rng);
                let log_prior_new = self.model.prior_log_density(&proposed);
                if !log_prior_new.is_finite() {
                    return Ok((keep(), false));
                }
                // The uniform is drawn first so the filter can stop as soon as
                // acceptance is out of reach.
                let log_u = rng.gen::<f64>().ln();
                let log_rest = log_prior_new - self.model.prior_log_density(&current.theta)
                    - current.log_likelihood
                    + self.model.kernel_log_ratio(&proposed, &current.theta);
                let estimate = self.conditional_filter_above(
                    &proposed,
                    thresholds,
                    observations,
                    log_u - log_rest,
                    &mut rng,
                )?;
                if estimate.log_likelihood == f64::NEG_INFINITY {
                    return Ok((keep(), false));
                }
                let log_ratio = log_prior_new - self.model.prior_log_density(&current.theta)
                    + estimate.log_likelihood
                    - current.log_likelihood
                    + self.model.kernel_log_ratio(&proposed, &current.theta);
                let accept = log_u < log_ratio;
                if accept {
                    Ok((
                        ThetaParticle {
                            theta: proposed,
                            z: 1.0,
                            log_likelihood: estimate.log_likelihood,
                            states: estimate.states,
                        },
                        true,
                    ))
                } else {
                    Ok((keep(), false))
                }
            })
            .collect::<Result<_>>()?;

        let accepted = moved.iter().filter(|(_, a)| *a).count();
        cloud.particles = moved.into_iter().map(|(p, _)| p).collect();
        cloud.log_z_scale = 0.0;
        Ok((cloud, accepted as f64 / n_theta as f64))
    }

    /// Weighted quantiles of the theta-marginalized filtering distribution
    /// of `model.state_summary`, each state weighted by `Z^m W^{m,n}`.
    pub fn filtering_quantiles(&self, cloud: &ThetaCloud<M::State>, probs: &[f64]) -> Result<Vec<f64>> {
        filtering_quantiles(self.model, cloud, probs)
    }
}

pub fn filtering_quantiles<M: Model>(
    model: &M,
    cloud: &ThetaCloud<M::State>,
    probs: &[f64],
) -> Result<Vec<f64>> {
    let records: Vec<CalibrationRecord> = cloud
        .particles
        .iter()
        .filter(|p| p.z > 0.0)
        .flat_map(|p| {
            p.states
                .states
                .iter()
                .zip(&p.states.weights)
                .map(move |(x, &w)| CalibrationRecord::new(model.state_summary(x), p.z * w))
        })
        .collect();
    probs.iter().map(|&q| weighted_quantile_threshold(&records, q)).collect()
}

fn weigh<S>(prop: Propagated<S>, eps: f64, n_y: usize) -> (StateCloud<S>, f64) {
    let mut weights: Vec<f64> = prop
        .ratios
        .iter()
        .zip(prop.distances.chunks_exact(n_y))
        .map(|(&u, block)| emission_weight(block.partition_point(|&d| d <= eps), n_y, u))
        .collect();
    let total = normalize_in_place(&mut weights);
    let p_hat = total / weights.len() as f64;
    (StateCloud { states: prop.states, weights }, p_hat)
}
