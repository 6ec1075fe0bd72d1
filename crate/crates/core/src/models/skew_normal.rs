//! Gaussian random walk observed through batches of skew normal draws.
//!
//! `x_1 ~ N(0, 1)`, `x_t | x_{t-1} ~ N(x_{t-1}, 1)` and each `y_t` holds
//! `obs_per_step` iid `SN(x_t, sigma, gamma)` values, summarized by mean,
//! standard deviation and skewness. `theta = (sigma, gamma)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{bounded_from_working, bounded_log_jacobian, bounded_to_working, gaussian_step};
use crate::distributions::{central_moments, SkewNormalParams};
use crate::error::{Error, Result};
use crate::model::{CloudStatistics, Model, ParamVector};
use crate::rng::{Purpose, StreamFactory};

pub const SIGMA_BOUNDS: (f64, f64) = (0.1, 0.5);
pub const GAMMA_BOUNDS: (f64, f64) = (0.2, 4.0);

/// One observation batch and its summaries `(mean, sd, skewness)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnSample {
    pub values: Vec<f64>,
    pub summary: [f64; 3],
}

impl SnSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let summary = skew_ssm_summaries(&values)?;
        Ok(Self { values, summary })
    }
}

/// `(mean, sd, skewness)`: sd uses `n - 1`, skewness 1/n central moments.
pub fn skew_ssm_summaries(y: &[f64]) -> Result<[f64; 3]> {
    if y.len() < 2 {
        return Err(Error::Domain("summaries need at least two values".into()));
    }
    let n = y.len() as f64;
    let (mean, m2, m3) = central_moments(y);
    if !(m2 > 0.0) {
        return Err(Error::Domain("degenerate summary: sample has zero variance".into()));
    }
    Ok([mean, (m2 * n / (n - 1.0)).sqrt(), m3 / m2.powf(1.5)])
}

pub fn weighted_distance(a: &[f64; 3], b: &[f64; 3], w: &[f64; 3]) -> f64 {
    (0..3).map(|k| w[k] * (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkewNormalSsm {
    pub obs_per_step: usize,
    pub summary_weights: [f64; 3],
    /// Scale of the cloud covariance in the random walk kernel.
    pub kernel_c: f64,
}

impl SkewNormalSsm {
    pub fn new(obs_per_step: usize, summary_weights: [f64; 3], kernel_c: f64) -> Result<Self> {
        if obs_per_step < 2 {
            return Err(Error::Domain("obs_per_step must be >= 2".into()));
        }
        if summary_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain("summary weights must be positive".into()));
        }
        if !(kernel_c > 0.0) {
            return Err(Error::Domain("kernel_c must be positive".into()));
        }
        Ok(Self { obs_per_step, summary_weights, kernel_c })
    }

    /// Model with summary weights from a prior-predictive pilot.
    pub fn with_pilot(obs_per_step: usize, kernel_c: f64, pilot_size: usize, seed: u64) -> Result<Self> {
        let weights = pilot_summary_weights(obs_per_step, pilot_size, seed)?;
        Self::new(obs_per_step, weights, kernel_c)
    }

    /// Summaries of `obs_per_step` standardized draws `z`, reported for
    /// `x + sigma z` without materializing the batch.
    fn simulate_summary<R: Rng + ?Sized>(&self, x: f64, theta: &[f64], rng: &mut R) -> [f64; 3] {
        let (sigma, delta) = (theta[0], SkewNormalParams { mu: 0.0, sigma: 1.0, gamma: theta[1] }.delta());
        let rest = (1.0 - delta * delta).sqrt();
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for _ in 0..self.obs_per_step {
            let u0: f64 = rng.sample(StandardNormal);
            let u1: f64 = rng.sample(StandardNormal);
            let z = delta * u0.abs() + rest * u1;
            let z2 = z * z;
            s1 += z;
            s2 += z2;
            s3 += z2 * z;
        }
        let n = self.obs_per_step as f64;
        let mean = s1 / n;
        let m2 = (s2 / n - mean * mean).max(0.0);
        let m3 = s3 / n - 3.0 * mean * s2 / n + 2.0 * mean * mean * mean;
        let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        [x + sigma * mean, sigma * (m2 * n / (n - 1.0)).sqrt(), skew]
    }
}

/// Reciprocal prior-predictive variance of each summary of `y_1`, so that
/// every summary contributes on a unit scale to the distance.
pub fn pilot_summary_weights(obs_per_step: usize, pilot_size: usize, seed: u64) -> Result<[f64; 3]> {
    if pilot_size < 2 {
        return Err(Error::Domain("pilot needs at least two draws".into()));
    }
    let model = SkewNormalSsm { obs_per_step, summary_weights: [1.0; 3], kernel_c: 1.0 };
    let streams = StreamFactory::new(seed);
    let mut rows = Vec::with_capacity(pilot_size);
    for j in 0..pilot_size {
        let mut rng = streams.stream(Purpose::Pilot, &[j as u64]);
        let theta = model.prior_sample(&mut rng);
        let x = model.initial_proposal_sample(&theta, &mut rng);
        rows.push(model.simulate_summary(x, &theta, &mut rng));
    }
    let mut weights = [0.0; 3];
    for (k, w) in weights.iter_mut().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let (_, var, _) = central_moments(&col);
        if !(var > 0.0) {
            return Err(Error::Domain(format!("pilot summary {k} has zero variance")));
        }
        *w = 1.0 / var;
    }
    Ok(weights)
}

impl Model for SkewNormalSsm {
    type State = f64;
    type Data = SnSample;

    fn name(&self) -> &str {
        "skew_normal"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["sigma".into(), "gamma".into()]
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        vec![
            rng.gen_range(SIGMA_BOUNDS.0..SIGMA_BOUNDS.1),
            rng.gen_range(GAMMA_BOUNDS.0..GAMMA_BOUNDS.1),
        ]
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        let inside = |v: f64, (a, b): (f64, f64)| v > a && v < b;
        if inside(theta[0], SIGMA_BOUNDS) && inside(theta[1], GAMMA_BOUNDS) {
            -((SIGMA_BOUNDS.1 - SIGMA_BOUNDS.0) * (GAMMA_BOUNDS.1 - GAMMA_BOUNDS.0)).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn initial_proposal_sample<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn transition_proposal_sample<R: Rng + ?Sized>(
        &self,
        x_prev: &f64,
        _theta: &[f64],
        _t: usize,
        _observed: &[SnSample],
        rng: &mut R,
    ) -> f64 {
        x_prev + rng.sample::<f64, _>(StandardNormal)
    }

    fn emission_simulate<R: Rng + ?Sized>(&self, x: &f64, theta: &[f64], _t: usize, rng: &mut R) -> SnSample {
        let p = SkewNormalParams { mu: *x, sigma: theta[0], gamma: theta[1] };
        let delta = p.delta();
        let rest = (1.0 - delta * delta).sqrt();
        // Same draw order as `simulate_summary`.
        let values: Vec<f64> = (0..self.obs_per_step)
            .map(|_| {
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                p.mu + p.sigma * (delta * u0.abs() + rest * u1)
            })
            .collect();
        let summary = skew_ssm_summaries(&values).unwrap_or([f64::NAN; 3]);
        SnSample { values, summary }
    }

    fn distance(&self, simulated: &SnSample, observed: &SnSample, _t: usize) -> f64 {
        let d = weighted_distance(&simulated.summary, &observed.summary, &self.summary_weights);
        if d.is_nan() { f64::INFINITY } else { d }
    }

    fn simulate_distance<R: Rng + ?Sized>(
        &self,
        x: &f64,
        theta: &[f64],
        _t: usize,
        observed: &SnSample,
        rng: &mut R,
    ) -> f64 {
        let s = self.simulate_summary(*x, theta, rng);
        weighted_distance(&s, &observed.summary, &self.summary_weights)
    }

    fn to_working(&self, theta: &[f64]) -> Vec<f64> {
        vec![
            bounded_to_working(theta[0], SIGMA_BOUNDS),
            bounded_to_working(theta[1], GAMMA_BOUNDS),
        ]
    }

    fn kernel_propose<R: Rng + ?Sized>(&self, theta: &[f64], stats: &CloudStatistics, rng: &mut R) -> ParamVector {
        let w = gaussian_step(&self.to_working(theta), &stats.covariance, self.kernel_c, rng);
        vec![
            bounded_from_working(w[0], SIGMA_BOUNDS),
            bounded_from_working(w[1], GAMMA_BOUNDS),
        ]
    }

    fn kernel_log_ratio(&self, proposed: &[f64], current: &[f64]) -> f64 {
        (bounded_log_jacobian(proposed[0], SIGMA_BOUNDS) - bounded_log_jacobian(current[0], SIGMA_BOUNDS))
            + (bounded_log_jacobian(proposed[1], GAMMA_BOUNDS) - bounded_log_jacobian(current[1], GAMMA_BOUNDS))
    }

    fn weight_ratio_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn state_summary(&self, x: &f64) -> f64 {
        *x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::skewness_stat;

    fn model() -> SkewNormalSsm {
        SkewNormalSsm::new(100, [1.0, 2.0, 3.0], 1.0).unwrap()
    }

    #[test]
    fn hand_summaries() {
        let s = skew_ssm_summaries(&[0.0, 0.0, 3.0]).unwrap();
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 3f64.sqrt()).abs() < 1e-12);
        assert!((s[2] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(skew_ssm_summaries(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn shift_moves_only_the_mean() {
        let y = [0.3, -1.0, 2.2, 0.7, 0.1];
        let a = skew_ssm_summaries(&y).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 4.5).collect();
        let b = skew_ssm_summaries(&shifted).unwrap();
        assert!((b[0] - a[0] - 4.5).abs() < 1e-12);
        assert!((b[1] - a[1]).abs() < 1e-12);
        assert!((b[2] - a[2]).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let m = model();
        let s = SnSample::new(vec![0.1, 0.5, -0.3, 1.1]).unwrap();
        assert_eq!(m.distance(&s, &s.clone(), 1), 0.0);
    }

    #[test]
    fn streaming_summary_matches_materialized_batch() {
        let m = model();
        let f = StreamFactory::new(4);
        let obs = SnSample::new(vec![0.0, 1.0, 0.2, 0.4]).unwrap();
        for k in 0..50 {
            let theta = [0.3, 2.5];
            let a = m.simulate_distance(&1.7, &theta, 1, &obs, &mut f.stream(Purpose::Validation, &[k]));
            let sim = m.emission_simulate(&1.7, &theta, 1, &mut f.stream(Purpose::Validation, &[k]));
            let b = m.distance(&sim, &obs, 1);
            assert!((a - b).abs() < 1e-9 * (1.0 + b), "{a} {b}");
            assert!((sim.summary[2] - skewness_stat(&sim.values).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn pilot_weights_are_reproducible_and_positive() {
        let a = pilot_summary_weights(100, 300, 1).unwrap();
        let b = pilot_summary_weights(100, 300, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn kernel_stays_in_support_and_ratio_vanishes_at_identity() {
        let m = model();
        let stats = CloudStatistics { mean: vec![0.0, 0.0], covariance: vec![vec![4.0, 0.0], vec![0.0, 4.0]] };
        let mut rng = StreamFactory::new(1).stream(Purpose::Validation, &[0]);
        for _ in 0..1000 {
            let p = m.kernel_propose(&[0.25, 2.0], &stats, &mut rng);
            assert!(m.prior_log_density(&p).is_finite());
        }
        assert_eq!(m.kernel_log_ratio(&[0.25, 2.0], &[0.25, 2.0]), 0.0);
    }

    #[test]
    fn kernel_leaves_the_prior_invariant() {
        // MH on the prior alone with this kernel must keep the prior.
        let m = model();
        let stats = CloudStatistics { mean: vec![0.0, 0.0], covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        let mut rng = StreamFactory::new(2).stream(Purpose::Validation, &[0]);
        let mut theta = vec![0.45, 0.5];
        let (mut below_sigma, mut below_gamma, n) = (0usize, 0usize, 200_000);
        for _ in 0..n {
            let p = m.kernel_propose(&theta, &stats, &mut rng);
            let log_a = m.prior_log_density(&p) - m.prior_log_density(&theta) + m.kernel_log_ratio(&p, &theta);
            if rng.gen::<f64>().ln() < log_a {
                theta = p;
            }
            below_sigma += (theta[0] < 0.2) as usize;
            below_gamma += (theta[1] < 1.0) as usize;
        }
        let fs = below_sigma as f64 / n as f64;
        let fg = below_gamma as f64 / n as f64;
        assert!((fs - 0.25).abs() < 0.02, "{fs}");
        assert!((fg - 0.8 / 3.8).abs() < 0.02, "{fg}");
    }
}
