//! What the engine needs from a model, and the run configuration.

use std::fmt;

use rand::Rng;

/// Static parameters of a model, in the model's natural scale.
pub type ParamVector = Vec<f64>;

/// Weighted mean and covariance (maximum-likelihood normalization) of the
/// theta-cloud on the model's working scale. Passed to rejuvenation kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudStatistics {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl CloudStatistics {
    pub fn from_weighted(points: &[Vec<f64>], weights: &[f64]) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let total: f64 = weights.iter().sum();
        let mut mean = vec![0.0; dim];
        for (p, &w) in points.iter().zip(weights) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += w * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut covariance = vec![vec![0.0; dim]; dim];
        for (p, &w) in points.iter().zip(weights) {
            for i in 0..dim {
                for j in 0..dim {
                    covariance[i][j] += w * (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        covariance
            .iter_mut()
            .flatten()
            .for_each(|c| *c /= total);
        Self { mean, covariance }
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }
}

/// A state space model the engine can run without knowing its internals.
///
/// All randomness comes through the `rng` argument; implementations must be
/// safe for concurrent read-only use.
///
/// `observed` slices passed to the transition are the observations
/// `y_1..y_{t-1}` preceding the step being proposed.
pub trait Model: Sync {
    type State: Clone + Send + Sync;
    type Data: Send + Sync;

    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector;
    /// `-inf` outside the prior support.
    fn prior_log_density(&self, theta: &[f64]) -> f64;

    fn initial_proposal_sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Self::State;

    /// `p(x_1 | theta) / q_1(x_1 | theta)`.
    fn initial_weight_ratio(&self, _x: &Self::State, _theta: &[f64]) -> f64 {
        1.0
    }

    fn transition_proposal_sample<R: Rng + ?Sized>(
        &self,
        x_prev: &Self::State,
        theta: &[f64],
        t: usize,
        observed: &[Self::Data],
        rng: &mut R,
    ) -> Self::State;

    /// `p(x_t | x_{t-1}, theta) / q_t(x_t | x_{t-1}, theta)`.
    fn transition_weight_ratio(
        &self,
        _x_new: &Self::State,
        _x_prev: &Self::State,
        _theta: &[f64],
        _t: usize,
    ) -> f64 {
        1.0
    }

    /// Upper bound on every initial and transition weight ratio, if one is
    /// known. Models that propose from their own dynamics return `Some(1.0)`.
    /// Lets rejuvenation abandon hopeless proposals early.
    fn weight_ratio_bound(&self) -> Option<f64> {
        None
    }

    fn emission_simulate<R: Rng + ?Sized>(
        &self,
        x: &Self::State,
        theta: &[f64],
        t: usize,
        rng: &mut R,
    ) -> Self::Data;

    /// Distance between summaries of a simulated and an observed dataset.
    fn distance(&self, simulated: &Self::Data, observed: &Self::Data, t: usize) -> f64;

    /// Simulate one dataset and return its distance to `observed`. Models
    /// override this to skip building the full simulated dataset.
    fn simulate_distance<R: Rng + ?Sized>(
        &self,
        x: &Self::State,
        theta: &[f64],
        t: usize,
        observed: &Self::Data,
        rng: &mut R,
    ) -> f64 {
        let sim = self.emission_simulate(x, theta, t, rng);
        self.distance(&sim, observed, t)
    }

    /// Map to the scale on which [`CloudStatistics`] are computed.
    fn to_working(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn kernel_propose<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        stats: &CloudStatistics,
        rng: &mut R,
    ) -> ParamVector;

    /// Log of the proposal correction `K(theta | proposed) / K(proposed | theta)`
    /// that enters the Metropolis-Hastings acceptance ratio.
    fn kernel_log_ratio(&self, proposed: &[f64], current: &[f64]) -> f64;

    /// Scalar view of a state used for filtering summaries.
    fn state_summary(&self, x: &Self::State) -> f64;

    /// Simulate `(y_1..y_T)` and the state summaries along the path. The
    /// default runs the proposals, which is exact for models whose
    /// proposals are their transition densities (weight ratios all 1).
    fn simulate_series<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        horizon: usize,
        rng: &mut R,
    ) -> (Vec<Self::Data>, Vec<f64>) {
        let mut data = Vec::with_capacity(horizon);
        let mut truth = Vec::with_capacity(horizon);
        let mut x = self.initial_proposal_sample(theta, rng);
        for t in 1..=horizon {
            if t > 1 {
                x = self.transition_proposal_sample(&x, theta, t, &data, rng);
            }
            truth.push(self.state_summary(&x));
            data.push(self.emission_simulate(&x, theta, t, rng));
        }
        (data, truth)
    }
}

/// Sizes and tuning of one inference run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_theta: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub p_acc: f64,
    /// Degeneracy threshold as a fraction of `n_theta`.
    pub ess_fraction: f64,
    pub seed: u64,
    pub horizon: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_theta: 500,
            n_x: 100,
            n_y: 10,
            p_acc: 0.05,
            ess_fraction: 0.5,
            seed: 1,
            horizon: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigViolation {
    pub key: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

pub fn validate_config(cfg: &RunConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let mut at_least_one = |key: &'static str, v: usize| {
        if v < 1 {
            out.push(ConfigViolation { key, message: format!("must be >= 1 (got {v})") });
        }
    };
    at_least_one("n_theta", cfg.n_theta);
    at_least_one("n_x", cfg.n_x);
    at_least_one("n_y", cfg.n_y);
    at_least_one("horizon", cfg.horizon);
    if !(cfg.p_acc > 0.0 && cfg.p_acc <= 1.0) {
        out.push(ConfigViolation {
            key: "p_acc",
            message: format!("must lie in (0, 1] (got {})", cfg.p_acc),
        });
    }
    if !(cfg.ess_fraction > 0.0 && cfg.ess_fraction <= 1.0) {
        out.push(ConfigViolation {
            key: "ess_fraction",
            message: format!("must lie in (0, 1] (got {})", cfg.ess_fraction),
        });
    }
    out
}
