//! The three example models and their data simulators.

pub mod hawkes;
pub mod skew_normal;
pub mod stochastic_volatility;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{inv_logit, SkewNormalParams, StableParams};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{Purpose, StreamFactory};

pub use hawkes::{EventSeries, HawkesKnown, HawkesModel, HawkesState};
pub use skew_normal::{SkewNormalSsm, SnSample};
pub use stochastic_volatility::{StableVolModel, SvKnown};

/// Ridge added to a covariance that fails its Cholesky factorization.
pub const COVARIANCE_RIDGE: f64 = 1e-8;

/// `mean + chol(c * cov) z` with `z` standard normal.
pub fn gaussian_step<R: Rng + ?Sized>(mean: &[f64], cov: &[Vec<f64>], c: f64, rng: &mut R) -> Vec<f64> {
    let d = mean.len();
    let m = DMatrix::from_fn(d, d, |i, j| c * cov[i][j]);
    let chol = m.clone().cholesky().or_else(|| {
        warn!("kernel covariance not positive definite; adding ridge {COVARIANCE_RIDGE}");
        (m + DMatrix::identity(d, d) * COVARIANCE_RIDGE).cholesky()
    });
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    match chol {
        Some(ch) => {
            let step = ch.l() * z;
            mean.iter().zip(step.iter()).map(|(m, s)| m + s).collect()
        }
        None => mean.to_vec(),
    }
}

/// `logit((v - a) / (b - a))`.
pub fn bounded_to_working(v: f64, (a, b): (f64, f64)) -> f64 {
    ((v - a) / (b - v)).ln()
}

pub fn bounded_from_working(w: f64, (a, b): (f64, f64)) -> f64 {
    a + (b - a) * inv_logit(w)
}

/// `ln((v - a)(b - v))`, the log inverse Jacobian of the logit map up to a
/// constant.
pub fn bounded_log_jacobian(v: f64, (a, b): (f64, f64)) -> f64 {
    ((v - a) * (b - v)).ln()
}

/// Names accepted by [`simulate_dataset`] and the configuration loader.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleModel {
    SkewNormal,
    StochasticVolatility,
    Hawkes,
}

impl ExampleModel {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "skew_normal" => Ok(Self::SkewNormal),
            "sv" => Ok(Self::StochasticVolatility),
            "hawkes" => Ok(Self::Hawkes),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SkewNormal => "skew_normal",
            Self::StochasticVolatility => "sv",
            Self::Hawkes => "hawkes",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Self::SkewNormal => &["sigma", "gamma"],
            Self::StochasticVolatility => &["theta"],
            Self::Hawkes => &["theta1", "theta2"],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimulatedData {
    SkewNormal(Vec<SnSample>),
    StochasticVolatility(Vec<f64>),
    Hawkes(Vec<EventSeries>),
}

impl SimulatedData {
    pub fn len(&self) -> usize {
        match self {
            Self::SkewNormal(d) => d.len(),
            Self::StochasticVolatility(d) => d.len(),
            Self::Hawkes(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Observations and the latent truth (`x_t`, or `ell_t` for Hawkes).
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedDataset {
    pub data: SimulatedData,
    pub truth: Vec<f64>,
}

/// Simulate from an example model with default known constants.
pub fn simulate_dataset(name: &str, params: &[f64], horizon: usize, seed: u64) -> Result<SimulatedDataset> {
    let which = ExampleModel::parse(name)?;
    let expected = which.param_names().len();
    if params.len() != expected {
        return Err(Error::Domain(format!("{name} takes {expected} parameters, got {}", params.len())));
    }
    match which {
        ExampleModel::SkewNormal => simulate_skew_normal(params, 100, horizon, seed),
        ExampleModel::StochasticVolatility => simulate_sv(&SvKnown::default(), params, horizon, seed),
        ExampleModel::Hawkes => simulate_hawkes(&HawkesKnown::default(), params, horizon, seed),
    }
}

pub fn simulate_skew_normal(params: &[f64], obs_per_step: usize, horizon: usize, seed: u64) -> Result<SimulatedDataset> {
    SkewNormalParams::new(0.0, params[0], params[1])?;
    let model = SkewNormalSsm::new(obs_per_step, [1.0; 3], 1.0)?;
    let mut rng = StreamFactory::new(seed).stream(Purpose::Data, &[0]);
    let (data, truth) = model.simulate_series(params, horizon, &mut rng);
    Ok(SimulatedDataset { data: SimulatedData::SkewNormal(data), truth })
}

pub fn simulate_sv(known: &SvKnown, params: &[f64], horizon: usize, seed: u64) -> Result<SimulatedDataset> {
    if !(params[0] > -1.0 && params[0] < 1.0) {
        return Err(Error::Domain(format!("sv theta must lie in (-1, 1), got {}", params[0])));
    }
    StableParams::new(known.stable.alpha, known.stable.beta, known.stable.gamma, known.stable.delta)?;
    let model = StableVolModel::new(*known, 0.1)?;
    let mut rng = StreamFactory::new(seed).stream(Purpose::Data, &[0]);
    let (data, truth) = model.simulate_series(params, horizon, &mut rng);
    Ok(SimulatedDataset { data: SimulatedData::StochasticVolatility(data), truth })
}

pub fn simulate_hawkes(known: &HawkesKnown, params: &[f64], horizon: usize, seed: u64) -> Result<SimulatedDataset> {
    if !(params[0] >= 0.0 && params[1] > 0.0) {
        return Err(Error::Domain("hawkes needs theta1 >= 0 and theta2 > 0".into()));
    }
    let mut rng = StreamFactory::new(seed).stream(Purpose::Data, &[0]);
    let (data, truth) = hawkes::simulate_series(known, params, horizon, &mut rng);
    Ok(SimulatedDataset { data: SimulatedData::Hawkes(data), truth })
}
