//! Independent reference computations used to check the engine.

pub mod compensator;
pub mod grid;
pub mod kalman;
pub mod ks;
pub mod toy;

use crate::engine::ThetaCloud;

/// Unnormalized estimate, its normalizer and their ratio for a test function
/// of `(state, theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorTriple {
    pub phi_check: f64,
    pub omega: f64,
    pub phi_hat: Option<f64>,
}

impl EstimatorTriple {
    /// `phi_check = N_theta^-1 sum_m Z^m sum_n W^{m,n} phi(x^{m,n}, theta^m)`
    /// and `omega` the same with `phi = 1`, using the unscaled `Z`.
    pub fn from_cloud<S, F: Fn(&S, &[f64]) -> f64>(cloud: &ThetaCloud<S>, phi: F) -> Self {
        let n = cloud.particles.len() as f64;
        let mut phi_check = 0.0;
        let mut omega = 0.0;
        for (m, p) in cloud.particles.iter().enumerate() {
            let z = cloud.unscaled_weight(m);
            if z == 0.0 {
                continue;
            }
            for (x, w) in p.states.states.iter().zip(&p.states.weights) {
                phi_check += z * w * phi(x, &p.theta);
                omega += z * w;
            }
        }
        Self::new(phi_check / n, omega / n)
    }

    pub fn new(phi_check: f64, omega: f64) -> Self {
        let phi_hat = (omega > 0.0).then(|| phi_check / omega);
        Self { phi_check, omega, phi_hat }
    }

    /// The estimate when every theta-particle died.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }
}
