//! Stochastic volatility with stable innovations.
//!
//! `x_t | x_{t-1} ~ N(mu + theta x_{t-1}, sigma_h^2)`, `y_t = exp(x_t / 2) v_t`
//! with `v_t` stable. Only the AR coefficient `theta` is unknown; `x_1` is
//! drawn from the stationary law of the AR(1) chain.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{
    ar1_step, normal_cdf, normal_inv_cdf, normal_log_pdf, sample_stable, Ar1Params, StableParams,
};
use crate::error::{Error, Result};
use crate::model::{CloudStatistics, Model, ParamVector};

/// The constants of the model that are not inferred.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvKnown {
    pub mu: f64,
    pub sigma_h: f64,
    pub stable: StableParams,
}

impl Default for SvKnown {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma_h: 0.5,
            stable: StableParams { alpha: 1.8, beta: 0.0, gamma: 1.0, delta: 0.0 },
        }
    }
}

impl SvKnown {
    /// The stable law is Gaussian and symmetric, so the emission density
    /// is available in closed form.
    pub fn is_gaussian_case(&self) -> bool {
        self.stable.alpha == 2.0 && self.stable.beta == 0.0
    }

    fn ar1(&self, theta: f64) -> Ar1Params {
        Ar1Params { phi: theta, sigma: self.sigma_h, intercept: self.mu }
    }

    /// Draw `x_1` from the stationary law for `theta`.
    pub fn initial_state<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        let (m, s) = self.ar1(theta).stationary().unwrap_or((self.mu, self.sigma_h));
        m + s * rng.sample::<f64, _>(StandardNormal)
    }

    pub fn transition<R: Rng + ?Sized>(&self, x: f64, theta: f64, rng: &mut R) -> f64 {
        ar1_step(x, &self.ar1(theta), rng)
    }
}

pub fn sv_distance(y_sim: f64, y_obs: f64) -> f64 {
    (y_sim - y_obs).abs()
}

/// `xi = Phi^-1((theta + 1) / 2)`.
pub fn to_xi(theta: f64) -> f64 {
    normal_inv_cdf((theta + 1.0) / 2.0)
}

pub fn from_xi(xi: f64) -> f64 {
    2.0 * normal_cdf(xi) - 1.0
}

/// Random walk on `xi` with standard deviation `c * sigma_xi_hat`. Returns
/// the proposal and `ln K(theta | proposed) - ln K(proposed | theta)`.
pub fn sv_kernel<R: Rng + ?Sized>(theta: f64, c: f64, sigma_xi_hat: f64, rng: &mut R) -> (f64, f64) {
    let xi = to_xi(theta);
    let proposed = from_xi(xi + c * sigma_xi_hat * rng.sample::<f64, _>(StandardNormal));
    (proposed, sv_kernel_log_ratio(proposed, theta))
}

/// `ln phi(xi(proposed)) - ln phi(xi(current))`: the density of `theta` under
/// the walk on `xi` carries the Jacobian `1 / (2 phi(xi))`.
pub fn sv_kernel_log_ratio(proposed: f64, current: f64) -> f64 {
    normal_log_pdf(to_xi(proposed)) - normal_log_pdf(to_xi(current))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StableVolModel {
    pub known: SvKnown,
    pub kernel_c: f64,
}

impl StableVolModel {
    pub fn new(known: SvKnown, kernel_c: f64) -> Result<Self> {
        let s = known.stable;
        StableParams::new(s.alpha, s.beta, s.gamma, s.delta)?;
        if !(known.sigma_h > 0.0) || !known.mu.is_finite() {
            return Err(Error::Domain("sv needs sigma_h > 0 and finite mu".into()));
        }
        if !(kernel_c > 0.0) {
            return Err(Error::Domain("kernel_c must be positive".into()));
        }
        Ok(Self { known, kernel_c })
    }
}

impl Model for StableVolModel {
    type State = f64;
    type Data = f64;

    fn name(&self) -> &str {
        "sv"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        vec![rng.gen_range(-1.0..1.0)]
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        if theta[0] > -1.0 && theta[0] < 1.0 {
            0.5f64.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn initial_proposal_sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> f64 {
        self.known.initial_state(theta[0], rng)
    }

    fn transition_proposal_sample<R: Rng + ?Sized>(
        &self,
        x_prev: &f64,
        theta: &[f64],
        _t: usize,
        _observed: &[f64],
        rng: &mut R,
    ) -> f64 {
        self.known.transition(*x_prev, theta[0], rng)
    }

    fn emission_simulate<R: Rng + ?Sized>(&self, x: &f64, _theta: &[f64], _t: usize, rng: &mut R) -> f64 {
        (0.5 * x).exp() * sample_stable(&self.known.stable, rng)
    }

    fn distance(&self, simulated: &f64, observed: &f64, _t: usize) -> f64 {
        sv_distance(*simulated, *observed)
    }

    fn to_working(&self, theta: &[f64]) -> Vec<f64> {
        vec![to_xi(theta[0])]
    }

    fn kernel_propose<R: Rng + ?Sized>(&self, theta: &[f64], stats: &CloudStatistics, rng: &mut R) -> ParamVector {
        vec![sv_kernel(theta[0], self.kernel_c, stats.std_dev(0), rng).0]
    }

    fn kernel_log_ratio(&self, proposed: &[f64], current: &[f64]) -> f64 {
        sv_kernel_log_ratio(proposed[0], current[0])
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
    use crate::rng::{Purpose, StreamFactory};

    #[test]
    fn distance_examples() {
        assert_eq!(sv_distance(3.0, 3.0), 0.0);
        assert_eq!(sv_distance(1.0, -2.0), 3.0);
        let mut rng = StreamFactory::new(1).stream(Purpose::Validation, &[0]);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            assert_eq!(sv_distance(a, b), sv_distance(b, a));
        }
    }

    #[test]
    fn xi_map() {
        assert_eq!(to_xi(0.0), 0.0);
        for t in [-0.9, -0.2, 0.5, 0.95] {
            assert!((from_xi(to_xi(t)) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_ratio_by_density_evaluation() {
        assert_eq!(sv_kernel_log_ratio(0.3, 0.3), 0.0);
        // phi(Phi^-1(0.75)) / phi(0) with Phi^-1(0.75) = 0.6744897501960817.
        let z = 0.674_489_750_196_081_7f64;
        let expected = (-0.5 * z * z).exp();
        assert!((sv_kernel_log_ratio(0.5, 0.0).exp() - expected).abs() < 1e-9);
    }

    #[test]
    fn kernel_ratio_matches_numerical_proposal_density() {
        // K(b | a) on the theta scale by differentiating the proposal CDF.
        let s = 0.4;
        let density = |to: f64, from: f64| {
            let h = 1e-6;
            let cdf = |v: f64| normal_cdf((to_xi(v) - to_xi(from)) / s);
            (cdf(to + h) - cdf(to - h)) / (2.0 * h)
        };
        for (p, c) in [(0.5, 0.0), (-0.7, 0.2), (0.9, 0.85)] {
            let numeric = (density(c, p) / density(p, c)).ln();
            assert!((numeric - sv_kernel_log_ratio(p, c)).abs() < 1e-5, "{p} {c}");
        }
    }

    #[test]
    fn kernel_leaves_uniform_prior_invariant() {
        let m = StableVolModel::new(SvKnown::default(), 0.1).unwrap();
        let stats = CloudStatistics { mean: vec![0.0], covariance: vec![vec![100.0]] };
        let mut rng = StreamFactory::new(2).stream(Purpose::Validation, &[0]);
        let mut theta = vec![0.0];
        let (mut hi, n) = (0usize, 400_000);
        for _ in 0..n {
            let p = m.kernel_propose(&theta, &stats, &mut rng);
            let log_a = m.prior_log_density(&p) - m.prior_log_density(&theta) + m.kernel_log_ratio(&p, &theta);
            if rng.gen::<f64>().ln() < log_a {
                theta = p;
            }
            hi += (theta[0] > 0.8) as usize;
        }
        let f = hi as f64 / n as f64;
        assert!((f - 0.1).abs() < 0.015, "{f}");
    }

    #[test]
    fn symmetric_emission_sign() {
        let m = StableVolModel::new(SvKnown::default(), 0.1).unwrap();
        let mut rng = StreamFactory::new(3).stream(Purpose::Validation, &[0]);
        let n = 100_000;
        let pos = (0..n).filter(|_| m.emission_simulate(&0.4, &[0.5], 1, &mut rng) > 0.0).count();
        let frac = pos as f64 / n as f64;
        assert!((frac - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn gaussian_case_flag() {
        let mut k = SvKnown::default();
        assert!(!k.is_gaussian_case());
        k.stable.alpha = 2.0;
        assert!(k.is_gaussian_case());
    }
}
