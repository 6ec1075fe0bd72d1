//! Reference posterior for the Gaussian special case of the stochastic
//! volatility model, from exact-emission bootstrap filters on a grid.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::stochastic_volatility::SvKnown;
use crate::particle::{multinomial_resample, normalize_in_place};
use crate::rng::{Purpose, StreamFactory};

/// `ln p(y | x)` when the stable law is `N(delta, 2 gamma^2)`.
fn gaussian_emission_log_density(known: &SvKnown, x: f64, y: f64) -> f64 {
    let s = known.stable;
    let scale = (0.5 * x).exp();
    let var = 2.0 * s.gamma * s.gamma * scale * scale;
    let r = y - scale * s.delta;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// Bootstrap particle filter estimate of `ln p(y_{1:T} | theta)`.
pub fn bootstrap_log_likelihood(known: &SvKnown, theta: f64, y: &[f64], n_pf: usize, streams: &StreamFactory, index: u64) -> Result<f64> {
    if !known.is_gaussian_case() {
        return Err(Error::Unsupported("exact emission needs alpha = 2 and beta = 0".into()));
    }
    let mut rng = streams.stream(Purpose::Validation, &[index]);
    let mut x: Vec<f64> = (0..n_pf).map(|_| known.initial_state(theta, &mut rng)).collect();
    let mut ll = 0.0;
    for (t, &obs) in y.iter().enumerate() {
        if t > 0 {
            let w = normalize_log_weights(&x, known, y[t - 1]);
            let idx = multinomial_resample(&w, n_pf, &mut rng)?;
            x = idx.iter().map(|&i| known.transition(x[i], theta, &mut rng)).collect();
        }
        let logw: Vec<f64> = x.iter().map(|&v| gaussian_emission_log_density(known, v, obs)).collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = logw.iter().map(|l| (l - max).exp()).sum::<f64>() / n_pf as f64;
        ll += max + mean.ln();
    }
    Ok(ll)
}

fn normalize_log_weights(x: &[f64], known: &SvKnown, obs: f64) -> Vec<f64> {
    let logw: Vec<f64> = x.iter().map(|&v| gaussian_emission_log_density(known, v, obs)).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    normalize_in_place(&mut w);
    w
}

/// Normalized posterior masses on `grid` under the uniform prior on
/// `(-1, 1)`.
pub fn grid_reference_posterior(known: &SvKnown, y: &[f64], grid: &[f64], n_pf: usize, seed: u64) -> Result<Vec<f64>> {
    if !known.is_gaussian_case() {
        return Err(Error::Unsupported(format!(
            "grid reference needs alpha = 2 and beta = 0 (got alpha = {}, beta = {})",
            known.stable.alpha, known.stable.beta
        )));
    }
    if grid.is_empty() || n_pf == 0 {
        return Err(Error::Domain("grid and particle count must be nonempty".into()));
    }
    let streams = StreamFactory::new(seed);
    let log_post: Vec<f64> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            if theta > -1.0 && theta < 1.0 {
                bootstrap_log_likelihood(known, theta, y, n_pf, &streams, i as u64)
            } else {
                Ok(f64::NEG_INFINITY)
            }
        })
        .collect::<Result<_>>()?;
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("no grid point inside the prior support".into()));
    }
    let mut masses: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    normalize_in_place(&mut masses);
    Ok(masses)
}

/// Midpoints of `n` equal cells covering `(-1, 1)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::StableParams;
    use crate::models::simulate_sv;
    use crate::models::SimulatedData;

    fn gaussian_known(sigma_h: f64) -> SvKnown {
        SvKnown { mu: 0.0, sigma_h, stable: StableParams { alpha: 2.0, beta: 0.0, gamma: 1.0, delta: 0.0 } }
    }

    fn data(known: &SvKnown, horizon: usize) -> Vec<f64> {
        match simulate_sv(known, &[0.7], horizon, 3).unwrap().data {
            SimulatedData::StochasticVolatility(y) => y,
            _ => unreachable!(),
        }
    }

    #[test]
    fn refuses_non_gaussian() {
        let known = SvKnown::default();
        assert!(matches!(
            grid_reference_posterior(&known, &[0.1], &[0.0], 10, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_point_has_unit_mass() {
        let known = gaussian_known(0.5);
        assert_eq!(grid_reference_posterior(&known, &[0.3, -0.2], &[0.1], 100, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn degenerate_state_gives_prior() {
        // With sigma_h tiny the state sits at 0 whatever theta is.
        let known = gaussian_known(1e-9);
        let y = data(&known, 10);
        let grid = uniform_grid(10);
        let masses = grid_reference_posterior(&known, &y, &grid, 200, 1).unwrap();
        for m in masses {
            assert!((m - 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_for_one_observation() {
        // y_1 | theta ~ N(0, 2 exp(x)) with x ~ N(0, s^2): one-dimensional
        // quadrature gives the likelihood without any particle filter.
        let known = gaussian_known(0.5);
        let y = [1.3];
        let theta = 0.4;
        let s2 = 0.25 / (1.0 - theta * theta);
        let h = 1e-3;
        let exact: f64 = (-10_000..=10_000)
            .map(|i| {
                let x = i as f64 * h;
                let prior = (-0.5 * x * x / s2).exp() / (2.0 * PI * s2).sqrt();
                prior * gaussian_emission_log_density(&known, x, y[0]).exp() * h
            })
            .sum();
        let est = bootstrap_log_likelihood(&known, theta, &y, 200_000, &StreamFactory::new(1), 0).unwrap();
        assert!((est - exact.ln()).abs() < 0.01, "{est} vs {}", exact.ln());
    }

    #[test]
    fn posterior_mean_stable_across_seeds() {
        let known = gaussian_known(0.5);
        let y = data(&known, 20);
        let grid = uniform_grid(40);
        let mean = |seed| {
            let m = grid_reference_posterior(&known, &y, &grid, 10_000, seed).unwrap();
            m.iter().zip(&grid).map(|(w, g)| w * g).sum::<f64>()
        };
        let (a, b) = (mean(1), mean(2));
        assert!((a - b).abs() < 0.02, "{a} {b}");
    }
}
