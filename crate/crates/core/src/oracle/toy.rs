//! A finite state space model small enough to enumerate exactly.
//!
//! Parameters, states and observations are indices into small alphabets.
//! A parameter vector is the single-element `[k as f64]` for index `k`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CloudStatistics, Model, ParamVector};

type Table = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
pub struct DiscreteToySsm {
    pub prior: Vec<f64>,
    /// `initial[k][x] = p(x_1 = x | theta_k)`.
    pub initial: Table,
    /// `transition[k][x][x'] = p(x_t = x' | x_{t-1} = x, theta_k)`.
    pub transition: Vec<Table>,
    /// `emission[k][x][y] = p(y | x, theta_k)`.
    pub emission: Vec<Table>,
    /// `distance[simulated][observed]`.
    pub distance: Table,
    /// Optional importance proposals in place of the model dynamics.
    pub initial_proposal: Option<Table>,
    pub transition_proposal: Option<Vec<Table>>,
    /// Maximum number of `(theta, x_{1:t}, y~_{1:t})` paths enumerated.
    pub path_budget: u128,
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn check_rows(name: &str, rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        let s: f64 = row.iter().sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("{name}: row {row:?} is not a distribution")));
        }
    }
    Ok(())
}

impl DiscreteToySsm {
    /// Two parameters, three states, four observation symbols. Symbol 3 is
    /// never emitted.
    pub fn example() -> Self {
        let abs_diff = (0..4)
            .map(|a| (0..4).map(|b| (a as f64 - b as f64).abs()).collect())
            .collect();
        Self {
            prior: vec![0.4, 0.6],
            initial: vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]],
            transition: vec![
                vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.6, 0.2], vec![0.1, 0.2, 0.7]],
                vec![vec![0.3, 0.4, 0.3], vec![0.3, 0.4, 0.3], vec![0.1, 0.1, 0.8]],
            ],
            emission: vec![
                vec![vec![0.6, 0.3, 0.1, 0.0], vec![0.2, 0.6, 0.2, 0.0], vec![0.1, 0.3, 0.6, 0.0]],
                vec![vec![0.8, 0.1, 0.1, 0.0], vec![0.1, 0.8, 0.1, 0.0], vec![0.3, 0.3, 0.4, 0.0]],
            ],
            distance: abs_diff,
            initial_proposal: None,
            transition_proposal: None,
            path_budget: 100_000,
        }
    }

    /// [`example`](Self::example) with proposals that differ from the
    /// dynamics, so weight ratios are not identically one.
    pub fn example_with_proposals() -> Self {
        let mut toy = Self::example();
        toy.initial_proposal = Some(vec![vec![1.0 / 3.0; 3], vec![0.25, 0.5, 0.25]]);
        let q = vec![vec![0.4, 0.3, 0.3], vec![0.3, 0.4, 0.3], vec![0.3, 0.3, 0.4]];
        toy.transition_proposal = Some(vec![q.clone(), q]);
        toy
    }

    pub fn validate(&self) -> Result<()> {
        check_rows("prior", std::slice::from_ref(&self.prior))?;
        check_rows("initial", &self.initial)?;
        for k in 0..self.prior.len() {
            check_rows("transition", &self.transition[k])?;
            check_rows("emission", &self.emission[k])?;
        }
        if let Some(q) = &self.initial_proposal {
            check_rows("initial proposal", q)?;
        }
        if let Some(q) = &self.transition_proposal {
            q.iter().try_for_each(|t| check_rows("transition proposal", t))?;
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.prior.len()
    }

    pub fn n_states(&self) -> usize {
        self.initial[0].len()
    }

    pub fn n_symbols(&self) -> usize {
        self.distance.len()
    }

    fn index(theta: &[f64]) -> usize {
        theta[0] as usize
    }

    fn q_initial(&self, k: usize) -> &[f64] {
        self.initial_proposal.as_ref().map_or(&self.initial[k], |q| &q[k])
    }

    fn q_transition(&self, k: usize, x: usize) -> &[f64] {
        self.transition_proposal
            .as_ref()
            .map_or(&self.transition[k][x], |q| &q[k][x])
    }

    /// Probability that a simulated symbol from state `x` lies within `eps`
    /// of `y`.
    pub fn acceptance_probability(&self, k: usize, x: usize, y: usize, eps: f64) -> f64 {
        self.emission[k][x]
            .iter()
            .enumerate()
            .filter(|&(s, _)| self.distance[s][y] <= eps)
            .map(|(_, p)| p)
            .sum()
    }

    /// Exact `(numerator, normalizer)` of the ABC target at time `t = y.len()`
    /// by summing over every `(theta, x_{1:t}, y~_{1:t})` path. `phi` takes
    /// `(x_t, k)`.
    pub fn enumerate_target<F: Fn(usize, usize) -> f64>(
        &self,
        y: &[usize],
        eps: &[f64],
        phi: F,
    ) -> Result<(f64, f64)> {
        let t = y.len();
        if eps.len() != t || t == 0 {
            return Err(Error::Domain("need one threshold per observation".into()));
        }
        let per_step = (self.n_states() * self.n_symbols()) as u128;
        let paths = (self.n_params() as u128).saturating_mul(per_step.saturating_pow(t as u32));
        if paths > self.path_budget {
            return Err(Error::EnumerationBudget { paths, budget: self.path_budget });
        }
        let (nx, ny) = (self.n_states(), self.n_symbols());
        let mut numerator = 0.0;
        let mut normalizer = 0.0;
        let mut digits = vec![0usize; 2 * t];
        for k in 0..self.n_params() {
            digits.iter_mut().for_each(|d| *d = 0);
            'paths: loop {
                // digits = [x_1, y~_1, x_2, y~_2, ...]
                let mut mass = self.prior[k];
                let mut prev = 0;
                for s in 0..t {
                    let (x, sim) = (digits[2 * s], digits[2 * s + 1]);
                    mass *= if s == 0 { self.initial[k][x] } else { self.transition[k][prev][x] };
                    mass *= self.emission[k][x][sim];
                    if self.distance[sim][y[s]] > eps[s] {
                        mass = 0.0;
                    }
                    prev = x;
                }
                numerator += mass * phi(prev, k);
                normalizer += mass;
                for (pos, d) in digits.iter_mut().enumerate() {
                    *d += 1;
                    if *d < if pos % 2 == 0 { nx } else { ny } {
                        continue 'paths;
                    }
                    *d = 0;
                }
                break;
            }
        }
        Ok((numerator, normalizer))
    }

    /// The same quantities by the forward recursion over time, summing out
    /// simulated observations step by step.
    pub fn recursive_target<F: Fn(usize, usize) -> f64>(
        &self,
        y: &[usize],
        eps: &[f64],
        phi: F,
    ) -> (f64, f64) {
        let nx = self.n_states();
        let mut numerator = 0.0;
        let mut normalizer = 0.0;
        for k in 0..self.n_params() {
            let mut alpha: Vec<f64> = (0..nx)
                .map(|x| self.initial[k][x] * self.acceptance_probability(k, x, y[0], eps[0]))
                .collect();
            for s in 1..y.len() {
                alpha = (0..nx)
                    .map(|x| {
                        let pred: f64 = (0..nx).map(|p| alpha[p] * self.transition[k][p][x]).sum();
                        pred * self.acceptance_probability(k, x, y[s], eps[s])
                    })
                    .collect();
            }
            numerator += self.prior[k] * (0..nx).map(|x| alpha[x] * phi(x, k)).sum::<f64>();
            normalizer += self.prior[k] * alpha.iter().sum::<f64>();
        }
        (numerator, normalizer)
    }

    /// ABC likelihood `p_eps(y_{1:t} | theta_k)`.
    pub fn marginal_likelihood(&self, k: usize, y: &[usize], eps: &[f64]) -> f64 {
        let mut only = self.clone();
        only.prior = (0..self.n_params()).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
        only.recursive_target(y, eps, |_, _| 1.0).1
    }
}

impl Model for DiscreteToySsm {
    type State = usize;
    type Data = usize;

    fn name(&self) -> &str {
        "discrete_toy"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["k".into()]
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        vec![categorical(&self.prior, rng) as f64]
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        let k = theta[0];
        if k >= 0.0 && k.fract() == 0.0 && (k as usize) < self.n_params() {
            self.prior[k as usize].ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn initial_proposal_sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> usize {
        categorical(self.q_initial(Self::index(theta)), rng)
    }

    fn initial_weight_ratio(&self, x: &usize, theta: &[f64]) -> f64 {
        let k = Self::index(theta);
        self.initial[k][*x] / self.q_initial(k)[*x]
    }

    fn transition_proposal_sample<R: Rng + ?Sized>(
        &self,
        x_prev: &usize,
        theta: &[f64],
        _t: usize,
        _observed: &[usize],
        rng: &mut R,
    ) -> usize {
        categorical(self.q_transition(Self::index(theta), *x_prev), rng)
    }

    fn transition_weight_ratio(&self, x_new: &usize, x_prev: &usize, theta: &[f64], _t: usize) -> f64 {
        let k = Self::index(theta);
        self.transition[k][*x_prev][*x_new] / self.q_transition(k, *x_prev)[*x_new]
    }

    fn emission_simulate<R: Rng + ?Sized>(&self, x: &usize, theta: &[f64], _t: usize, rng: &mut R) -> usize {
        categorical(&self.emission[Self::index(theta)][*x], rng)
    }

    fn distance(&self, simulated: &usize, observed: &usize, _t: usize) -> f64 {
        self.distance[*simulated][*observed]
    }

    /// Independent uniform proposal over the parameter alphabet.
    fn kernel_propose<R: Rng + ?Sized>(&self, _theta: &[f64], _stats: &CloudStatistics, rng: &mut R) -> ParamVector {
        vec![rng.gen_range(0..self.n_params()) as f64]
    }

    fn kernel_log_ratio(&self, _proposed: &[f64], _current: &[f64]) -> f64 {
        0.0
    }

    fn state_summary(&self, x: &usize) -> f64 {
        *x as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamFactory};

    #[test]
    fn tables_are_distributions() {
        DiscreteToySsm::example().validate().unwrap();
        DiscreteToySsm::example_with_proposals().validate().unwrap();
    }

    #[test]
    fn loose_thresholds_give_one() {
        let toy = DiscreteToySsm::example();
        let (n, z) = toy.enumerate_target(&[0, 2, 1], &[10.0; 3], |_, _| 1.0).unwrap();
        assert!((n - 1.0).abs() < 1e-12 && (z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_observation_gives_zero() {
        let toy = DiscreteToySsm::example();
        let (n, _) = toy.enumerate_target(&[3], &[0.0], |_, _| 1.0).unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn hand_enumerated_two_state_case() {
        // One parameter, two states, two symbols, T = 1, eps = 0 and y = 0.
        // Paths accepted: (x=0, y~=0) and (x=1, y~=0).
        // phi = 1{x = 0}: 0.3 * 0.9 = 0.27; normalizer adds 0.7 * 0.4 = 0.28.
        let toy = DiscreteToySsm {
            prior: vec![1.0],
            initial: vec![vec![0.3, 0.7]],
            transition: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            emission: vec![vec![vec![0.9, 0.1], vec![0.4, 0.6]]],
            distance: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            initial_proposal: None,
            transition_proposal: None,
            path_budget: 100,
        };
        let (n, z) = toy.enumerate_target(&[0], &[0.0], |x, _| (x == 0) as u8 as f64).unwrap();
        assert!((n - 0.27).abs() < 1e-15);
        assert!((z - 0.55).abs() < 1e-15);
    }

    #[test]
    fn two_enumeration_orders_agree() {
        let toy = DiscreteToySsm::example();
        let phis: [fn(usize, usize) -> f64; 3] =
            [|_, _| 1.0, |x, _| x as f64, |x, k| ((x + k) % 2) as f64];
        for (y, eps) in [
            (vec![1], vec![0.0]),
            (vec![1, 0], vec![0.0, 1.0]),
            (vec![2, 0, 1], vec![1.0, 0.0, 0.0]),
        ] {
            for phi in phis {
                let (a, b) = toy.enumerate_target(&y, &eps, phi).unwrap();
                let (c, d) = toy.recursive_target(&y, &eps, phi);
                assert!((a - c).abs() < 1e-12, "{a} vs {c}");
                assert!((b - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_enforced() {
        let mut toy = DiscreteToySsm::example();
        toy.path_budget = 10;
        assert!(matches!(
            toy.enumerate_target(&[0, 1], &[1.0, 1.0], |_, _| 1.0),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn weight_ratios_correct_importance() {
        // E_q[u * f(x)] = E_p[f(x)] for the initial proposal.
        let toy = DiscreteToySsm::example_with_proposals();
        let mut rng = StreamFactory::new(2).stream(Purpose::Validation, &[0]);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = toy.initial_proposal_sample(&[1.0], &mut rng);
            sum += toy.initial_weight_ratio(&x, &[1.0]) * (x == 2) as u8 as f64;
        }
        let est = sum / n as f64;
        assert!((est - 0.5).abs() < 0.01, "{est}");
    }
}
