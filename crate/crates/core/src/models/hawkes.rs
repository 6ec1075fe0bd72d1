//! Hawkes process with a latent, slowly varying baseline.
//!
//! On the interval `I_t = [10(t-1), 10t)` events arrive with intensity
//! `theta0 ell_t + theta1 theta2 sum_j exp(-theta2 (tau - v_j))` over every
//! earlier event `v_j`, and `ell_t = inv_logit(L_t)` with
//! `L_t ~ N(phi L_{t-1}, sigma_L^2)`. `theta = (theta1, theta2)`.
//!
//! The state of a particle is `L_t` plus the excitation that the observed
//! history contributes at the start of `I_t`. Histories are always the
//! observed events, never simulated ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::gaussian_step;
use crate::distributions::inv_logit;
use crate::error::{Error, Result};
use crate::model::{CloudStatistics, Model, ParamVector};
use crate::rng::{Purpose, StreamFactory};

pub const THETA_BOUNDS: (f64, f64) = (0.3, 0.7);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HawkesKnown {
    pub theta0: f64,
    pub sigma_l: f64,
    pub phi: f64,
    pub interval: f64,
}

impl Default for HawkesKnown {
    fn default() -> Self {
        Self { theta0: 3.5, sigma_l: 1.0, phi: 0.9, interval: 10.0 }
    }
}

impl HawkesKnown {
    pub fn bounds(&self, t: usize) -> (f64, f64) {
        (self.interval * (t - 1) as f64, self.interval * t as f64)
    }

    fn stationary_level<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sd = self.sigma_l / (1.0 - self.phi * self.phi).sqrt();
        sd * rng.sample::<f64, _>(StandardNormal)
    }

    fn next_level<R: Rng + ?Sized>(&self, level: f64, rng: &mut R) -> f64 {
        self.phi * level + self.sigma_l * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Events of one interval `[start, end)`, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSeries {
    pub start: f64,
    pub end: f64,
    pub events: Vec<f64>,
}

impl EventSeries {
    pub fn new(start: f64, end: f64, events: Vec<f64>) -> Result<Self> {
        let sorted = events.windows(2).all(|w| w[0] < w[1]);
        let inside = events.iter().all(|&e| e >= start && e < end);
        if !sorted || !inside || !(start < end) {
            return Err(Error::Domain("events must be strictly increasing inside [start, end)".into()));
        }
        Ok(Self { start, end, events })
    }

    /// Events with the interval endpoints added as padding.
    pub fn padded(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.events.len() + 2);
        out.push(self.start);
        out.extend_from_slice(&self.events);
        out.push(self.end);
        out
    }
}

/// `(n, diff2, diff3, md)` accumulated over padded gaps.
#[derive(Clone, Copy, Debug)]
struct SummaryAccumulator {
    last: f64,
    n: usize,
    diff2: f64,
    diff3: f64,
    md: f64,
}

impl SummaryAccumulator {
    fn new(start: f64) -> Self {
        Self { last: start, n: 0, diff2: 0.0, diff3: 0.0, md: f64::INFINITY }
    }

    fn gap(&mut self, to: f64) {
        let g = to - self.last;
        self.diff2 += g * g;
        self.diff3 += g * g * g;
        self.md = self.md.min(g);
        self.last = to;
    }

    fn event(&mut self, at: f64) {
        self.gap(at);
        self.n += 1;
    }

    fn finish(mut self, end: f64) -> [f64; 4] {
        self.gap(end);
        [self.n as f64, self.diff2, self.diff3, self.md]
    }
}

/// `(n, diff2, diff3, md)` of the padded series: event count, sums of squared
/// and cubed gaps, and the smallest gap.
pub fn hawkes_summaries(series: &EventSeries) -> [f64; 4] {
    let mut acc = SummaryAccumulator::new(series.start);
    series.events.iter().for_each(|&e| acc.event(e));
    acc.finish(series.end)
}

/// `sum_j exp(-theta2 (at - v_j))` over `history`.
pub fn excitation_at(history: &[f64], theta2: f64, at: f64) -> f64 {
    history.iter().map(|&v| (-theta2 * (at - v)).exp()).sum()
}

/// Exact thinning on `[start, end)` given the excitation carried in from
/// earlier events. Between events the intensity only decays, so its value
/// just after the last event bounds it until the next candidate.
fn thin<R: Rng + ?Sized, F: FnMut(f64)>(
    excitation: f64,
    base: f64,
    theta1: f64,
    theta2: f64,
    start: f64,
    end: f64,
    rng: &mut R,
    mut on_event: F,
) {
    let jump = theta1 * theta2;
    let mut s = start;
    let mut ex = excitation;
    loop {
        let bound = base + jump * ex;
        if !(bound > 0.0) {
            return;
        }
        let w: f64 = rng.sample::<f64, _>(Exp1) / bound;
        s += w;
        if s >= end {
            return;
        }
        ex *= (-theta2 * w).exp();
        if rng.gen::<f64>() * bound <= base + jump * ex {
            ex += 1.0;
            on_event(s);
        }
    }
}

/// Events on `I_t` after the observed `history` (all before `I_t`).
pub fn simulate_hawkes_interval<R: Rng + ?Sized>(
    known: &HawkesKnown,
    history: &[f64],
    ell: f64,
    theta: &[f64],
    t: usize,
    rng: &mut R,
) -> EventSeries {
    let (start, end) = known.bounds(t);
    let ex = excitation_at(history, theta[1], start);
    let mut events = Vec::new();
    thin(ex, known.theta0 * ell, theta[0], theta[1], start, end, rng, |e| events.push(e));
    EventSeries { start, end, events }
}

/// `T` intervals and the path of `ell_t`.
pub fn simulate_series<R: Rng + ?Sized>(
    known: &HawkesKnown,
    theta: &[f64],
    horizon: usize,
    rng: &mut R,
) -> (Vec<EventSeries>, Vec<f64>) {
    let mut data = Vec::with_capacity(horizon);
    let mut truth = Vec::with_capacity(horizon);
    let mut history = Vec::new();
    let mut level = known.stationary_level(rng);
    for t in 1..=horizon {
        if t > 1 {
            level = known.next_level(level, rng);
        }
        let ell = inv_logit(level);
        let series = simulate_hawkes_interval(known, &history, ell, theta, t, rng);
        history.extend_from_slice(&series.events);
        truth.push(ell);
        data.push(series);
    }
    (data, truth)
}

/// One pilot draw: parameters, baseline and the summaries they produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotRow {
    pub theta1: f64,
    pub theta2: f64,
    pub ell: f64,
    pub summaries: [f64; 4],
}

/// Linear maps from `(1, n, diff2, diff3, md)` to estimates of
/// `(theta1, theta2, ell)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionMaps {
    pub coefficients: [[f64; 5]; 3],
}

impl RegressionMaps {
    pub fn apply(&self, s: &[f64; 4]) -> [f64; 3] {
        self.coefficients.map(|c| c[0] + c[1] * s[0] + c[2] * s[1] + c[3] * s[2] + c[4] * s[3])
    }

    pub fn distance(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let (ma, mb) = (self.apply(a), self.apply(b));
        (0..3).map(|k| (ma[k] - mb[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Least-squares fit of the three regression maps.
pub fn fit_regression_adjustment(pilot: &[PilotRow]) -> Result<RegressionMaps> {
    if pilot.len() < 50 {
        return Err(Error::Domain(format!("pilot needs at least 50 rows, got {}", pilot.len())));
    }
    let rows = pilot.len();
    let x = DMatrix::from_fn(rows, 5, |i, j| if j == 0 { 1.0 } else { pilot[i].summaries[j - 1] });
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > 1e-10 * max_sv) {
        return Err(Error::RankDeficient {
            rows,
            cols: 5,
            detail: format!("singular values range from {min_sv:.3e} to {max_sv:.3e}"),
        });
    }
    let mut coefficients = [[0.0; 5]; 3];
    let targets: [fn(&PilotRow) -> f64; 3] = [|r| r.theta1, |r| r.theta2, |r| r.ell];
    for (coef, target) in coefficients.iter_mut().zip(targets) {
        let y = DVector::from_iterator(rows, pilot.iter().map(target));
        let b = svd.solve(&y, 0.0).map_err(|e| Error::RankDeficient {
            rows,
            cols: 5,
            detail: e.to_string(),
        })?;
        coef.copy_from_slice(b.as_slice());
    }
    Ok(RegressionMaps { coefficients })
}

/// Prior-predictive pilot: three intervals from an empty history, keeping
/// the last one so its summaries reflect carried-in excitation.
pub fn hawkes_pilot(known: &HawkesKnown, size: usize, seed: u64) -> Vec<PilotRow> {
    let streams = StreamFactory::new(seed);
    (0..size)
        .map(|j| {
            let mut rng = streams.stream(Purpose::Pilot, &[j as u64]);
            let theta = [
                rng.gen_range(THETA_BOUNDS.0..THETA_BOUNDS.1),
                rng.gen_range(THETA_BOUNDS.0..THETA_BOUNDS.1),
            ];
            let (data, ell) = simulate_series(known, &theta, 3, &mut rng);
            PilotRow {
                theta1: theta[0],
                theta2: theta[1],
                ell: ell[2],
                summaries: hawkes_summaries(&data[2]),
            }
        })
        .collect()
}

/// `L_t` and the excitation from observed events before `I_t`, measured
/// at its start.
#[derive(Clone, Debug, PartialEq)]
pub struct HawkesState {
    pub level: f64,
    pub excitation: f64,
    /// Number of observed intervals folded into `excitation`.
    pub history_intervals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HawkesModel {
    pub known: HawkesKnown,
    pub kernel_c: f64,
    pub maps: RegressionMaps,
}

impl HawkesModel {
    pub fn new(known: HawkesKnown, kernel_c: f64, maps: RegressionMaps) -> Result<Self> {
        if !(kernel_c > 0.0) {
            return Err(Error::Domain("kernel_c must be positive".into()));
        }
        if !(known.theta0 > 0.0 && known.sigma_l > 0.0 && known.interval > 0.0) {
            return Err(Error::Domain("hawkes constants must be positive".into()));
        }
        Ok(Self { known, kernel_c, maps })
    }

    /// Fit the regression maps on a fresh pilot, then build the model.
    pub fn with_pilot(known: HawkesKnown, kernel_c: f64, pilot_size: usize, seed: u64) -> Result<Self> {
        let maps = fit_regression_adjustment(&hawkes_pilot(&known, pilot_size, seed))?;
        Self::new(known, kernel_c, maps)
    }
}

/// Random walk on `ln theta` with covariance `c * cov_hat`. Returns the
/// proposal and `ln K(theta | proposed) - ln K(proposed | theta)`.
pub fn hawkes_kernel<R: Rng + ?Sized>(theta: &[f64], c: f64, cov_hat: &[Vec<f64>], rng: &mut R) -> (Vec<f64>, f64) {
    let log_theta: Vec<f64> = theta.iter().map(|v| v.ln()).collect();
    let proposed: Vec<f64> = gaussian_step(&log_theta, cov_hat, c, rng).into_iter().map(f64::exp).collect();
    let ratio = hawkes_kernel_log_ratio(&proposed, theta);
    (proposed, ratio)
}

/// `ln(proposed_1 proposed_2) - ln(current_1 current_2)`.
pub fn hawkes_kernel_log_ratio(proposed: &[f64], current: &[f64]) -> f64 {
    proposed.iter().map(|v| v.ln()).sum::<f64>() - current.iter().map(|v| v.ln()).sum::<f64>()
}

impl Model for HawkesModel {
    type State = HawkesState;
    type Data = EventSeries;

    fn name(&self) -> &str {
        "hawkes"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }

    fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        vec![
            rng.gen_range(THETA_BOUNDS.0..THETA_BOUNDS.1),
            rng.gen_range(THETA_BOUNDS.0..THETA_BOUNDS.1),
        ]
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        let inside = |v: f64| v > THETA_BOUNDS.0 && v < THETA_BOUNDS.1;
        if inside(theta[0]) && inside(theta[1]) {
            -2.0 * (THETA_BOUNDS.1 - THETA_BOUNDS.0).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn initial_proposal_sample<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> HawkesState {
        HawkesState { level: self.known.stationary_level(rng), excitation: 0.0, history_intervals: 0 }
    }

    fn transition_proposal_sample<R: Rng + ?Sized>(
        &self,
        x_prev: &HawkesState,
        theta: &[f64],
        t: usize,
        observed: &[EventSeries],
        rng: &mut R,
    ) -> HawkesState {
        let theta2 = theta[1];
        let (start, _) = self.known.bounds(t);
        let last = &observed[t - 2];
        let excitation = x_prev.excitation * (-theta2 * self.known.interval).exp()
            + excitation_at(&last.events, theta2, start);
        HawkesState {
            level: self.known.next_level(x_prev.level, rng),
            excitation,
            history_intervals: x_prev.history_intervals + 1,
        }
    }

    fn emission_simulate<R: Rng + ?Sized>(&self, x: &HawkesState, theta: &[f64], t: usize, rng: &mut R) -> EventSeries {
        let (start, end) = self.known.bounds(t);
        let base = self.known.theta0 * inv_logit(x.level);
        let mut events = Vec::new();
        thin(x.excitation, base, theta[0], theta[1], start, end, rng, |e| events.push(e));
        EventSeries { start, end, events }
    }

    fn distance(&self, simulated: &EventSeries, observed: &EventSeries, _t: usize) -> f64 {
        self.maps.distance(&hawkes_summaries(simulated), &hawkes_summaries(observed))
    }

    fn simulate_distance<R: Rng + ?Sized>(
        &self,
        x: &HawkesState,
        theta: &[f64],
        t: usize,
        observed: &EventSeries,
        rng: &mut R,
    ) -> f64 {
        let (start, end) = self.known.bounds(t);
        let base = self.known.theta0 * inv_logit(x.level);
        let mut acc = SummaryAccumulator::new(start);
        thin(x.excitation, base, theta[0], theta[1], start, end, rng, |e| acc.event(e));
        self.maps.distance(&acc.finish(end), &hawkes_summaries(observed))
    }

    fn to_working(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|v| v.ln()).collect()
    }

    fn kernel_propose<R: Rng + ?Sized>(&self, theta: &[f64], stats: &CloudStatistics, rng: &mut R) -> ParamVector {
        hawkes_kernel(theta, self.kernel_c, &stats.covariance, rng).0
    }

    fn kernel_log_ratio(&self, proposed: &[f64], current: &[f64]) -> f64 {
        hawkes_kernel_log_ratio(proposed, current)
    }

    fn weight_ratio_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn state_summary(&self, x: &HawkesState) -> f64 {
        inv_logit(x.level)
    }

    fn simulate_series<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> (Vec<EventSeries>, Vec<f64>) {
        simulate_series(&self.known, theta, horizon, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::compensator::{hawkes_compensator, HawkesRates};
    use crate::oracle::ks::ks_statistic;

    fn streams() -> StreamFactory {
        StreamFactory::new(17)
    }

    #[test]
    fn summaries_by_hand() {
        let empty = EventSeries::new(0.0, 10.0, vec![]).unwrap();
        assert_eq!(hawkes_summaries(&empty), [0.0, 100.0, 1000.0, 10.0]);
        let one = EventSeries::new(0.0, 10.0, vec![4.0]).unwrap();
        assert_eq!(hawkes_summaries(&one), [1.0, 52.0, 280.0, 4.0]);
    }

    #[test]
    fn summaries_shift_invariant() {
        let a = EventSeries::new(0.0, 10.0, vec![0.5, 2.25, 7.0]).unwrap();
        let b = EventSeries::new(20.0, 30.0, vec![20.5, 22.25, 27.0]).unwrap();
        assert_eq!(hawkes_summaries(&a), hawkes_summaries(&b));
    }

    #[test]
    fn series_validation() {
        assert!(EventSeries::new(0.0, 10.0, vec![3.0, 2.0]).is_err());
        assert!(EventSeries::new(0.0, 10.0, vec![10.0]).is_err());
    }

    #[test]
    fn poisson_when_self_excitation_is_off() {
        let known = HawkesKnown::default();
        let ell = 0.4;
        let n = 10_000;
        let counts: Vec<f64> = (0..n)
            .map(|r| {
                let mut rng = streams().stream(Purpose::Validation, &[r]);
                simulate_hawkes_interval(&known, &[], ell, &[0.0, 0.5], 1, &mut rng).events.len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let expected = 10.0 * known.theta0 * ell;
        assert!((mean - expected).abs() < 3.0 * (expected / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn vanishing_baseline_gives_no_events() {
        let known = HawkesKnown::default();
        let mut total = 0;
        for r in 0..1000 {
            let mut rng = streams().stream(Purpose::Validation, &[r]);
            total += simulate_hawkes_interval(&known, &[], 1e-9, &[0.01, 0.5], 1, &mut rng).events.len();
        }
        assert!(total <= 1);
    }

    #[test]
    fn time_rescaled_gaps_are_unit_exponential() {
        let known = HawkesKnown::default();
        let theta = [0.5, 0.5];
        let mut gaps = Vec::new();
        let mut rng = streams().stream(Purpose::Validation, &[1]);
        let (data, ell) = simulate_series(&known, &theta, 1000, &mut rng);
        let mut history: Vec<f64> = Vec::new();
        // The increment to the end of an interval runs on into the next one.
        let mut carry = 0.0;
        for (series, &l) in data.iter().zip(&ell) {
            let rates = HawkesRates { theta0: known.theta0, ell: l, theta1: theta[0], theta2: theta[1] };
            let inc = hawkes_compensator(&series.events, &history, rates, series.start, series.end).unwrap();
            for (j, v) in inc.iter().enumerate() {
                carry += v;
                if j + 1 < inc.len() {
                    gaps.push(carry);
                    carry = 0.0;
                }
            }
            history.extend_from_slice(&series.events);
        }
        let p = ks_statistic(&gaps, |x| 1.0 - (-x).exp()).p_value;
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn exact_linear_targets_recovered() {
        let mut rng = streams().stream(Purpose::Validation, &[2]);
        let pilot: Vec<PilotRow> = (0..200)
            .map(|_| {
                let s = [rng.gen_range(0.0..50.0), rng.gen_range(1.0..100.0), rng.gen_range(1.0..1000.0), rng.gen_range(0.0..2.0)];
                PilotRow {
                    theta1: 0.1 + 0.01 * s[0] - 0.002 * s[1] + 1e-4 * s[2] + 0.3 * s[3],
                    theta2: 0.5 - 0.004 * s[0],
                    ell: 0.2 + 0.001 * s[1],
                    summaries: s,
                }
            })
            .collect();
        let maps = fit_regression_adjustment(&pilot).unwrap();
        let expected = [0.1, 0.01, -0.002, 1e-4, 0.3];
        for (a, b) in maps.coefficients[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((maps.coefficients[1][1] + 0.004).abs() < 1e-8);
        assert!((maps.coefficients[2][2] - 0.001).abs() < 1e-8);
        assert_eq!(maps.distance(&pilot[0].summaries, &pilot[0].summaries), 0.0);
    }

    #[test]
    fn maps_agree_with_normal_equations() {
        let pilot = hawkes_pilot(&HawkesKnown::default(), 100, 5);
        let maps = fit_regression_adjustment(&pilot).unwrap();
        let x = DMatrix::from_fn(100, 5, |i, j| if j == 0 { 1.0 } else { pilot[i].summaries[j - 1] });
        let xtx = x.transpose() * &x;
        let y = DVector::from_iterator(100, pilot.iter().map(|r| r.theta2));
        let b = xtx.lu().solve(&(x.transpose() * y)).unwrap();
        for j in 0..5 {
            let scale = 1.0 + b[j].abs();
            assert!((maps.coefficients[1][j] - b[j]).abs() < 1e-8 * scale, "{j}");
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let pilot: Vec<PilotRow> = (0..60)
            .map(|i| PilotRow { theta1: 0.5, theta2: 0.5, ell: 0.5, summaries: [i as f64, 2.0 * i as f64, 1.0, 1.0] })
            .collect();
        assert!(matches!(fit_regression_adjustment(&pilot), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn kernel_ratio_and_positivity() {
        let ratio = hawkes_kernel_log_ratio(&[0.6, 0.4], &[0.5, 0.5]);
        assert!((ratio - (0.24f64 / 0.25).ln()).abs() < 1e-15);
        assert_eq!(hawkes_kernel_log_ratio(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        let cov = vec![vec![1.0, 0.2], vec![0.2, 1.0]];
        let mut rng = streams().stream(Purpose::Validation, &[3]);
        for _ in 0..1000 {
            let (p, _) = hawkes_kernel(&[0.5, 0.5], 5.0, &cov, &mut rng);
            assert!(p.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn kernel_leaves_uniform_prior_invariant() {
        let known = HawkesKnown::default();
        let maps = RegressionMaps { coefficients: [[0.0; 5]; 3] };
        let m = HawkesModel::new(known, 1.0, maps).unwrap();
        let cov = vec![vec![0.1, 0.0], vec![0.0, 0.1]];
        let stats = CloudStatistics { mean: vec![0.0; 2], covariance: cov };
        let mut rng = streams().stream(Purpose::Validation, &[4]);
        let mut theta = vec![0.5, 0.5];
        let (mut low, n) = (0usize, 400_000);
        for _ in 0..n {
            let p = m.kernel_propose(&theta, &stats, &mut rng);
            let log_a = m.prior_log_density(&p) - m.prior_log_density(&theta) + m.kernel_log_ratio(&p, &theta);
            if rng.gen::<f64>().ln() < log_a {
                theta = p;
            }
            low += (theta[0] < 0.4) as usize;
        }
        let f = low as f64 / n as f64;
        assert!((f - 0.25).abs() < 0.02, "{f}");
    }

    #[test]
    fn particle_history_is_the_observed_prefix() {
        let known = HawkesKnown::default();
        let maps = RegressionMaps { coefficients: [[0.0; 5]; 3] };
        let m = HawkesModel::new(known, 0.1, maps).unwrap();
        let mut rng = streams().stream(Purpose::Validation, &[5]);
        let (obs, _) = simulate_series(&known, &[0.5, 0.6], 6, &mut rng);
        let theta = [0.5, 0.6];
        let mut x = m.initial_proposal_sample(&theta, &mut rng);
        for t in 2..=6 {
            x = m.transition_proposal_sample(&x, &theta, t, &obs[..t - 1], &mut rng);
            let history: Vec<f64> = obs[..t - 1].iter().flat_map(|s| s.events.iter().copied()).collect();
            let direct = excitation_at(&history, theta[1], known.bounds(t).0);
            assert!((x.excitation - direct).abs() < 1e-12 * (1.0 + direct));
            assert_eq!(x.history_intervals, t - 1);
        }
    }

    #[test]
    fn streaming_distance_matches_materialized() {
        let known = HawkesKnown::default();
        let m = HawkesModel::with_pilot(known, 0.1, 500, 3).unwrap();
        let obs = EventSeries::new(10.0, 20.0, vec![11.0, 15.5]).unwrap();
        let x = HawkesState { level: 0.3, excitation: 1.2, history_intervals: 1 };
        for k in 0..20 {
            let a = m.simulate_distance(&x, &[0.5, 0.5], 2, &obs, &mut streams().stream(Purpose::Validation, &[100 + k]));
            let sim = m.emission_simulate(&x, &[0.5, 0.5], 2, &mut streams().stream(Purpose::Validation, &[100 + k]));
            assert_eq!(a, m.distance(&sim, &obs, 2));
        }
    }
}
