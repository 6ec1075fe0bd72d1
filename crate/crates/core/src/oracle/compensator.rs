//! Time-rescaling of a Hawkes process with exponential kernel.

use crate::error::{Error, Result};

/// Baseline and kernel parameters of one interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HawkesRates {
    pub theta0: f64,
    pub ell: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// Compensator increments on `[start, end)`: from `start` to the first
/// event, between consecutive events, and from the last event to `end`.
/// `history` holds the events before `start`. The last increment is
/// censored at `end` and is not a complete Exp(1) gap.
pub fn hawkes_compensator(
    events: &[f64],
    history: &[f64],
    rates: HawkesRates,
    start: f64,
    end: f64,
) -> Result<Vec<f64>> {
    if events.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("events must be strictly increasing".into()));
    }
    if events.first().is_some_and(|&e| e < start) || events.last().is_some_and(|&e| e >= end) {
        return Err(Error::Domain("events must lie inside the interval".into()));
    }
    let HawkesRates { theta0, ell, theta1, theta2 } = rates;
    let lambda = |tau: f64| {
        let mut total = theta0 * ell * (tau - start);
        for &v in history.iter().chain(events.iter().filter(|&&e| e < tau)) {
            total += theta1 * ((-theta2 * (start.max(v) - v)).exp() - (-theta2 * (tau - v)).exp());
        }
        total
    };
    let mut out = Vec::with_capacity(events.len() + 1);
    let mut prev = 0.0;
    for &tau in events.iter().chain(std::iter::once(&end)) {
        let cur = lambda(tau);
        out.push(cur - prev);
        prev = cur;
    }
    Ok(out)
}
