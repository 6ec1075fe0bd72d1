//! Samplers and transforms used by the example models.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Azzalini skew normal: density `(2/sigma) phi(z) Phi(gamma z)` with
/// `z = (x - mu) / sigma`; `gamma` is the shape parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkewNormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl SkewNormalParams {
    pub fn new(mu: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "skew normal needs finite mu, gamma and sigma > 0 (got {mu}, {sigma}, {gamma})"
            )));
        }
        Ok(Self { mu, sigma, gamma })
    }

    /// `delta = gamma / sqrt(1 + gamma^2)`, the mixing coefficient of the
    /// half-normal representation.
    pub fn delta(&self) -> f64 {
        self.gamma / (1.0 + self.gamma * self.gamma).sqrt()
    }
}

pub fn sample_skew_normal<R: Rng + ?Sized>(p: &SkewNormalParams, rng: &mut R) -> f64 {
    let delta = p.delta();
    let u0: f64 = rng.sample(StandardNormal);
    let u1: f64 = rng.sample(StandardNormal);
    p.mu + p.sigma * (delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1)
}

/// Stable law in the parameterization with characteristic function
/// `exp(-gamma^a |u|^a [1 - i beta tan(pi a / 2) sign u] + i delta u)` for
/// `a != 1` and `exp(-gamma |u| [1 + i beta (2/pi) sign u log|u|] + i delta u)`
/// for `a = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0)
            || !(-1.0..=1.0).contains(&beta)
            || !(gamma > 0.0)
            || !gamma.is_finite()
            || !delta.is_finite()
        {
            return Err(Error::Domain(format!(
                "stable parameters out of range: alpha={alpha} beta={beta} gamma={gamma} delta={delta}"
            )));
        }
        Ok(Self { alpha, beta, gamma, delta })
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }
}

/// Chambers-Mallows-Stuck draw from the standardized law `(alpha, beta, 1, 0)`.
fn standard_stable<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    // V uniform on (-pi/2, pi/2), W standard exponential.
    let v = PI * (rng.gen::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    if alpha == 1.0 {
        let shifted = FRAC_PI_2 + beta * v;
        (shifted * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / shifted).ln()) / FRAC_PI_2
    } else {
        let t = beta * (PI * alpha / 2.0).tan();
        let b = t.atan() / alpha;
        let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
        let arg = alpha * (v + b);
        s * arg.sin() / v.cos().powf(1.0 / alpha)
            * ((v - arg).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

pub fn sample_stable<R: Rng + ?Sized>(p: &StableParams, rng: &mut R) -> f64 {
    let x = standard_stable(p.alpha, p.beta, rng);
    if p.alpha == 1.0 {
        p.gamma * x + 2.0 / PI * p.beta * p.gamma * p.gamma.ln() + p.delta
    } else {
        p.gamma * x + p.delta
    }
}

/// Gaussian AR(1) transition `x' ~ N(intercept + phi x, sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1Params {
    pub phi: f64,
    pub sigma: f64,
    pub intercept: f64,
}

impl Ar1Params {
    pub fn new(phi: f64, sigma: f64, intercept: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !phi.is_finite() || !intercept.is_finite() {
            return Err(Error::Domain(format!("AR(1) needs sigma > 0 (got {sigma})")));
        }
        Ok(Self { phi, sigma, intercept })
    }

    /// Mean and standard deviation of the stationary law; `None` when
    /// `|phi| >= 1`.
    pub fn stationary(&self) -> Option<(f64, f64)> {
        (self.phi.abs() < 1.0).then(|| {
            (
                self.intercept / (1.0 - self.phi),
                self.sigma / (1.0 - self.phi * self.phi).sqrt(),
            )
        })
    }
}

pub fn ar1_step<R: Rng + ?Sized>(x: f64, p: &Ar1Params, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    p.intercept + p.phi * x + p.sigma * z
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(Error::Domain(format!("logit of {p} outside (0, 1)")))
    }
}

/// Central moments `(mean, m2, m3)` with 1/n normalization.
pub fn central_moments(sample: &[f64]) -> (f64, f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let (m2, m3) = sample.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = x - mean;
        (a + d * d, b + d * d * d)
    });
    (mean, m2 / n, m3 / n)
}

/// Sample skewness `m3 / m2^(3/2)` (1/n central moments).
pub fn skewness_stat(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::Domain("skewness needs at least two values".into()));
    }
    let (_, m2, m3) = central_moments(sample);
    if !(m2 > 0.0) {
        return Err(Error::Domain("skewness of a zero-variance sample".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_inv_cdf(p: f64) -> f64 {
    let mut x = std_normal().inverse_cdf(p);
    // Newton polish of the library's approximation.
    for _ in 0..2 {
        if !x.is_finite() {
            break;
        }
        let pdf = normal_log_pdf(x).exp();
        if pdf == 0.0 {
            break;
        }
        x -= (normal_cdf(x) - p) / pdf;
    }
    x
}

pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}
