//! Scalar Kalman filter for linear Gaussian state space models.

use crate::error::{Error, Result};

/// `x_1 ~ N(m0, p0)`, `x_t = a x_{t-1} + c + N(0, q)`, `y_t = h x_t + N(0, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussian {
    pub m0: f64,
    pub p0: f64,
    pub a: f64,
    pub c: f64,
    pub q: f64,
    pub h: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanOutput {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// `ln p(y_{1:T})`.
    pub log_likelihood: f64,
}

pub fn kalman_filter(p: &LinearGaussian, y: &[f64]) -> Result<KalmanOutput> {
    if !(p.q > 0.0 && p.r > 0.0 && p.p0 > 0.0) {
        return Err(Error::Domain("noise variances must be positive".into()));
    }
    let mut means = Vec::with_capacity(y.len());
    let mut variances = Vec::with_capacity(y.len());
    let mut log_likelihood = 0.0;
    let (mut m, mut v) = (p.m0, p.p0);
    for (t, &obs) in y.iter().enumerate() {
        if t > 0 {
            m = p.a * m + p.c;
            v = p.a * p.a * v + p.q;
        }
        let s = p.h * p.h * v + p.r;
        let innov = obs - p.h * m;
        log_likelihood += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + innov * innov / s);
        let gain = v * p.h / s;
        m += gain * innov;
        v *= 1.0 - gain * p.h;
        means.push(m);
        variances.push(v);
    }
    Ok(KalmanOutput { means, variances, log_likelihood })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use crate::rng::{Purpose, StreamFactory};

    /// Filtering moments by conditioning the joint Gaussian of
    /// `(x_{1:T}, y_{1:T})` directly.
    fn dense(p: &LinearGaussian, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = y.len();
        let mut mean_x = vec![p.m0];
        for t in 1..n {
            mean_x.push(p.a * mean_x[t - 1] + p.c);
        }
        let mut cov = DMatrix::<f64>::zeros(n, n);
        let mut var = vec![p.p0];
        for t in 1..n {
            var.push(p.a * p.a * var[t - 1] + p.q);
        }
        for i in 0..n {
            for j in 0..n {
                let (lo, hi) = (i.min(j), i.max(j));
                cov[(i, j)] = p.a.powi((hi - lo) as i32) * var[lo];
            }
        }
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for t in 1..=n {
            // Condition x_t on y_{1:t}.
            let cyy = DMatrix::from_fn(t, t, |i, j| {
                p.h * p.h * cov[(i, j)] + if i == j { p.r } else { 0.0 }
            });
            let cxy = DVector::from_fn(t, |j, _| p.h * cov[(t - 1, j)]);
            let resid = DVector::from_fn(t, |j, _| y[j] - p.h * mean_x[j]);
            let inv = cyy.try_inverse().unwrap();
            means.push(mean_x[t - 1] + (cxy.transpose() * &inv * resid)[0]);
            vars.push(cov[(t - 1, t - 1)] - (cxy.transpose() * &inv * &cxy)[0]);
        }
        (means, vars)
    }

    #[test]
    fn matches_dense_conditioning() {
        let f = StreamFactory::new(9);
        for trial in 0..20 {
            let mut rng = f.stream(Purpose::Validation, &[trial]);
            let p = LinearGaussian {
                m0: rng.gen_range(-1.0..1.0),
                p0: rng.gen_range(0.5..2.0),
                a: rng.gen_range(-0.9..0.9),
                c: rng.gen_range(-0.5..0.5),
                q: rng.gen_range(0.1..1.0),
                h: rng.gen_range(0.5..1.5),
                r: rng.gen_range(0.1..1.0),
            };
            let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let k = kalman_filter(&p, &y).unwrap();
            let (m, v) = dense(&p, &y);
            for t in 0..5 {
                assert!((k.means[t] - m[t]).abs() < 1e-10);
                assert!((k.variances[t] - v[t]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn limits() {
        let y = [0.3, -1.2, 2.5];
        let exact = LinearGaussian { m0: 0.0, p0: 1.0, a: 0.8, c: 0.1, q: 0.5, h: 1.0, r: 1e-16 };
        let k = kalman_filter(&exact, &y).unwrap();
        for (m, o) in k.means.iter().zip(&y) {
            assert!((m - o).abs() < 1e-7);
        }
        let vague = LinearGaussian { r: 1e16, ..exact };
        let k = kalman_filter(&vague, &y).unwrap();
        assert!((k.means[0] - 0.0).abs() < 1e-10);
        assert!((k.means[1] - 0.1).abs() < 1e-10);
        assert!((k.means[2] - (0.8 * 0.1 + 0.1)).abs() < 1e-10);
    }

    #[test]
    fn means_linear_in_observations() {
        // With m0 = c = 0 the filtering means are a linear map of y.
        let p = LinearGaussian { m0: 0.0, p0: 1.3, a: 0.7, c: 0.0, q: 0.4, h: 1.1, r: 0.6 };
        let y1 = [0.5, -0.2, 1.0, 0.3];
        let y2 = [-1.0, 0.4, 0.0, 2.0];
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.0 * a + b).collect();
        let k1 = kalman_filter(&p, &y1).unwrap();
        let k2 = kalman_filter(&p, &y2).unwrap();
        let ks = kalman_filter(&p, &sum).unwrap();
        for t in 0..4 {
            assert!((ks.means[t] - (2.0 * k1.means[t] + k2.means[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_zero_noise() {
        let p = LinearGaussian { m0: 0.0, p0: 1.0, a: 1.0, c: 0.0, q: 0.0, h: 1.0, r: 1.0 };
        assert!(kalman_filter(&p, &[1.0]).is_err());
    }
}
