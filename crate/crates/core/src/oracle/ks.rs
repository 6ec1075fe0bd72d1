//! Kolmogorov-Smirnov tests with the asymptotic Kolmogorov distribution.

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series converges fast for small lambda.
        let x = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (0..20)
            .map(|k| ((2 * k + 1) as f64).powi(2) * x)
            .map(f64::exp)
            .sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value for statistic `d` at effective size `n`, with the
/// usual finite-sample correction of the scaling.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sqrt_n = n.sqrt();
    kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS statistic and p-value of `sample` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    assert!(!sample.is_empty(), "KS test needs a nonempty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n) }
}

/// Two-sample KS statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult { statistic: d, p_value: ks_p_value(d, na * nb / (na + nb)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_cdf;
    use crate::rng::{Purpose, StreamFactory};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn survival_known_values() {
        // Tabulated Kolmogorov quantiles: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
        // Both series agree where they meet.
        let lo = {
            let x = -std::f64::consts::PI.powi(2) / 8.0;
            let s: f64 = (0..20).map(|k| (((2 * k + 1) as f64).powi(2) * x).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() * s
        };
        assert!((lo - kolmogorov_survival(1.0)).abs() < 1e-12);
    }

    #[test]
    fn calibrated_under_null() {
        let f = StreamFactory::new(5);
        let mut passes = 0;
        for trial in 0..100 {
            let mut rng = f.stream(Purpose::Validation, &[trial]);
            let s: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
            if ks_statistic(&s, normal_cdf).p_value > 0.001 {
                passes += 1;
            }
        }
        assert!(passes >= 99, "{passes}");
    }

    #[test]
    fn gross_mismatch_rejected() {
        let mut rng = StreamFactory::new(5).stream(Purpose::Validation, &[0]);
        let s: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_statistic(&s, |x| normal_cdf(x - 10.0)).p_value < 1e-10);
    }

    #[test]
    fn own_empirical_cdf_within_one_over_n() {
        let s = [0.3, 1.2, -0.4, 2.0, 0.9];
        let mut sorted = s.to_vec();
        sorted.sort_by(f64::total_cmp);
        let ecdf = |x: f64| sorted.iter().filter(|&&v| v <= x).count() as f64 / 5.0;
        let d = ks_statistic(&s, ecdf).statistic;
        assert!(d <= 1.0 / 5.0 + 1e-15);
    }

    #[test]
    fn two_sample_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]).statistic, 1.0);
        assert_eq!(ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]).statistic, 0.5);
    }
}
