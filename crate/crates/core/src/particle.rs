//! Weight arithmetic shared by the theta level and the state level:
//! normalization, effective sample size, multinomial resampling and the
//! weighted-quantile search behind threshold calibration.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// One simulated dataset's contribution to threshold calibration: its
/// distance to the observation and the mass `Z * u` it carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationRecord {
    pub distance: f64,
    pub weight: f64,
}

impl CalibrationRecord {
    pub fn new(distance: f64, weight: f64) -> Self {
        Self { distance, weight }
    }
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let (sum, sum_sq) = weights
        .iter()
        .fold((0.0, 0.0), |(s, s2), &w| (s + w, s2 + w * w));
    if weights.is_empty() || !(sum > 0.0) {
        return Err(Error::Domain("ess of an empty or all-zero weight vector".into()));
    }
    Ok(sum * sum / sum_sq)
}

/// Returns the normalized weights and the original total. A zero total
/// yields an all-zero vector (the dead-cloud sentinel).
pub fn normalize(weights: &[f64]) -> (Vec<f64>, f64) {
    let mut out = weights.to_vec();
    let total = normalize_in_place(&mut out);
    (out, total)
}

pub fn normalize_in_place(weights: &mut [f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        weights.iter_mut().for_each(|w| *w = 0.0);
    }
    total
}

/// Draws `count` indices independently with probability proportional to
/// `weights`. Zero-weight entries are never selected.
pub fn multinomial_resample<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("invalid resampling weight {w}")));
        }
        acc += w;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Domain("resampling from all-zero weights".into()));
    }
    let last_live = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let indices = (0..count)
        .map(|_| {
            let target = rng.gen::<f64>() * acc;
            let idx = cumulative.partition_point(|&c| c <= target);
            idx.min(last_live)
        })
        .collect();
    Ok(indices)
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level {p} outside (0, 1]")))
    }
}

/// Smallest record distance `d` such that the weight of records with
/// distance `<= d`, divided by the total weight, is at least `p`.
///
/// Records sharing a distance are accumulated together before the crossing
/// is tested, so the threshold is inclusive under ties.
pub fn weighted_quantile_threshold(records: &[CalibrationRecord], p: f64) -> Result<f64> {
    check_level(p)?;
    if records.is_empty() {
        return Err(Error::Domain("weighted quantile of no records".into()));
    }
    if records.iter().any(|r| r.distance.is_nan() || !(r.weight >= 0.0)) {
        return Err(Error::Domain("NaN distance or negative weight in records".into()));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let total: f64 = sorted.iter().map(|r| r.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("weighted quantile with zero total weight".into()));
    }
    let mut cumulative = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let d = sorted[i].distance;
        while i < sorted.len() && sorted[i].distance == d {
            cumulative += sorted[i].weight;
            i += 1;
        }
        if cumulative / total >= p {
            return Ok(d);
        }
    }
    // Rounding can leave the final ratio a hair under 1.
    Ok(sorted[sorted.len() - 1].distance)
}

/// A block of simulations that share one calibration weight; `sorted`
/// holds their distances in ascending order.
#[derive(Clone, Copy, Debug)]
pub struct WeightedGroup<'a> {
    pub weight: f64,
    pub sorted: &'a [f64],
}

const GROUP_CHUNK: usize = 2048;

fn ordered_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn from_ordered_key(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

fn grouped_mass(groups: &[WeightedGroup<'_>], delta: f64) -> f64 {
    // Fixed chunking and an in-order final sum keep the result independent
    // of the worker count.
    let partial: Vec<f64> = groups
        .par_chunks(GROUP_CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|g| {
                    let count = g.sorted.partition_point(|&d| d <= delta);
                    g.weight * count as f64
                })
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Same contract as [`weighted_quantile_threshold`] over the records
/// `(d, g.weight)` for every distance `d` of every group, without
/// materializing them. Bisects over the ordered bit patterns of `f64`
/// between the smallest and largest distance; the mass function only
/// steps at observed distances, so the bisection lands on one of them.
pub fn grouped_quantile_threshold(groups: &[WeightedGroup<'_>], p: f64) -> Result<f64> {
    check_level(p)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for g in groups {
        if !(g.weight >= 0.0) {
            return Err(Error::Domain("negative group weight".into()));
        }
        if let (Some(&first), Some(&last)) = (g.sorted.first(), g.sorted.last()) {
            if first.is_nan() || last.is_nan() {
                return Err(Error::Domain("NaN distance".into()));
            }
            any = true;
            lo = lo.min(first);
            hi = hi.max(last);
        }
    }
    if !any {
        return Err(Error::Domain("weighted quantile of no records".into()));
    }
    let total = grouped_mass(groups, f64::INFINITY);
    if !(total > 0.0) {
        return Err(Error::Domain("weighted quantile with zero total weight".into()));
    }
    let reaches = |k: u64| grouped_mass(groups, from_ordered_key(k)) / total >= p;
    let (mut lo_k, mut hi_k) = (ordered_key(lo), ordered_key(hi));
    if !reaches(hi_k) {
        return Ok(hi);
    }
    while lo_k < hi_k {
        let mid = lo_k + (hi_k - lo_k) / 2;
        if reaches(mid) {
            hi_k = mid;
        } else {
            lo_k = mid + 1;
        }
    }
    Ok(from_ordered_key(lo_k))
}

/// Weighted fraction of records with distance `<= delta`.
pub fn acceptance_fraction(records: &[CalibrationRecord], delta: f64) -> f64 {
    let total: f64 = records.iter().map(|r| r.weight).sum();
    let accepted: f64 = records
        .iter()
        .filter(|r| r.distance <= delta)
        .map(|r| r.weight)
        .sum();
    accepted / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn recs(d: &[f64], w: &[f64]) -> Vec<CalibrationRecord> {
        d.iter().zip(w).map(|(&d, &w)| CalibrationRecord::new(d, w)).collect()
    }

    /// Brute force: for every candidate distance, recompute the accepted
    /// mass from scratch; keep the smallest candidate that qualifies.
    fn quantile_oracle(records: &[CalibrationRecord], p: f64) -> f64 {
        let total: f64 = records.iter().map(|r| r.weight).sum();
        let mut best = f64::INFINITY;
        for cand in records {
            let mass: f64 = records
                .iter()
                .filter(|r| r.distance <= cand.distance)
                .map(|r| r.weight)
                .sum();
            if mass / total >= p && cand.distance < best {
                best = cand.distance;
            }
        }
        best
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 4.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((ess(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 6.0).abs() < 1e-12);
        assert!(ess(&[0.0, 0.0]).is_err());
        assert!(ess(&[]).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]), (vec![0.5, 0.5], 4.0));
        assert_eq!(normalize(&[0.0, 0.0]), (vec![0.0, 0.0], 0.0));
        assert_eq!(normalize(&[1.0, 3.0]), (vec![0.25, 0.75], 4.0));
    }

    #[test]
    fn resample_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(multinomial_resample(&[0.0, 1.0, 0.0], 5, &mut rng).unwrap(), vec![1; 5]);
        assert_eq!(multinomial_resample(&[1.0], 3, &mut rng).unwrap(), vec![0; 3]);
        assert!(multinomial_resample(&[0.0, 0.0], 3, &mut rng).is_err());
    }

    #[test]
    fn resample_uniform_passes_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let idx = multinomial_resample(&[1.0; 4], n, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        idx.iter().for_each(|&i| counts[i] += 1);
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }

    #[test]
    fn resample_is_unbiased_for_bounded_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights = [0.1, 2.0, 0.7, 0.0, 1.2];
        let f = [3.0, -1.0, 0.5, 100.0, 2.0];
        let total: f64 = weights.iter().sum();
        let target: f64 = weights.iter().zip(&f).map(|(w, f)| w * f).sum::<f64>() / total;
        let var: f64 = weights
            .iter()
            .zip(&f)
            .map(|(w, f)| w / total * (f - target).powi(2))
            .sum();
        let n = 100_000;
        let idx = multinomial_resample(&weights, n, &mut rng).unwrap();
        assert!(idx.iter().all(|&i| i != 3));
        let mean = idx.iter().map(|&i| f[i]).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn quantile_examples() {
        let u = [1.0; 4];
        assert_eq!(weighted_quantile_threshold(&recs(&[1., 2., 3., 4.], &u), 0.5).unwrap(), 2.0);
        assert_eq!(weighted_quantile_threshold(&recs(&[1., 2., 3., 4.], &u), 1.0).unwrap(), 4.0);
        assert_eq!(weighted_quantile_threshold(&recs(&[5., 9.], &[1., 0.]), 0.5).unwrap(), 5.0);
        assert!(weighted_quantile_threshold(&[], 0.5).is_err());
        assert!(weighted_quantile_threshold(&recs(&[1., 2.], &[0., 0.]), 0.5).is_err());
        assert!(weighted_quantile_threshold(&recs(&[1.], &[1.]), 0.0).is_err());
    }

    #[test]
    fn quantile_ties_are_inclusive() {
        let r = recs(&[1., 2., 2., 2., 3.], &[1.; 5]);
        assert_eq!(weighted_quantile_threshold(&r, 0.21).unwrap(), 2.0);
        assert_eq!(weighted_quantile_threshold(&r, 0.8).unwrap(), 2.0);
        assert_eq!(weighted_quantile_threshold(&r, 0.81).unwrap(), 3.0);
    }

    #[test]
    fn quantile_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let r: Vec<_> = (0..n)
                .map(|_| {
                    let d = rng.gen_range(0..10) as f64 * 0.5;
                    let w = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(1..5) as f64 };
                    CalibrationRecord::new(d, w)
                })
                .collect();
            if r.iter().all(|x| x.weight == 0.0) {
                continue;
            }
            let p = rng.gen_range(1..=20) as f64 / 20.0;
            assert_eq!(weighted_quantile_threshold(&r, p).unwrap(), quantile_oracle(&r, p));
        }
    }

    #[test]
    fn grouped_agrees_with_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n_groups = rng.gen_range(1..12);
            let per = rng.gen_range(1..6);
            let mut flat: Vec<Vec<f64>> = Vec::new();
            let mut weights = Vec::new();
            for _ in 0..n_groups {
                let mut d: Vec<f64> = (0..per).map(|_| rng.gen_range(0..15) as f64 * 0.25).collect();
                d.sort_by(f64::total_cmp);
                flat.push(d);
                weights.push(if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(1..4) as f64 });
            }
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            let groups: Vec<_> = flat
                .iter()
                .zip(&weights)
                .map(|(d, &w)| WeightedGroup { weight: w, sorted: d })
                .collect();
            let records: Vec<_> = flat
                .iter()
                .zip(&weights)
                .flat_map(|(d, &w)| d.iter().map(move |&x| CalibrationRecord::new(x, w)))
                .collect();
            let p = rng.gen_range(1..=10) as f64 / 10.0;
            assert_eq!(
                grouped_quantile_threshold(&groups, p).unwrap(),
                weighted_quantile_threshold(&records, p).unwrap()
            );
        }
    }

    #[test]
    fn grouped_handles_continuous_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut data: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let mut v: Vec<f64> = (0..7).map(|_| rng.gen::<f64>() * 3.0).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        data[3] = vec![0.0; 7];
        let weights: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let groups: Vec<_> = data
            .iter()
            .zip(&weights)
            .map(|(d, &w)| WeightedGroup { weight: w, sorted: d })
            .collect();
        let records: Vec<_> = data
            .iter()
            .zip(&weights)
            .flat_map(|(d, &w)| d.iter().map(move |&x| CalibrationRecord::new(x, w)))
            .collect();
        for p in [0.01, 0.05, 0.3, 0.77, 1.0] {
            let g = grouped_quantile_threshold(&groups, p).unwrap();
            assert_eq!(g, weighted_quantile_threshold(&records, p).unwrap());
            assert!(records.iter().any(|r| r.distance == g));
        }
    }

    proptest! {
        #[test]
        fn ess_is_scale_invariant(
            w in proptest::collection::vec(0.0f64..10.0, 1..50),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a = ess(&w).unwrap();
            let b = ess(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
            prop_assert!(a >= 1.0 - 1e-12 && a <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn quantile_crossing_is_tight(
            pairs in proptest::collection::vec((0u8..20, 0u8..5), 1..60),
            p_num in 1u32..=100,
        ) {
            let r: Vec<_> = pairs
                .iter()
                .map(|&(d, w)| CalibrationRecord::new(d as f64, w as f64))
                .collect();
            prop_assume!(r.iter().any(|x| x.weight > 0.0));
            let p = p_num as f64 / 100.0;
            let delta = weighted_quantile_threshold(&r, p).unwrap();
            prop_assert!(acceptance_fraction(&r, delta) >= p);
            let below = r
                .iter()
                .map(|x| x.distance)
                .filter(|&d| d < delta)
                .fold(f64::NEG_INFINITY, f64::max);
            if below.is_finite() {
                prop_assert!(acceptance_fraction(&r, below) < p);
            }
        }
    }
}
