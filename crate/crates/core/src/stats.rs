//! Statistical test primitives shared by the verification suites: z-tests,
//! a Kolmogorov–Smirnov test against the unit exponential, a dispersion
//! (index-of-variance) test for Poisson counts, and a percentile bootstrap.
//!
//! Every routine returns a two-sided p-value; suites combine components with
//! a Bonferroni correction so the family-wise error rate stays at the chosen
//! level regardless of how many components a suite inspects.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn normal_two_sided(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * n.cdf(-z.abs())).min(1.0)
}

/// Two-sided z-test that the mean of `diffs` is zero (paired design: each
/// entry is one replica's difference). Returns `(z, p)`.
pub fn paired_z(diffs: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_var(diffs);
    let se = (var / diffs.len() as f64).sqrt();
    let z = if se == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY * mean.signum()
        }
    } else {
        mean / se
    };
    (z, normal_two_sided(z))
}

/// Two-sided z-test that two independent samples share a mean. Returns
/// `(z, p)`.
pub fn two_sample_z(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let se = (vx / xs.len() as f64 + vy / ys.len() as f64).sqrt();
    let z = if se == 0.0 {
        if mx == my {
            0.0
        } else {
            f64::INFINITY * (mx - my).signum()
        }
    } else {
        (mx - my) / se
    };
    (z, normal_two_sided(z))
}

/// Two-sided z-test of a sample mean against a known constant. Returns
/// `(z, p)`.
pub fn one_sample_z(xs: &[f64], mean0: f64) -> (f64, f64) {
    let (mean, var) = mean_var(xs);
    let se = (var / xs.len() as f64).sqrt();
    let z = if se == 0.0 {
        if mean == mean0 {
            0.0
        } else {
            f64::INFINITY * (mean - mean0).signum()
        }
    } else {
        (mean - mean0) / se
    };
    (z, normal_two_sided(z))
}

/// Survival function of the Kolmogorov distribution, `P(K > t)`, via the two
/// classical series (the theta-function form below 1.18, the alternating
/// form above).
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / t
            * (q + q.powi(9) + q.powi(25) + q.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k as f64 * t).powi(2)).exp();
            let signed = if k % 2 == 1 { term } else { -term };
            sum += signed;
            if term < 1e-16 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Kolmogorov–Smirnov test of a sample against the unit exponential, using
/// the finite-sample statistic rescaling `(sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
/// Returns `(d, p)`.
pub fn ks_exponential(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = 1.0 - (-x).exp();
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let t = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    (d, kolmogorov_sf(t))
}

/// Dispersion (variance-to-mean) test for Poisson counts: under the Poisson
/// hypothesis `(n-1) s^2 / mean` is chi-squared with `n - 1` degrees of
/// freedom. Returns `(index, p)` with a two-sided p-value.
pub fn dispersion_test(counts: &[u64]) -> (f64, f64) {
    let n = counts.len();
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean, var) = mean_var(&xs);
    if n < 2 || mean == 0.0 {
        return (f64::NAN, 1.0);
    }
    let index = (n as f64 - 1.0) * var / mean;
    let chi = ChiSquared::new(n as f64 - 1.0).expect("valid dof");
    let cdf = chi.cdf(index);
    let p = (2.0 * cdf.min(1.0 - cdf)).min(1.0);
    (index, p)
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let cov = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1.0);
    cov / (vx * vy).sqrt()
}

/// Percentile bootstrap confidence interval for the mean at the given level.
pub fn bootstrap_ci(xs: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&(1.0 - level)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let m = (0..xs.len())
            .map(|_| xs[rng.gen_range(0..xs.len())])
            .sum::<f64>()
            / xs.len() as f64;
        means.push(m);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let lo_idx = ((1.0 - level) / 2.0 * resamples as f64) as usize;
    let hi_idx = (resamples - 1).min(resamples - 1 - lo_idx);
    (means[lo_idx], means[hi_idx])
}

/// Bonferroni-corrected family decision: does any of `m` p-values fall below
/// `alpha / m`?
pub fn bonferroni_reject(p_values: &[f64], alpha: f64) -> bool {
    let m = p_values.len() as f64;
    p_values.iter().any(|&p| p < alpha / m)
}

/// The z threshold at which a two-sided component test becomes significant
/// after a Bonferroni correction over `m` components.
pub fn bonferroni_z_threshold(alpha: f64, m: usize) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - alpha / (2.0 * m as f64))
}

/// Deterministic per-replica random stream: one base seed, one independent
/// stream per replica index.
pub fn replica_rng(base_seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn mean_var_matches_hand_computation() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn paired_z_detects_shift_and_accepts_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let null: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (_, p) = paired_z(&null);
        assert!(p > 1e-4);
        let shifted: Vec<f64> = null.iter().map(|x| x + 0.05).collect();
        let (z, p) = paired_z(&shifted);
        assert!(z > 5.0 && p < 1e-6);
    }

    #[test]
    fn two_sample_z_symmetric_under_swap() {
        let a = [1.0, 2.0, 3.0, 2.0, 1.5];
        let b = [2.0, 2.5, 3.5, 2.0, 2.5];
        let (z1, p1) = two_sample_z(&a, &b);
        let (z2, p2) = two_sample_z(&b, &a);
        assert!((z1 + z2).abs() < 1e-15);
        assert!((p1 - p2).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // classical table: Q(0.8276) ~ 0.5, Q(1.2238) ~ 0.1, Q(1.6276) ~ 0.01
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 5e-4);
        assert!((kolmogorov_sf(1.2238) - 0.1).abs() < 5e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 5e-4);
        // the two series hand over continuously (|Q'| ~ 0.58 near 1.18, so
        // the gap over 2e-4 in t stays near 1.2e-4)
        assert!((kolmogorov_sf(1.1799) - kolmogorov_sf(1.1801)).abs() < 3e-4);
    }

    #[test]
    fn ks_accepts_exponential_and_rejects_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let exp: Vec<f64> = (0..2000).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let (_, p) = ks_exponential(&exp);
        assert!(p > 0.001, "p = {p}");
        let unif: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks_exponential(&unif);
        assert!(p < 1e-10);
    }

    #[test]
    fn dispersion_accepts_poisson_and_rejects_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Poisson(4) via thinning a fine Bernoulli grid
        let poisson: Vec<u64> = (0..3000)
            .map(|_| (0..4000).filter(|_| rng.gen::<f64>() < 0.001).count() as u64)
            .collect();
        let (index, p) = dispersion_test(&poisson);
        assert!(p > 0.001, "index {index} p {p}");
        // Binomial(6, 2/3) has the same mean but is underdispersed
        let binom: Vec<u64> = (0..3000)
            .map(|_| (0..6).filter(|_| rng.gen::<f64>() < 2.0 / 3.0).count() as u64)
            .collect();
        let (_, p) = dispersion_test(&binom);
        assert!(p < 1e-10);
    }

    #[test]
    fn correlation_of_independent_streams_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen()).collect();
        let ys: Vec<f64> = (0..5000).map(|_| rng.gen()).collect();
        assert!(correlation(&xs, &ys).abs() < 0.05);
        assert!((correlation(&xs, &xs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let xs: Vec<f64> = (0..500).map(|i| (i % 10) as f64).collect();
        let (lo, hi) = bootstrap_ci(&xs, 0.95, 2000, 3);
        assert!(lo < 4.5 && 4.5 < hi);
        assert!(hi - lo < 1.0);
    }

    #[test]
    fn bonferroni_threshold_and_decision_agree() {
        let z = bonferroni_z_threshold(0.01, 28);
        assert!(z > 3.0 && z < 4.5);
        // a component exactly at the threshold is not a rejection
        let p_at = 0.01 / 28.0;
        assert!(!bonferroni_reject(&vec![p_at; 28], 0.01));
        let mut ps = vec![0.5; 28];
        ps[5] = p_at / 2.0;
        assert!(bonferroni_reject(&ps, 0.01));
    }

    #[test]
    fn replica_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = replica_rng(42, 0);
            (0..4).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = replica_rng(42, 0);
            (0..4).map(|_| r.gen()).collect()
        };
        let c: Vec<u64> = {
            let mut r = replica_rng(42, 1);
            (0..4).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
