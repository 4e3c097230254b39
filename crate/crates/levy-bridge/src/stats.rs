//! Statistical test helpers for the diagnostics: Kolmogorov–Smirnov,
//! chi-square goodness of fit, and z-tests, with deterministic fixed-order
//! reductions so that parallel path generation never changes reported digits.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Outcome of a KS test.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(statistic: f64, n_effective: f64) -> f64 {
    let sqrt_n = n_effective.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic)
}

fn check_sortable(sample: &[f64]) -> Result<()> {
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("sample contains NaN"));
    }
    if sample.len() < 8 {
        return Err(Error::invalid("sample too small for a KS test"));
    }
    Ok(())
}

/// Two-sample KS test. Sorts both samples in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> Result<KsResult> {
    check_sortable(a)?;
    check_sortable(b)?;
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x1 = a[i];
        let x2 = b[j];
        let x = x1.min(x2);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let n_eff = (n1 as f64 * n2 as f64) / (n1 as f64 + n2 as f64);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_effective: n_eff,
    })
}

/// One-sample KS test against a CDF evaluator. Sorts the sample in place.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> Result<KsResult> {
    check_sortable(sample)?;
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n_effective: n,
    })
}

/// Chi-square goodness of fit on binned counts against expected counts.
/// `extra_constraints` reduces the degrees of freedom below `bins - 1`.
pub fn chi_square_gof(
    observed: &[f64],
    expected: &[f64],
    extra_constraints: usize,
) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::invalid("chi-square needs matching nonempty bins"));
    }
    let mut stat = 0.0;
    let mut used = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o > 0.0 {
                return Err(Error::invalid(
                    "chi-square bin with zero expectation but nonzero count",
                ));
            }
            continue;
        }
        stat += (o - e) * (o - e) / e;
        used += 1;
    }
    if used < 2 + extra_constraints {
        return Err(Error::invalid("chi-square has no degrees of freedom"));
    }
    let dof = used - 1 - extra_constraints;
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::invalid(format!("chi-square dof: {e}")))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: 1.0 - dist.cdf(stat),
    })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Two-sided p-value of a z statistic.
pub fn z_two_sided_p(z: f64) -> f64 {
    2.0 * Normal::standard().cdf(-z.abs())
}

/// Upper quantile of the standard normal (`P(Z > value) = tail`).
pub fn normal_upper_quantile(tail: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - tail)
}

/// Deterministic pairwise summation (fixed reduction order).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let sq: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Classical table: Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.010.
        assert!((kolmogorov_sf(1.36) - 0.049).abs() < 0.002);
        assert!((kolmogorov_sf(1.63) - 0.010).abs() < 0.001);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_accepts_same_distribution() {
        let mut rng = path_rng(100, 0);
        let mut a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let mut b: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let r = ks_two_sample(&mut a, &mut b).unwrap();
        assert!(r.p_value > 0.001, "p={}", r.p_value);
        let mut c: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let one = ks_one_sample(&mut c, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(one.p_value > 0.001);
    }

    #[test]
    fn ks_rejects_shifted_distribution() {
        let mut rng = path_rng(101, 0);
        let mut a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let mut b: Vec<f64> = (0..4000).map(|_| rng.random::<f64>() + 0.2).collect();
        let r = ks_two_sample(&mut a, &mut b).unwrap();
        assert!(r.p_value < 1e-6, "p={}", r.p_value);
    }

    #[test]
    fn chi_square_detects_uniform_counts() {
        let observed = [98.0, 105.0, 97.0, 100.0];
        let expected = [100.0, 100.0, 100.0, 100.0];
        let r = chi_square_gof(&observed, &expected, 0).unwrap();
        assert_eq!(r.dof, 3);
        assert!(r.p_value > 0.9, "p={}", r.p_value);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_abs_diff_eq!(pairwise_sum(&xs), 1.5, epsilon = 1e-15);
        let (mean, se) = mean_and_se(&xs);
        assert_abs_diff_eq!(mean, 0.3, epsilon = 1e-15);
        assert!(se > 0.0);
    }

    #[test]
    fn normal_quantile_roundtrip() {
        let z = normal_upper_quantile(0.025);
        assert!((z - 1.959964).abs() < 1e-5);
        assert_abs_diff_eq!(z_two_sided_p(z), 0.05, epsilon = 1e-10);
    }
}
