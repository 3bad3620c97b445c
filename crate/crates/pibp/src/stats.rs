//! Statistical test helpers for the self-test suites and acceptance checks:
//! Kolmogorov-Smirnov (one- and two-sample) and chi-square goodness of fit.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Copy)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution,
/// Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..101 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    // Stephens' small-sample correction for the asymptotic distribution.
    let root = n_eff.sqrt();
    kolmogorov_sf(d * (root + 0.12 + 0.11 / root))
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> TestResult {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Two-sample KS test. Ties are handled by stepping both empirical CDFs
/// through the merged order; for discrete data the p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xa[i].min(xb[j]);
        while i < n && xa[i] <= x {
            i += 1;
        }
        while j < m && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
    }
}

fn chi_squared_sf(stat: f64, dof: f64) -> f64 {
    if dof < 1.0 {
        return 1.0;
    }
    ChiSquared::new(dof).expect("valid dof").sf(stat)
}

/// Chi-square goodness of fit of integer-valued counts against a pmf.
///
/// `counts[v]` is the number of observations equal to `v`. Cells are pooled
/// from the right until every expected count is at least `min_expected`
/// (observations above the last cell are folded into the tail on entry by
/// the caller simply by sizing `counts` appropriately; the tail cell here
/// absorbs all remaining pmf mass).
pub fn chi_square_counts_vs_pmf<F: Fn(usize) -> f64>(
    counts: &[u64],
    pmf: F,
    min_expected: f64,
) -> TestResult {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut used_mass = 0.0;
    for (v, &c) in counts.iter().enumerate() {
        let p = if v + 1 == counts.len() {
            (1.0 - used_mass).max(0.0)
        } else {
            pmf(v)
        };
        used_mass += pmf(v);
        cells.push((c as f64, nf * p));
    }
    pool_and_score(cells, min_expected)
}

/// Two-sample chi-square homogeneity test on aligned count vectors.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_expected: f64) -> TestResult {
    let len = a.len().max(b.len());
    let get = |xs: &[u64], i: usize| *xs.get(i).unwrap_or(&0) as f64;
    let (na, nb): (f64, f64) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    // Pool from the right so every pooled cell has a healthy total.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0.0, 0.0);
    for i in (0..len).rev() {
        acc_a += get(a, i);
        acc_b += get(b, i);
        let tot = acc_a + acc_b;
        if tot * (na.min(nb) / (na + nb)) >= min_expected || (i == 0 && !cells.is_empty()) {
            cells.push((acc_a, acc_b));
            acc_a = 0.0;
            acc_b = 0.0;
        }
    }
    if acc_a + acc_b > 0.0 || cells.is_empty() {
        cells.push((acc_a, acc_b));
    }
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let mut stat = 0.0;
    for &(oa, ob) in &cells {
        let tot = oa + ob;
        if tot > 0.0 {
            let diff = ka * oa - kb * ob;
            stat += diff * diff / tot;
        }
    }
    let dof = (cells.len() as f64 - 1.0).max(1.0);
    TestResult {
        statistic: stat,
        p_value: chi_squared_sf(stat, dof),
    }
}

fn pool_and_score(cells: Vec<(f64, f64)>, min_expected: f64) -> TestResult {
    // Merge under-populated cells rightward into their neighbor.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in cells {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            pooled.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => pooled.push((o_acc, e_acc)),
        }
    }
    let mut stat = 0.0;
    for &(o, e) in &pooled {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        }
    }
    let dof = (pooled.len() as f64 - 1.0).max(1.0);
    TestResult {
        statistic: stat,
        p_value: chi_squared_sf(stat, dof),
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Q(0.828) ≈ 0.5 and Q(1.36) ≈ 0.049 (classic table entries).
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 1e-3);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 2e-3);
    }

    #[test]
    fn ks_uniform_accepts_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.p_value > 0.01, "p={}", r.p_value);
    }

    #[test]
    fn ks_uniform_rejects_skewed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powi(2)).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.p_value < 1e-6, "p={}", r.p_value);
    }

    #[test]
    fn two_sample_ks_same_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..5_000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..5_000).map(|_| rng.random::<f64>()).collect();
        let r = ks_two_sample(&a, &b);
        assert!(r.p_value > 0.01, "p={}", r.p_value);
    }

    #[test]
    fn chi_square_poisson_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 2.0f64;
        let mut counts = vec![0u64; 15];
        for _ in 0..50_000 {
            // Inverse-cdf Poisson draw, independent of rand_distr.
            let mut u: f64 = rng.random();
            let mut p = (-lambda).exp();
            let mut k = 0usize;
            while u > p && k + 1 < counts.len() {
                u -= p;
                k += 1;
                p *= lambda / k as f64;
            }
            counts[k] += 1;
        }
        let pmf = |k: usize| {
            let mut p = (-lambda).exp();
            for i in 1..=k {
                p *= lambda / i as f64;
            }
            p
        };
        let r = chi_square_counts_vs_pmf(&counts, pmf, 5.0);
        assert!(r.p_value > 0.01, "stat={} p={}", r.statistic, r.p_value);
    }

    #[test]
    fn chi_square_two_sample_same_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = vec![0u64; 10];
        let mut b = vec![0u64; 10];
        for _ in 0..30_000 {
            a[rng.random_range(0..4usize)] += 1;
            b[rng.random_range(0..4usize)] += 1;
        }
        let r = chi_square_two_sample(&a, &b, 5.0);
        assert!(r.p_value > 0.01, "p={}", r.p_value);
    }
}
