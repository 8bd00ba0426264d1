//! Small descriptive and goodness-of-fit helpers shared by the tests and the harness.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor n-1). `NaN` for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F>(samples: &[f64], mut cdf: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if samples.is_empty() {
        return Err(Error::domain("KS statistic of an empty sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x)?;
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic Kolmogorov tail `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Approximate p-value of a KS statistic `d` at sample size `n`, using
/// Stephens' finite-sample scaling `(sqrt(n) + 0.12 + 0.11/sqrt(n)) * d`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// KS test of `samples` against U(0, 1); returns (statistic, p-value).
pub fn ks_uniform_test(samples: &[f64]) -> Result<(f64, f64)> {
    let d = ks_statistic(samples, |x| Ok(x.clamp(0.0, 1.0)))?;
    Ok((d, ks_p_value(d, samples.len())))
}

fn ln_binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    let (n_f, k_f) = (n as f64, k as f64);
    libm::lgamma(n_f + 1.0) - libm::lgamma(k_f + 1.0) - libm::lgamma(n_f - k_f + 1.0)
        + k_f * p.ln()
        + (n_f - k_f) * (1.0 - p).ln()
}

/// Equal-tailed acceptance band `[lo, hi]` (in counts) holding at least `level`
/// of the Binomial(n, p) mass: `P(X < lo) <= (1-level)/2` and `P(X > hi) <= (1-level)/2`.
pub fn binomial_acceptance_band(n: u64, p: f64, level: f64) -> Result<(u64, u64)> {
    if !(p > 0.0 && p < 1.0) || !(level > 0.0 && level < 1.0) || n == 0 {
        return Err(Error::domain("binomial band requires n > 0, p and level in (0, 1)"));
    }
    let half = (1.0 - level) / 2.0;
    let pmf: Vec<f64> = (0..=n).map(|k| ln_binomial_pmf(k, n, p).exp()).collect();
    let mut lo = 0;
    let mut acc = 0.0;
    while lo < n && acc + pmf[lo as usize] <= half {
        acc += pmf[lo as usize];
        lo += 1;
    }
    let mut hi = n;
    acc = 0.0;
    while hi > 0 && acc + pmf[hi as usize] <= half {
        acc += pmf[hi as usize];
        hi -= 1;
    }
    Ok((lo, hi))
}
