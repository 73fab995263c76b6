//! One-sample Kolmogorov–Smirnov test, used to check calibration of
//! simulated statistics and p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Supremum distance between the empirical and the reference cdf.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `sup |F_n - F|` for a continuous reference cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic Kolmogorov tail `P(D_n > d)` with Stephens' finite-sample
/// scaling `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) d`.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    let statistic = ks_statistic(sample, cdf)?;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_pvalue(statistic, sample.len()),
        n: sample.len(),
    })
}
