//! Kolmogorov-Smirnov statistics.

use crate::error::{Error, Result};
use crate::init::Distribution;

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidState("NaN in KS sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample statistic against a continuous CDF:
/// `max_i max(i/n - F(x_i), F(x_i) - (i-1)/n)` over the sorted sample.
pub fn ks_one_sample_cdf<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        // Fused forms round once before the division, so rational results
        // such as 7/30 come out as the nearest double.
        let hi = (-n).mul_add(f, (i + 1) as f64) / n;
        let lo = n.mul_add(f, -(i as f64)) / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    Ok(d)
}

/// One-sample statistic against a prior. `None` when the prior has no
/// continuous CDF (constant or discrete).
pub fn ks_one_sample(samples: &[f64], prior: &Distribution) -> Result<Option<f64>> {
    if !prior.is_continuous() {
        return Ok(None);
    }
    ks_one_sample_cdf(samples, |x| prior.cdf(x).expect("continuous")).map(Some)
}

/// Two-sample statistic: `sup |F_n - G_m|` over the pooled sample points.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        // Step past every copy of the next pooled value in both samples.
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample critical value `c(alpha) * sqrt((n + m) / (n m))`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}
