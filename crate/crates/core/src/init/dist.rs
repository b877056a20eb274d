//! Parametric scalar distributions with closed-form statistics.

use std::f64::consts::{E, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

/// Truncation windows carrying less probability than this are rejected.
pub const MIN_TRUNCATED_MASS: f64 = 1e-12;
const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Distribution {
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal distribution, optionally truncated to `[lo, hi]` (either bound
    /// may be infinite).
    Gaussian {
        mean: f64,
        std: f64,
        truncate: Option<(f64, f64)>,
    },
    Discrete {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse standard normal CDF.
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `x * pdf(x)`, zero at infinite `x`.
fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * std_normal_pdf(x)
    }
}

impl Distribution {
    pub fn constant(value: f64) -> Self {
        Distribution::Constant { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Distribution::Uniform { lo, hi }
    }

    pub fn gaussian(mean: f64, std: f64) -> Self {
        Distribution::Gaussian { mean, std, truncate: None }
    }

    pub fn truncated_gaussian(mean: f64, std: f64, lo: f64, hi: f64) -> Self {
        Distribution::Gaussian { mean, std, truncate: Some((lo, hi)) }
    }

    pub fn discrete(values: Vec<f64>, weights: Vec<f64>) -> Self {
        Distribution::Discrete { values, weights }
    }

    /// Check parameters; the error string describes the offending parameter.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Distribution::Constant { value } => {
                if !value.is_finite() {
                    return Err(format!("constant must be finite, got {value}"));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err("uniform bounds must be finite".into());
                }
                if lo >= hi {
                    return Err(format!("uniform requires a < b, got a={lo}, b={hi}"));
                }
            }
            Distribution::Gaussian { mean, std, truncate } => {
                if !mean.is_finite() {
                    return Err("gaussian mean must be finite".into());
                }
                if !(std.is_finite() && *std > 0.0) {
                    return Err(format!("gaussian requires sigma > 0, got {std}"));
                }
                if let Some((lo, hi)) = truncate {
                    if lo.is_nan() || hi.is_nan() || lo >= hi {
                        return Err(format!("truncation bounds must satisfy lo < hi, got [{lo}, {hi}]"));
                    }
                    let z = self.truncated_mass();
                    if z < MIN_TRUNCATED_MASS {
                        return Err(format!(
                            "truncation window [{lo}, {hi}] holds probability {z:e} < {MIN_TRUNCATED_MASS:e}"
                        ));
                    }
                }
            }
            Distribution::Discrete { values, weights } => {
                if values.is_empty() {
                    return Err("discrete distribution needs at least one value".into());
                }
                if values.len() != weights.len() {
                    return Err(format!(
                        "discrete has {} values but {} weights",
                        values.len(),
                        weights.len()
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err("discrete values must be finite".into());
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err("discrete weights must be non-negative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(format!("discrete weights sum to {total}, expected 1"));
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Distribution::Uniform { .. } | Distribution::Gaussian { .. })
    }

    /// Standardized truncation bounds `(alpha, beta)`.
    fn std_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Distribution::Gaussian { mean, std, truncate: Some((lo, hi)) } => {
                Some(((lo - mean) / std, (hi - mean) / std))
            }
            _ => None,
        }
    }

    /// Probability the untruncated normal assigns to the truncation window.
    fn truncated_mass(&self) -> f64 {
        match self.std_bounds() {
            Some((a, b)) => {
                if a > 0.0 {
                    std_normal_cdf(-a) - std_normal_cdf(-b)
                } else {
                    std_normal_cdf(b) - std_normal_cdf(a)
                }
            }
            None => 1.0,
        }
    }

    /// Draw one value. Truncated Gaussians use inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Constant { value } => *value,
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Distribution::Gaussian { mean, std, truncate: None } => {
                Normal::new(*mean, *std).expect("validated sigma").sample(rng)
            }
            Distribution::Gaussian { mean, std, truncate: Some((lo, hi)) } => {
                let (a, b) = self.std_bounds().expect("truncated");
                // Open interval keeps the quantile finite.
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                let z = if a > 0.0 {
                    let qa = std_normal_cdf(-a);
                    let qb = std_normal_cdf(-b);
                    -std_normal_quantile(qb + u * (qa - qb))
                } else {
                    let pa = std_normal_cdf(a);
                    let pb = std_normal_cdf(b);
                    std_normal_quantile(pa + u * (pb - pa))
                };
                (mean + std * z).clamp(*lo, *hi)
            }
            Distribution::Discrete { values, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                // Rounding left a sliver above the last cumulative weight.
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(values.len() - 1);
                values[last]
            }
        }
    }

    /// Density; `None` for discrete and constant distributions.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match *self {
            Distribution::Uniform { lo, hi } => {
                Some(if x >= lo && x <= hi { 1.0 / (hi - lo) } else { 0.0 })
            }
            Distribution::Gaussian { mean, std, truncate } => {
                let z = (x - mean) / std;
                match truncate {
                    None => Some(std_normal_pdf(z) / std),
                    Some((lo, hi)) => {
                        if x < lo || x > hi {
                            Some(0.0)
                        } else {
                            Some(std_normal_pdf(z) / (std * self.truncated_mass()))
                        }
                    }
                }
            }
            _ => None,
        }
    }

    /// Cumulative distribution; `None` for discrete and constant distributions.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match *self {
            Distribution::Uniform { lo, hi } => Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0)),
            Distribution::Gaussian { mean, std, truncate } => {
                let z = (x - mean) / std;
                match truncate {
                    None => Some(std_normal_cdf(z)),
                    Some((lo, hi)) => {
                        if x <= lo {
                            return Some(0.0);
                        }
                        if x >= hi {
                            return Some(1.0);
                        }
                        let (a, _) = self.std_bounds().expect("truncated");
                        let num = if a > 0.0 {
                            std_normal_cdf(-a) - std_normal_cdf(-z)
                        } else {
                            std_normal_cdf(z) - std_normal_cdf(a)
                        };
                        Some((num / self.truncated_mass()).clamp(0.0, 1.0))
                    }
                }
            }
            _ => None,
        }
    }

    /// Differential entropy (continuous) or Shannon entropy (discrete), in
    /// nats. A constant has entropy zero.
    pub fn entropy(&self) -> f64 {
        match self {
            Distribution::Constant { .. } => 0.0,
            Distribution::Uniform { lo, hi } => (hi - lo).ln(),
            Distribution::Gaussian { std, truncate: None, .. } => {
                0.5 * (2.0 * PI * E * std * std).ln()
            }
            Distribution::Gaussian { std, truncate: Some(_), .. } => {
                let (a, b) = self.std_bounds().expect("truncated");
                let z = self.truncated_mass();
                ((2.0 * PI * E).sqrt() * std * z).ln() + (x_pdf(a) - x_pdf(b)) / (2.0 * z)
            }
            Distribution::Discrete { weights, .. } => weights
                .iter()
                .filter(|w| **w > 0.0)
                .map(|w| -w * w.ln())
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Constant { value } => *value,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Gaussian { mean, truncate: None, .. } => *mean,
            Distribution::Gaussian { mean, std, truncate: Some(_) } => {
                let (a, b) = self.std_bounds().expect("truncated");
                mean + std * (pdf_or_zero(a) - pdf_or_zero(b)) / self.truncated_mass()
            }
            Distribution::Discrete { values, weights } => {
                values.iter().zip(weights).map(|(v, w)| v * w).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Constant { .. } => 0.0,
            Distribution::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Distribution::Gaussian { std, truncate: None, .. } => std * std,
            Distribution::Gaussian { std, truncate: Some(_), .. } => {
                let (a, b) = self.std_bounds().expect("truncated");
                let z = self.truncated_mass();
                let d = (pdf_or_zero(a) - pdf_or_zero(b)) / z;
                std * std * (1.0 + (x_pdf(a) - x_pdf(b)) / z - d * d)
            }
            Distribution::Discrete { values, weights } => {
                let m = self.mean();
                values.iter().zip(weights).map(|(v, w)| w * (v - m).powi(2)).sum()
            }
        }
    }

    /// Interval holding (almost) all of the mass: exact for bounded
    /// distributions, `mean ± 4 sigma` clipped to the truncation otherwise.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Constant { value } => (*value, *value),
            Distribution::Uniform { lo, hi } => (*lo, *hi),
            Distribution::Gaussian { mean, std, truncate } => {
                let (mut lo, mut hi) = (mean - 4.0 * std, mean + 4.0 * std);
                if let Some((tl, th)) = truncate {
                    lo = lo.max(*tl);
                    hi = hi.min(*th);
                }
                (lo, hi)
            }
            Distribution::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v))),
        }
    }

    /// Widen by `factor` about the centre. Constants and discrete
    /// distributions are unchanged; truncation bounds are kept.
    pub fn scale_width(&self, factor: f64) -> Distribution {
        match self {
            Distribution::Uniform { lo, hi } => {
                let c = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo) * factor;
                Distribution::Uniform { lo: c - h, hi: c + h }
            }
            Distribution::Gaussian { mean, std, truncate } => Distribution::Gaussian {
                mean: *mean,
                std: std * factor,
                truncate: *truncate,
            },
            other => other.clone(),
        }
    }
}

fn pdf_or_zero(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        std_normal_pdf(x)
    }
}

/// Monte Carlo estimate of entropy, `-E[ln p(X)]`, from `n` draws.
pub fn monte_carlo_entropy<R: Rng + ?Sized>(dist: &Distribution, n: usize, rng: &mut R) -> f64 {
    match dist {
        Distribution::Constant { .. } => 0.0,
        Distribution::Discrete { values, weights } => {
            let mut total = 0.0;
            for _ in 0..n {
                let x = dist.sample(rng);
                let w: f64 = values
                    .iter()
                    .zip(weights)
                    .filter(|(v, _)| **v == x)
                    .map(|(_, w)| *w)
                    .sum();
                total -= w.ln();
            }
            total / n as f64
        }
        _ => {
            let mut total = 0.0;
            for _ in 0..n {
                let x = dist.sample(rng);
                total -= dist.pdf(x).expect("continuous").ln();
            }
            total / n as f64
        }
    }
}
