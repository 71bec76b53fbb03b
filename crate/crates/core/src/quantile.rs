//! Quantile estimators for Monte Carlo boundary estimation.
//!
//! The default is the Harrell–Davis estimator, a beta-weighted average of all
//! order statistics,
//!
//! ```text
//! Q(p) = Σ_i w_i X_(i),   w_i = I_{i/N}(a, b) - I_{(i-1)/N}(a, b),
//! a = p (N + 1),  b = (1 - p)(N + 1),
//! ```
//!
//! which is smooth, bandwidth-free and consistent. Plain empirical inversion
//! is available as an alternative.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMethod {
    #[default]
    HarrellDavis,
    /// Smallest sample value whose strict upper-tail proportion is at most
    /// `1 - level`.
    Empirical,
}

impl std::str::FromStr for QuantileMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harrell-davis" | "hd" | "smooth" => Ok(QuantileMethod::HarrellDavis),
            "empirical" => Ok(QuantileMethod::Empirical),
            other => Err(Error::domain(format!("unknown quantile method '{other}'"))),
        }
    }
}

fn check(samples: &[f64], level: f64) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::domain("quantile of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("quantile level {level} outside (0, 1)")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite sample value"));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn harrell_davis_sorted(x: &[f64], level: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        return x[0];
    }
    let a = level * (n as f64 + 1.0);
    let b = (1.0 - level) * (n as f64 + 1.0);
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let cdf = if i + 1 == n {
            1.0
        } else {
            beta_reg(a, b, (i + 1) as f64 / n as f64)
        };
        acc += (cdf - prev) * xi;
        prev = cdf;
    }
    // weights sum to one; clamp guards rounding at constant samples
    acc.clamp(x[0], x[n - 1])
}

/// Smallest sample value `x` with `#{y > x} / N <= tail`.
fn empirical_upper_sorted(x: &[f64], tail: f64) -> f64 {
    let n = x.len();
    let allowed = (tail * n as f64 + 1e-9 * n as f64).floor() as usize;
    // at most `allowed` values may exceed the answer
    x[n.saturating_sub(allowed + 1)]
}

/// Harrell–Davis estimate of the `level` quantile.
pub fn nonparametric_quantile(samples: &[f64], level: f64) -> Result<f64> {
    check(samples, level)?;
    Ok(harrell_davis_sorted(&sorted(samples), level))
}

pub fn quantile(samples: &[f64], level: f64, method: QuantileMethod) -> Result<f64> {
    check(samples, level)?;
    let x = sorted(samples);
    Ok(match method {
        QuantileMethod::HarrellDavis => harrell_davis_sorted(&x, level),
        QuantileMethod::Empirical => empirical_upper_sorted(&x, 1.0 - level),
    })
}

fn strict_tail(x: &[f64], d: f64) -> f64 {
    let above = x.len() - x.partition_point(|&v| v <= d);
    above as f64 / x.len() as f64
}

/// Critical value `d` for an upper-tailed test rejecting on `V > d` at level
/// `alpha`.
///
/// The `(1 - alpha)` quantile is estimated by `method`. When tied sample
/// values bracket the estimate and the strict empirical tail there still
/// exceeds `alpha`, `d` is raised to the smallest sample value whose strict
/// tail is at most `alpha`. `alpha <= 0` yields `+∞` (never reject) and
/// `alpha >= 1` yields `-∞`.
pub fn upper_critical_value(samples: &[f64], alpha: f64, method: QuantileMethod) -> Result<f64> {
    if alpha <= 0.0 {
        return Ok(f64::INFINITY);
    }
    if alpha >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    check(samples, 1.0 - alpha)?;
    let x = sorted(samples);
    let d = match method {
        QuantileMethod::HarrellDavis => harrell_davis_sorted(&x, 1.0 - alpha),
        QuantileMethod::Empirical => return Ok(empirical_upper_sorted(&x, alpha)),
    };
    // Rejection is on V > d, so only the sample values bracketing d matter.
    // If either is tied and the strict tail at d still exceeds alpha, the
    // smoothed estimate is too low for this discrete sample.
    let split = x.partition_point(|&v| v <= d);
    let multiplicity = |v: f64| x.partition_point(|&y| y <= v) - x.partition_point(|&y| y < v);
    let tied = [split.checked_sub(1), (split < x.len()).then_some(split)]
        .into_iter()
        .flatten()
        .any(|i| multiplicity(x[i]) >= 2);
    if tied && strict_tail(&x, d) > alpha {
        return Ok(empirical_upper_sorted(&x, alpha));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = nonparametric_quantile(&grid, 0.5).unwrap();
        assert!((m - 50.5).abs() <= 0.5, "{m}");
        assert_eq!(nonparametric_quantile(&[3.0; 17], 0.3).unwrap(), 3.0);
        assert_eq!(quantile(&[3.0; 17], 0.9, QuantileMethod::Empirical).unwrap(), 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
        let q = nonparametric_quantile(&u, 0.9).unwrap();
        assert!((q - 0.9).abs() < 0.005, "{q}");
        let q = quantile(&u, 0.9, QuantileMethod::Empirical).unwrap();
        assert!((q - 0.9).abs() < 0.005, "{q}");
        assert!(nonparametric_quantile(&[], 0.5).is_err());
        assert!(nonparametric_quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn empirical_inversion() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        // at most one value above d
        assert_eq!(quantile(&x, 0.9, QuantileMethod::Empirical).unwrap(), 9.0);
        assert_eq!(quantile(&x, 0.85, QuantileMethod::Empirical).unwrap(), 9.0);
        assert_eq!(quantile(&x, 0.95, QuantileMethod::Empirical).unwrap(), 10.0);
    }

    #[test]
    fn critical_values() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(upper_critical_value(&x, 0.0, QuantileMethod::HarrellDavis).unwrap(), f64::INFINITY);
        // heavy ties at the estimate are resolved conservatively
        let mut tied = vec![0.0; 50];
        tied.extend(vec![1.0; 45]);
        tied.extend(vec![2.0; 5]);
        let d = upper_critical_value(&tied, 0.2, QuantileMethod::HarrellDavis).unwrap();
        assert!(strict_tail(&sorted(&tied), d) <= 0.2, "{d}");
        let d = upper_critical_value(&tied, 0.04, QuantileMethod::HarrellDavis).unwrap();
        assert!(strict_tail(&sorted(&tied), d) <= 0.04, "{d}");
    }
}
