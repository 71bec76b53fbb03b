//! Monte Carlo p-values and sample-size planning.
//!
//! Two estimators target `p_c = P(V >= v* | N_1(n) = n_1)`:
//!
//! * **direct conditional**: the mean of `1[V(T_k) >= v*]` over `N_c` draws
//!   from the conditional reference set;
//! * **rejection**: `Σ X_j / Σ Y_j` over `K` unconditional draws, where `Y_j`
//!   flags draws meeting `N_1(n) = n_1` and `X_j = Y_j 1[V >= v*]`.
//!
//! Replicate `i` always reads substream `i`, so estimates are bit-identical
//! for any number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::exact_dist::{ln_unconditional_pmf, unconditional_pmf};
use crate::ranktest::{ScoreVector, StratifiedData};
use crate::rng::{tag, StreamSeed};
use crate::sampler::ConditionalSampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    DirectConditional,
    Rejection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PValueEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    /// Sequences the estimate averages over.
    pub n_effective: u64,
    pub method: EstimatorMethod,
}

impl PValueEstimate {
    fn from_counts(hits: u64, n_effective: u64, method: EstimatorMethod) -> Self {
        let estimate = hits as f64 / n_effective as f64;
        PValueEstimate {
            estimate,
            standard_error: (estimate * (1.0 - estimate) / n_effective as f64).sqrt(),
            n_effective,
            method,
        }
    }
}

/// Absolute slack for `V >= v*`, absorbing floating summation order.
pub fn tie_tolerance(scores: &ScoreVector) -> f64 {
    1e-9 * scores.scores().iter().map(|a| a.abs()).sum::<f64>().max(1.0)
}

/// Direct conditional estimate using a prepared sampler.
pub fn estimate_pvalue_with_sampler(
    sampler: &ConditionalSampler,
    scores: &ScoreVector,
    v_star: f64,
    n_c: u64,
    seed: StreamSeed,
) -> Result<PValueEstimate> {
    if n_c < 1 {
        return Err(Error::domain("Monte Carlo size N_c must be at least 1"));
    }
    if scores.len() as u64 != sampler.horizon() {
        return Err(Error::domain(format!(
            "{} scores for a horizon of {}",
            scores.len(),
            sampler.horizon()
        )));
    }
    let threshold = v_star - tie_tolerance(scores);
    let hits: u64 = (0..n_c)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let mut rng = seed.stream(tag::PVALUE, i);
            sampler.sample_into(&mut rng, buf);
            (scores.dot(buf) >= threshold) as u64
        })
        .sum();
    Ok(PValueEstimate::from_counts(hits, n_c, EstimatorMethod::DirectConditional))
}

/// Direct conditional estimate of `P(V >= v* | N_1(n) = n_1)` with
/// `n = scores.len()`.
pub fn estimate_pvalue_conditional(
    design: &DesignSpec,
    n1: u64,
    scores: &ScoreVector,
    v_star: f64,
    n_c: u64,
    seed: StreamSeed,
) -> Result<PValueEstimate> {
    let sampler = ConditionalSampler::new(*design, scores.len() as u64, n1)?;
    estimate_pvalue_with_sampler(&sampler, scores, v_star, n_c, seed)
}

/// Rejection estimate from `attempts` unconditional draws.
pub fn estimate_pvalue_rejection(
    design: &DesignSpec,
    n1: u64,
    scores: &ScoreVector,
    v_star: f64,
    attempts: u64,
    seed: StreamSeed,
) -> Result<PValueEstimate> {
    if attempts < 1 {
        return Err(Error::domain("attempt count K must be at least 1"));
    }
    let n = scores.len() as u64;
    if n1 > n {
        return Err(Error::domain(format!("n_1 = {n1} exceeds n = {n}")));
    }
    let threshold = v_star - tie_tolerance(scores);
    let a = scores.scores();
    let (hits, accepted) = (0..attempts)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(tag::REJECTION, i);
            let (mut m, mut v) = (0u64, 0.0);
            for (j, aj) in a.iter().enumerate() {
                if rng.random::<f64>() < design.phi(j as u64, m) {
                    m += 1;
                    v += aj;
                }
            }
            if m == n1 {
                ((v >= threshold) as u64, 1u64)
            } else {
                (0, 0)
            }
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    if accepted == 0 {
        return Err(Error::InsufficientAcceptances {
            attempts: attempts as usize,
        });
    }
    Ok(PValueEstimate::from_counts(hits, accepted, EstimatorMethod::Rejection))
}

/// Direct conditional estimate for the sum of per-stratum statistics, each
/// stratum sampled independently from its own conditional reference set.
pub fn estimate_pvalue_stratified(
    data: &StratifiedData,
    v_star: f64,
    n_c: u64,
    seed: StreamSeed,
) -> Result<PValueEstimate> {
    if n_c < 1 {
        return Err(Error::domain("Monte Carlo size N_c must be at least 1"));
    }
    if data.strata.is_empty() {
        return Err(Error::domain("no strata"));
    }
    let samplers = data
        .strata
        .iter()
        .map(|s| ConditionalSampler::new(s.design, s.scores.len() as u64, s.n1))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<StreamSeed> = (0..data.strata.len())
        .map(|s| seed.child(tag::STRATUM, s as u64))
        .collect();
    let tol: f64 = data.strata.iter().map(|s| tie_tolerance(&s.scores)).sum();
    let threshold = v_star - tol;
    let hits: u64 = (0..n_c)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let mut v = 0.0;
            for ((stratum, sampler), s) in data.strata.iter().zip(&samplers).zip(&seeds) {
                let mut rng = s.stream(tag::PVALUE, i);
                sampler.sample_into(&mut rng, buf);
                v += stratum.scores.dot(buf);
            }
            (v >= threshold) as u64
        })
        .sum();
    Ok(PValueEstimate::from_counts(hits, n_c, EstimatorMethod::DirectConditional))
}

/// `ln P(Bin(k, π) <= r - 1)` from log-space terms
/// `T_{i+1} = T_i (k - i)/(i + 1) · π/(1 - π)`.
fn ln_binomial_lower_tail(k: u128, ln_pi: f64, ln_1m_pi: f64, r: u64) -> f64 {
    let kf = k as f64;
    let ratio = ln_pi - ln_1m_pi;
    let mut term = kf * ln_1m_pi;
    let mut terms = Vec::with_capacity(r as usize);
    let upper = if k < r as u128 { k as u64 + 1 } else { r };
    for i in 0..upper {
        terms.push(term);
        term += (kf - i as f64).ln() - ((i + 1) as f64).ln() + ratio;
    }
    crate::numeric::ln_sum_exp(terms)
}

/// Smallest `k` such that the number of unconditional draws needed for
/// `N_c` acceptances, `K ~ NegBin(r = N_c, π = P(N_1(n) = n_1))` counted
/// with the successes, satisfies `P(K <= k) >= level`.
pub fn k_percentile(design: &DesignSpec, n: u64, n1: u64, n_c: u64, level: f64) -> Result<u128> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("level {level} outside (0, 1)")));
    }
    if n_c < 1 {
        return Err(Error::domain("N_c must be at least 1"));
    }
    let ln_pi = ln_unconditional_pmf(design, n, n1)?;
    if ln_pi == f64::NEG_INFINITY {
        return Err(Error::domain(format!(
            "P(N_1({n}) = {n1}) = 0 under {design}; rejection sampling never accepts"
        )));
    }
    if ln_pi >= 0.0 || unconditional_pmf(design, n, n1)? >= 1.0 {
        return Ok(n_c as u128);
    }
    let ln_1m_pi = (-ln_pi.exp()).ln_1p();
    let ln_allowed = (1.0 - level).ln();
    // P(K <= k) >= level  <=>  P(Bin(k, π) <= N_c - 1) <= 1 - level
    let ok = |k: u128| ln_binomial_lower_tail(k, ln_pi, ln_1m_pi, n_c) <= ln_allowed;
    let mut lo = n_c as u128 - 1;
    let mut hi = n_c as u128;
    while !ok(hi) {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| Error::domain("percentile exceeds u128"))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// `N_c` so that `P(|V̄ - p_c| <= rel_error · p_c) ≈ confidence`:
/// `ceil((z / rel_error)^2 (1 - p_c) / p_c)` with `z = Φ^{-1}((1 + confidence)/2)`.
pub fn mc_sample_size(p_c: f64, rel_error: f64, confidence: f64) -> Result<u64> {
    if !(p_c > 0.0 && p_c < 1.0) {
        return Err(Error::domain(format!("anticipated p-value {p_c} outside (0, 1)")));
    }
    if rel_error.is_nan() || rel_error <= 0.0 {
        return Err(Error::domain("relative error must be positive"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = normal_quantile((1.0 + confidence) / 2.0);
    Ok(((z / rel_error).powi(2) * (1.0 - p_c) / p_c).ceil() as u64)
}

/// Smallest `N_c` with the worst-case bound `MSE(V̄) <= 1/(4 N_c) <= ε`.
pub fn mc_sample_size_mse(epsilon: f64) -> Result<u64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::domain("MSE bound must be positive"));
    }
    Ok((1.0 / (4.0 * epsilon) - 1e-9).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_law, enumerated_pvalue, exact_conditional_pvalue};
    use crate::ranktest::{centered_scores, ScoreKind, Stratum};
    use crate::numeric::rational_to_f64;

    fn bcd23() -> DesignSpec {
        DesignSpec::bcd_ratio(2, 3).unwrap()
    }

    fn scores(n: usize, salt: usize) -> ScoreVector {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + salt) % (n + 3)) as f64).collect();
        centered_scores(&x, ScoreKind::SimpleRank).unwrap()
    }

    #[test]
    fn trivial_tail_is_one() {
        let a = scores(10, 1);
        let min: f64 = a.scores().iter().filter(|&&x| x < 0.0).sum();
        let est = estimate_pvalue_conditional(&bcd23(), 5, &a, min, 500, StreamSeed::new(2)).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.standard_error, 0.0);
    }

    #[test]
    fn direct_matches_exact_n12() {
        let d = bcd23();
        let a = scores(12, 4);
        let v_star = 4.0;
        let exact = rational_to_f64(&exact_conditional_pvalue(&d, &a, 6, v_star).unwrap());
        let est = estimate_pvalue_conditional(&d, 6, &a, v_star, 100_000, StreamSeed::new(5)).unwrap();
        assert!((est.estimate - exact).abs() < 3.0 * est.standard_error, "{est:?} vs {exact}");
        assert!((est.standard_error - (est.estimate * (1.0 - est.estimate) / 1e5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejection_matches_enumeration() {
        let c = DesignSpec::complete();
        let a = ScoreVector::from_centered(vec![-1.5, -0.5, 0.5, 1.5], ScoreKind::SimpleRank).unwrap();
        let law = enumerate_law(&c, 4).unwrap();
        let exact = rational_to_f64(&enumerated_pvalue(&law, &a, 2, 1.0).unwrap());
        let est = estimate_pvalue_rejection(&c, 2, &a, 1.0, 100_000, StreamSeed::new(6)).unwrap();
        assert!((est.estimate - exact).abs() < 3.0 * est.standard_error);
        assert_eq!(est.method, EstimatorMethod::Rejection);
    }

    #[test]
    fn rejection_and_direct_agree() {
        let d = bcd23();
        let a = scores(10, 2);
        let direct = estimate_pvalue_conditional(&d, 5, &a, 3.0, 100_000, StreamSeed::new(8)).unwrap();
        let rej = estimate_pvalue_rejection(&d, 5, &a, 3.0, 200_000, StreamSeed::new(9)).unwrap();
        let se = direct.standard_error.hypot(rej.standard_error);
        assert!((direct.estimate - rej.estimate).abs() < 3.0 * se);
    }

    #[test]
    fn rejection_with_empty_reference_set() {
        let pb = DesignSpec::bcd_ratio(1, 1).unwrap();
        let a = scores(6, 1);
        assert!(matches!(
            estimate_pvalue_rejection(&pb, 2, &a, 0.0, 1000, StreamSeed::new(1)),
            Err(Error::InsufficientAcceptances { attempts: 1000 })
        ));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let d = bcd23();
        let a = scores(30, 3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_pvalue_conditional(&d, 15, &a, 10.0, 3000, StreamSeed::new(77)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn stratified_single_stratum_matches_plain() {
        let d = bcd23();
        let a = scores(12, 5);
        let data = StratifiedData::new(vec![Stratum { scores: a.clone(), n1: 6, design: d }]).unwrap();
        let s = estimate_pvalue_stratified(&data, 2.0, 50_000, StreamSeed::new(3)).unwrap();
        let exact = rational_to_f64(&exact_conditional_pvalue(&d, &a, 6, 2.0).unwrap());
        assert!((s.estimate - exact).abs() < 3.0 * s.standard_error);
    }

    #[test]
    fn table1_cells() {
        let d = bcd23();
        for n in [100, 200, 500] {
            assert_eq!(k_percentile(&d, n, n / 2, 2500, 0.95).unwrap(), 5117);
        }
        let d34 = DesignSpec::bcd_ratio(3, 4).unwrap();
        assert_eq!(k_percentile(&d34, 200, 100, 2500, 0.95).unwrap(), 3822);
        let k = k_percentile(&d, 100, 45, 2500, 0.95).unwrap() as f64;
        assert!((k / 3_531_344.0 - 1.0).abs() < 0.01, "{k}");
        let pb = DesignSpec::bcd_ratio(1, 1).unwrap();
        assert_eq!(k_percentile(&pb, 10, 5, 2500, 0.95).unwrap(), 2500);
        assert!(k_percentile(&pb, 10, 4, 2500, 0.95).is_err());
    }

    #[test]
    fn k_percentile_monotone_in_pi() {
        let d = bcd23();
        let mut cells: Vec<(f64, u128)> = (40..=50)
            .map(|n1| {
                (
                    unconditional_pmf(&d, 100, n1).unwrap(),
                    k_percentile(&d, 100, n1, 200, 0.95).unwrap(),
                )
            })
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(cells.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn sample_size_formulas() {
        assert_eq!(mc_sample_size(0.04, 0.1, 0.99).unwrap(), 15_924);
        assert_eq!(mc_sample_size(0.5, 0.1, 0.99).unwrap(), 664);
        assert_eq!(mc_sample_size_mse(0.0001).unwrap(), 2500);
        assert!(mc_sample_size(0.0, 0.1, 0.99).is_err());
        assert!(mc_sample_size(1.0, 0.1, 0.99).is_err());
    }
}
