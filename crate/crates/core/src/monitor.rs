//! Alpha spending and Monte Carlo boundary estimation for sequentially
//! monitored conditional randomization tests.
//!
//! The boundary system asks for `d_1, ..., d_L` with
//! `P(V_1 <= d_1, ..., V_{l-1} <= d_{l-1}, V_l > d_l | looks 1..=l)
//! = α*(t_l) - α*(t_{l-1})`. By the Markov property of the treatment count
//! this is equivalent to the univariate conditions
//!
//! ```text
//! P(V_l > d_l | V_i <= d_i for i < l, looks 1..=l)
//!     = (α*(t_l) - α*(t_{l-1})) / (1 - α*(t_{l-1})) =: α_l ,
//! ```
//!
//! which the staged algorithm solves one look at a time: stage `l` draws
//! multi-look sequences through `r_l`, keeps those inside every earlier
//! boundary and takes the upper `α_l` quantile of the retained `V_l`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::numeric::Scalar;
use crate::quantile::{upper_critical_value, QuantileMethod};
use crate::ranktest::{centered_scores, ScoreKind, ScoreVector};
use crate::rng::{tag, StreamSeed};
use crate::sampler::{LookSchedule, MultiLookSampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpendingKind {
    /// `α*(t) = 2 - 2Φ(z_{α/2} / √t)`.
    OBrienFlemingType,
    /// `α*(t) = α ln(1 + (e - 1) t)`.
    PocockType,
}

impl std::str::FromStr for SpendingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obf" | "obrien-fleming" => Ok(SpendingKind::OBrienFlemingType),
            "pocock" => Ok(SpendingKind::PocockType),
            other => Err(Error::domain(format!("unknown spending function '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpendingFunction {
    pub kind: SpendingKind,
    /// Overall one-sided level.
    pub alpha: f64,
}

impl SpendingFunction {
    pub fn new(kind: SpendingKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("level {alpha} outside (0, 1)")));
        }
        Ok(SpendingFunction { kind, alpha })
    }

    pub fn obrien_fleming(alpha: f64) -> Result<Self> {
        Self::new(SpendingKind::OBrienFlemingType, alpha)
    }

    pub fn pocock(alpha: f64) -> Result<Self> {
        Self::new(SpendingKind::PocockType, alpha)
    }

    /// `α*(t)`.
    pub fn spend(&self, t: f64) -> Result<f64> {
        spend(self, t)
    }
}

/// `α*(t)` for `0 <= t <= 1`.
pub fn spend(sf: &SpendingFunction, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("information fraction {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == 1.0 {
        return Ok(sf.alpha);
    }
    Ok(match sf.kind {
        SpendingKind::OBrienFlemingType => {
            let normal = Normal::standard();
            let z = normal.inverse_cdf(1.0 - sf.alpha / 2.0);
            2.0 * normal.sf(z / t.sqrt())
        }
        SpendingKind::PocockType => sf.alpha * (1.0 + (std::f64::consts::E - 1.0) * t).ln(),
    })
}

/// The conditional levels `α_l = (α*(t_l) - α*(t_{l-1})) / (1 - α*(t_{l-1}))`.
///
/// Fractions must increase strictly within `(0, 1]`; the last one is normally
/// 1 but an interim prefix of looks is accepted.
pub fn incremental_alpha(sf: &SpendingFunction, t: &[f64]) -> Result<Vec<f64>> {
    if t.is_empty() {
        return Err(Error::domain("no information fractions"));
    }
    let mut prev_t = 0.0;
    let mut prev = 0.0;
    t.iter()
        .map(|&tl| {
            if !(tl > prev_t && tl <= 1.0) {
                return Err(Error::domain(format!(
                    "information fractions must increase within (0, 1]; got {tl} after {prev_t}"
                )));
            }
            let cur = spend(sf, tl)?;
            let a = ((cur - prev) / (1.0 - prev)).clamp(0.0, 1.0);
            prev_t = tl;
            prev = cur;
            Ok(a)
        })
        .collect()
}

/// Cumulative spend `1 - ∏_{i<=l} (1 - α_i)` implied by conditional levels.
pub fn cumulative_from_incremental(alphas: &[f64]) -> Vec<f64> {
    let mut survive = 1.0;
    alphas
        .iter()
        .map(|a| {
            survive *= 1.0 - a;
            1.0 - survive
        })
        .collect()
}

/// Joint crossing probabilities `∏_{i<l} (1 - c_i) · c_l` rebuilt from the
/// conditional ones.
pub fn joint_from_conditional<S: Scalar>(conditional: &[S]) -> Vec<S> {
    let mut survive = S::one();
    conditional
        .iter()
        .map(|c| {
            let joint = survive.times(c);
            survive = survive.times(&S::one().minus(c));
            joint
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    /// Sequences wanted for each quantile estimate.
    pub n_c: u64,
    /// Fewest retained sequences accepted at a stage.
    pub min_retained: usize,
    pub method: QuantileMethod,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            n_c: 2500,
            min_retained: 100,
            method: QuantileMethod::HarrellDavis,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryResult {
    /// Boundaries `d_l`; `+∞` where nothing is spent.
    #[serde(serialize_with = "serialize_bounds")]
    pub d: Vec<f64>,
    pub incremental_alpha: Vec<f64>,
    pub info_fractions: Vec<f64>,
    /// Sequences retained (inside all earlier boundaries) per stage.
    pub n_used: Vec<usize>,
    /// Sequences drawn per stage.
    pub n_drawn: Vec<u64>,
}

/// Infinite boundaries are written as the string `"inf"` since JSON has no
/// infinity.
fn serialize_bounds<S: serde::Serializer>(d: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(d.len()))?;
    for v in d {
        if v.is_finite() {
            seq.serialize_element(v)?;
        } else if *v > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element("-inf")?;
        }
    }
    seq.end()
}

/// Score vectors for every look, each re-ranked within its first `r_l`
/// responses.
pub fn look_scores(schedule: &LookSchedule, responses: &[f64], kind: ScoreKind) -> Result<Vec<ScoreVector>> {
    if responses.len() < schedule.horizon() as usize {
        return Err(Error::domain(format!(
            "{} responses but the last look is at {}",
            responses.len(),
            schedule.horizon()
        )));
    }
    schedule
        .looks()
        .iter()
        .map(|l| centered_scores(&responses[..l.r as usize], kind))
        .collect()
}

fn check_look_scores(sampler: &MultiLookSampler, scores: &[ScoreVector]) -> Result<()> {
    let looks = sampler.schedule().looks();
    if scores.len() != looks.len() {
        return Err(Error::domain(format!(
            "{} score vectors for {} looks",
            scores.len(),
            looks.len()
        )));
    }
    for (l, (a, look)) in scores.iter().zip(looks).enumerate() {
        if a.len() as u64 != look.r {
            return Err(Error::domain(format!(
                "look {}: {} scores but r = {}",
                l + 1,
                a.len(),
                look.r
            )));
        }
    }
    Ok(())
}

/// Staged boundary estimation with prepared scores and conditional levels.
pub fn estimate_boundaries_with(
    sampler: &MultiLookSampler,
    scores: &[ScoreVector],
    alphas: &[f64],
    config: &BoundaryConfig,
    seed: StreamSeed,
) -> Result<BoundaryResult> {
    check_look_scores(sampler, scores)?;
    if alphas.len() != scores.len() {
        return Err(Error::domain("one level per look required"));
    }
    if config.n_c < 1 {
        return Err(Error::domain("N_c must be at least 1"));
    }
    let mut d: Vec<f64> = Vec::with_capacity(alphas.len());
    let mut n_used = Vec::with_capacity(alphas.len());
    let mut n_drawn = Vec::with_capacity(alphas.len());
    let mut survive = 1.0;
    for (l, &alpha_l) in alphas.iter().enumerate() {
        let draws = (config.n_c as f64 / survive - 1e-9).ceil().max(1.0) as u64;
        let stage_seed = seed.child(tag::BOUNDARY, l as u64);
        let bounds = &d;
        let values: Vec<f64> = (0..draws)
            .into_par_iter()
            .map_init(Vec::new, |buf, k| {
                let mut rng = stage_seed.stream(tag::SAMPLE, k);
                sampler.sample_through_into(l + 1, &mut rng, buf);
                let inside = bounds
                    .iter()
                    .zip(scores)
                    .all(|(di, a)| a.dot(buf) <= *di);
                inside.then(|| scores[l].dot(buf))
            })
            .flatten()
            .collect();
        if values.len() < config.min_retained {
            return Err(Error::UnderSample {
                stage: l + 1,
                retained: values.len(),
                minimum: config.min_retained,
            });
        }
        d.push(upper_critical_value(&values, alpha_l, config.method)?);
        n_used.push(values.len());
        n_drawn.push(draws);
        survive *= 1.0 - alpha_l;
    }
    Ok(BoundaryResult {
        d,
        incremental_alpha: alphas.to_vec(),
        info_fractions: Vec::new(),
        n_used,
        n_drawn,
    })
}

/// Boundaries `d_1..d_L` for an upper-tailed conditional test at the looks of
/// `schedule`, given the responses observed so far, the spending function and
/// the information fractions `t_l`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_boundaries(
    design: &DesignSpec,
    schedule: &LookSchedule,
    responses: &[f64],
    kind: ScoreKind,
    sf: &SpendingFunction,
    fractions: &[f64],
    config: &BoundaryConfig,
    seed: StreamSeed,
) -> Result<BoundaryResult> {
    if fractions.len() != schedule.len() {
        return Err(Error::domain(format!(
            "{} information fractions for {} looks",
            fractions.len(),
            schedule.len()
        )));
    }
    let sampler = MultiLookSampler::new(*design, schedule.clone())?;
    let scores = look_scores(schedule, responses, kind)?;
    let alphas = incremental_alpha(sf, fractions)?;
    let mut result = estimate_boundaries_with(&sampler, &scores, &alphas, config, seed)?;
    result.info_fractions = fractions.to_vec();
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum Decision {
    /// `V_l > d_l` at this 1-based look.
    Reject { look: usize },
    /// No crossing yet; more looks remain.
    Continue { looks_evaluated: usize },
    /// No crossing at any of the `L` looks.
    Accept,
}

/// Applies the strict crossing rule `V_l > d_l` look by look.
pub fn sequential_decision(observed: &[f64], bounds: &BoundaryResult) -> Result<Decision> {
    if observed.len() > bounds.d.len() {
        return Err(Error::domain(format!(
            "{} statistics for {} boundaries",
            observed.len(),
            bounds.d.len()
        )));
    }
    if let Some(l) = observed.iter().zip(&bounds.d).position(|(v, d)| v > d) {
        return Ok(Decision::Reject { look: l + 1 });
    }
    if observed.len() == bounds.d.len() {
        Ok(Decision::Accept)
    } else {
        Ok(Decision::Continue {
            looks_evaluated: observed.len(),
        })
    }
}

/// Rejection frequencies of the sequential test over conditional draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejectionRate {
    /// Fraction of draws rejected at some look.
    pub overall: f64,
    /// Fraction first rejected at each look.
    pub per_look: Vec<f64>,
    pub draws: u64,
}

/// Type I error of boundaries `d` under the conditional reference set,
/// estimated from `draws` fresh multi-look sequences.
pub fn rejection_rate(
    sampler: &MultiLookSampler,
    scores: &[ScoreVector],
    d: &[f64],
    draws: u64,
    seed: StreamSeed,
) -> Result<RejectionRate> {
    check_look_scores(sampler, scores)?;
    if d.len() != scores.len() {
        return Err(Error::domain("one boundary per look required"));
    }
    if draws < 1 {
        return Err(Error::domain("at least one draw required"));
    }
    let looks = scores.len();
    let counts = (0..draws)
        .into_par_iter()
        .map_init(Vec::new, |buf, k| {
            let mut rng = seed.stream(tag::EVALUATION, k);
            sampler.sample_through_into(looks, &mut rng, buf);
            scores.iter().zip(d).position(|(a, di)| a.dot(buf) > *di)
        })
        .fold(
            || vec![0u64; looks],
            |mut acc, hit| {
                if let Some(l) = hit {
                    acc[l] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; looks],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let per_look: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    Ok(RejectionRate {
        overall: counts.iter().sum::<u64>() as f64 / draws as f64,
        per_look,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rational_to_f64;
    use crate::oracle::exact_statistic_law;

    fn obf() -> SpendingFunction {
        SpendingFunction::obrien_fleming(0.05).unwrap()
    }

    #[test]
    fn spend_examples() {
        let sf = obf();
        assert_eq!(spend(&sf, 1.0).unwrap(), 0.05);
        assert_eq!(spend(&sf, 0.0).unwrap(), 0.0);
        assert!((spend(&sf, 0.3617).unwrap() - 0.0011).abs() < 5e-5);
        assert!(spend(&sf, 1.2).is_err());
        let p = SpendingFunction::pocock(0.05).unwrap();
        assert!((spend(&p, 1.0).unwrap() - 0.05).abs() < 1e-15);
        for sf in [sf, p] {
            let grid: Vec<f64> = (0..=1000).map(|i| spend(&sf, i as f64 / 1000.0).unwrap()).collect();
            assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn incremental_examples() {
        let a = incremental_alpha(&obf(), &[0.3617, 0.6248, 1.0]).unwrap();
        for (x, want) in a.iter().zip([0.0011, 0.0121, 0.0373]) {
            assert!((x - want).abs() < 5e-4, "{a:?}");
        }
        assert_eq!(incremental_alpha(&obf(), &[1.0]).unwrap(), vec![0.05]);
        assert!(incremental_alpha(&obf(), &[0.5, 0.4, 1.0]).is_err());
        let cum = cumulative_from_incremental(&a);
        assert!((cum[2] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn decisions() {
        let b = BoundaryResult {
            d: vec![3.0, 2.0, 1.0],
            incremental_alpha: vec![],
            info_fractions: vec![],
            n_used: vec![],
            n_drawn: vec![],
        };
        assert_eq!(sequential_decision(&[4.0], &b).unwrap(), Decision::Reject { look: 1 });
        assert_eq!(sequential_decision(&[3.0, 2.5], &b).unwrap(), Decision::Reject { look: 2 });
        assert_eq!(sequential_decision(&[3.0, 2.0, 1.0], &b).unwrap(), Decision::Accept);
        assert_eq!(
            sequential_decision(&[0.0], &b).unwrap(),
            Decision::Continue { looks_evaluated: 1 }
        );
        assert!(sequential_decision(&[0.0; 4], &b).is_err());
    }

    #[test]
    fn single_look_matches_exact_quantile() {
        let d = DesignSpec::bcd_ratio(2, 3).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 5 + 2) % 13) as f64).collect();
        let sched = LookSchedule::single(12, 6).unwrap();
        let sf = SpendingFunction::obrien_fleming(0.1).unwrap();
        let config = BoundaryConfig {
            n_c: 20_000,
            ..BoundaryConfig::default()
        };
        let res = estimate_boundaries(&d, &sched, &x, ScoreKind::SimpleRank, &sf, &[1.0], &config, StreamSeed::new(1)).unwrap();
        let a = centered_scores(&x, ScoreKind::SimpleRank).unwrap();
        let law = exact_statistic_law(&d, &a, 6).unwrap();
        let exact = law.upper_quantile(0.1);
        // the estimate lies within one support step of the exact quantile
        assert!((res.d[0] - exact).abs() <= 1.0 + 1e-9, "{} vs {exact}", res.d[0]);
        let tail = rational_to_f64(&law.upper_tail(res.d[0] + 1e-6));
        assert!(tail <= 0.1 + 0.01, "tail {tail}");
    }

    #[test]
    fn zero_spend_gives_infinite_bound() {
        let d = DesignSpec::bcd_ratio(2, 3).unwrap();
        let sched = LookSchedule::from_pairs(&[(10, 5), (20, 10)]).unwrap();
        let sampler = MultiLookSampler::new(d, sched.clone()).unwrap();
        let x: Vec<f64> = (0..20).map(|i| ((i * 3) % 7) as f64).collect();
        let scores = look_scores(&sched, &x, ScoreKind::SimpleRank).unwrap();
        let config = BoundaryConfig {
            n_c: 500,
            ..BoundaryConfig::default()
        };
        let res = estimate_boundaries_with(&sampler, &scores, &[0.0, 0.05], &config, StreamSeed::new(4)).unwrap();
        assert_eq!(res.d[0], f64::INFINITY);
        assert!(res.d[1].is_finite());
        assert_eq!(res.n_used, vec![500, 500]);
        let json = serde_json::to_string(&res).unwrap();
        assert!(json.contains("\"inf\""));
    }

    #[test]
    fn under_sample_is_reported() {
        let d = DesignSpec::bcd_ratio(2, 3).unwrap();
        let sched = LookSchedule::from_pairs(&[(10, 5), (20, 10)]).unwrap();
        let sampler = MultiLookSampler::new(d, sched.clone()).unwrap();
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let scores = look_scores(&sched, &x, ScoreKind::SimpleRank).unwrap();
        let config = BoundaryConfig {
            n_c: 50,
            ..BoundaryConfig::default()
        };
        assert!(matches!(
            estimate_boundaries_with(&sampler, &scores, &[0.01, 0.04], &config, StreamSeed::new(4)),
            Err(Error::UnderSample { stage: 1, .. })
        ));
    }
}
