//! Exact ground truth by exhaustive enumeration and dynamic programming.
//!
//! Everything here is computed in exact integer or rational arithmetic from
//! the assignment rule alone, with no use of the closed forms, so it can
//! validate them. Path weights are kept as integers over the common
//! denominator `(2b)^n`, where `p = a/b`: each step contributes `b` (fair
//! coin), `2a` (probability `p`) or `2(b - a)` (probability `1 - p`).

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::covinfo::{Conditioning, CovarianceMatrix};
use crate::design::{DesignSpec, TreatmentSequence};
use crate::error::{Error, Result};
use crate::ranktest::ScoreVector;
use crate::sampler::{Look, LookSchedule};

/// Largest horizon for full enumeration (`2^n` sequences).
pub const ENUMERATION_MAX_N: usize = 20;

/// Largest horizon for the exact p-value recursion.
pub const DP_MAX_N: usize = 40;

/// Largest power of two tried when integerizing scores.
const MAX_SCORE_SCALE_LOG2: u32 = 20;

/// Integer step weights `(w_1, w_0)` for assigning treatment 1 or 0, over a
/// per-step denominator `2b`.
fn step_weights(design: &DesignSpec, j: u64, m: u64) -> (u64, u64) {
    let two_b = 2 * *design.p_ratio().denom();
    let phi = design.phi_exact(j, m) * BigRational::from_integer(BigInt::from(two_b));
    debug_assert!(phi.is_integer());
    let w1 = phi.to_integer().to_u64().expect("weight fits u64");
    (w1, two_b - w1)
}

/// The unconditional law `f(t)` over all `2^n` sequences.
#[derive(Clone, Debug)]
pub struct EnumeratedLaw {
    design: DesignSpec,
    n: usize,
    /// Weight of the sequence with bit `j` equal to `t_{j+1}`.
    weights: Vec<BigUint>,
    denominator: BigUint,
}

/// `f(t)` for every sequence of length `n <= 20`, exactly.
pub fn enumerate_law(design: &DesignSpec, n: usize) -> Result<EnumeratedLaw> {
    if n == 0 || n > ENUMERATION_MAX_N {
        return Err(Error::domain(format!(
            "enumeration needs 1 <= n <= {ENUMERATION_MAX_N}, got {n}"
        )));
    }
    let mut weights = vec![BigUint::one()];
    for j in 0..n {
        // extend every prefix of length j by one bit at position j
        let mut next = vec![BigUint::zero(); weights.len() * 2];
        for (idx, w) in weights.iter().enumerate() {
            let m = (idx as u64).count_ones() as u64;
            let (w1, w0) = step_weights(design, j as u64, m);
            next[idx] = w * w0;
            next[idx | (1 << j)] = w * w1;
        }
        weights = next;
    }
    let two_b = BigUint::from(2 * *design.p_ratio().denom());
    Ok(EnumeratedLaw {
        design: *design,
        n,
        weights,
        denominator: two_b.pow(n as u32),
    })
}

impl EnumeratedLaw {
    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ratio(&self, weight: BigUint) -> BigRational {
        BigRational::new(BigInt::from(weight), BigInt::from(self.denominator.clone()))
    }

    /// `f(t)`.
    pub fn probability(&self, seq: &TreatmentSequence) -> Result<BigRational> {
        if seq.len() != self.n {
            return Err(Error::domain(format!(
                "sequence of length {} against a law of length {}",
                seq.len(),
                self.n
            )));
        }
        Ok(self.ratio(self.weights[seq.to_index() as usize].clone()))
    }

    /// All `(sequence, f(t))` pairs in index order.
    pub fn entries(&self) -> impl Iterator<Item = (TreatmentSequence, BigRational)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(|(idx, w)| (TreatmentSequence::from_index(idx as u64, self.n), self.ratio(w.clone())))
    }

    /// Exact total mass (always 1).
    pub fn total(&self) -> BigRational {
        self.ratio(self.weights.iter().sum())
    }

    fn satisfies(&self, idx: usize, constraints: &[Look]) -> bool {
        constraints.iter().all(|c| {
            let mask = if c.r as usize >= 64 { u64::MAX } else { (1u64 << c.r) - 1 };
            ((idx as u64) & mask).count_ones() as u64 == c.n1
        })
    }

    fn check_constraints(&self, constraints: &[Look]) -> Result<()> {
        for c in constraints {
            if c.r as usize > self.n || c.n1 > c.r {
                return Err(Error::domain(format!(
                    "constraint N_1({}) = {} outside a law of length {}",
                    c.r, c.n1, self.n
                )));
            }
        }
        Ok(())
    }

    /// Exact mass of sequences meeting every constraint.
    pub fn mass(&self, constraints: &[Look]) -> Result<BigRational> {
        self.check_constraints(constraints)?;
        Ok(self.ratio(
            self.weights
                .iter()
                .enumerate()
                .filter(|(idx, _)| self.satisfies(*idx, constraints))
                .map(|(_, w)| w)
                .sum(),
        ))
    }

    /// Sum of `g(t) f(t)` over sequences meeting `given`, divided by their
    /// mass.
    fn conditional_expectation<F>(&self, given: &[Look], mut g: F) -> Result<BigRational>
    where
        F: FnMut(usize) -> BigRational,
    {
        self.check_constraints(given)?;
        let mut num = BigRational::zero();
        let mut den = BigUint::zero();
        for (idx, w) in self.weights.iter().enumerate() {
            if w.is_zero() || !self.satisfies(idx, given) {
                continue;
            }
            den += w;
            let v = g(idx);
            if !v.is_zero() {
                num += v * self.ratio(w.clone());
            }
        }
        if den.is_zero() {
            return Err(Error::infeasible("conditioning event has zero mass"));
        }
        Ok(num / self.ratio(den))
    }
}

/// `P(event | given)` by marginalizing the enumerated law.
pub fn oracle_conditional_pmf(law: &EnumeratedLaw, event: &[Look], given: &[Look]) -> Result<BigRational> {
    law.check_constraints(event)?;
    law.conditional_expectation(given, |idx| {
        if law.satisfies(idx, event) {
            BigRational::one()
        } else {
            BigRational::zero()
        }
    })
}

/// Exact covariance of `T` given the constraints (possibly none).
pub fn exact_covariance(law: &EnumeratedLaw, given: &[Look]) -> Result<CovarianceMatrix<BigRational>> {
    let n = law.n;
    let conditioning = if given.is_empty() {
        Conditioning::Unconditional { n: n as u64 }
    } else {
        Conditioning::Looks(LookSchedule::new(given.to_vec())?)
    };
    let bit = |idx: usize, i: usize| (idx >> i) & 1 == 1;
    let theta = (0..n)
        .map(|i| {
            law.conditional_expectation(given, |idx| {
                if bit(idx, i) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sigma = CovarianceMatrix::zeros(n, conditioning);
    for i in 0..n {
        for j in i..n {
            let lambda = law.conditional_expectation(given, |idx| {
                if bit(idx, i) && bit(idx, j) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })?;
            sigma.set_symmetric(i, j, lambda - &theta[i] * &theta[j]);
        }
    }
    Ok(sigma)
}

/// Scaling `2^k` that turns every score into an exact integer.
fn integerize(scores: &[f64]) -> Result<(Vec<i64>, f64)> {
    for k in 0..=MAX_SCORE_SCALE_LOG2 {
        let scale = (1u64 << k) as f64;
        let scaled: Vec<f64> = scores.iter().map(|a| a * scale).collect();
        if scaled.iter().all(|x| x.fract() == 0.0 && x.abs() < 2f64.powi(52)) {
            return Ok((scaled.iter().map(|&x| x as i64).collect(), scale));
        }
    }
    Err(Error::domain(format!(
        "scores are not integers after scaling by 2^{MAX_SCORE_SCALE_LOG2}"
    )))
}

/// Exact conditional law of `V = a'T` given `N_1(n) = n_1`.
#[derive(Clone, Debug)]
pub struct ExactStatisticLaw {
    /// Distinct values of `V` with their probabilities, ascending in value.
    pub support: Vec<(f64, BigRational)>,
    scale: f64,
    integer_values: Vec<i64>,
}

impl ExactStatisticLaw {
    /// `P(V >= v*)` with the comparison made on the integerized scale.
    pub fn upper_tail(&self, v_star: f64) -> BigRational {
        let threshold = (v_star * self.scale - 1e-6).ceil() as i64;
        self.support
            .iter()
            .zip(&self.integer_values)
            .filter(|(_, &v)| v >= threshold)
            .map(|((_, p), _)| p)
            .sum()
    }

    /// Smallest support value `d` with `P(V > d) <= alpha`.
    pub fn upper_quantile(&self, alpha: f64) -> f64 {
        let mut tail = BigRational::zero();
        let alpha = BigRational::from_float(alpha).expect("finite level");
        // walk down from the top: tail holds P(V > current)
        let mut answer = self.support.last().expect("nonempty support").0;
        for (v, p) in self.support.iter().rev() {
            if tail > alpha {
                break;
            }
            answer = *v;
            tail += p;
        }
        answer
    }
}

/// Exact law of `V` given `N_1(n) = n_1` by a recursion over
/// `(step, count, partial score sum)`.
pub fn exact_statistic_law(design: &DesignSpec, scores: &ScoreVector, n1: u64) -> Result<ExactStatisticLaw> {
    let n = scores.len();
    if n == 0 || n > DP_MAX_N {
        return Err(Error::domain(format!(
            "exact recursion needs 1 <= n <= {DP_MAX_N}, got {n}"
        )));
    }
    if n1 > n as u64 {
        return Err(Error::domain(format!("n_1 = {n1} exceeds n = {n}")));
    }
    let (ints, scale) = integerize(scores.scores())?;
    let n = n as u64;
    // layer[m] maps partial sum -> integer path weight
    let mut layer: Vec<HashMap<i64, BigUint>> = vec![HashMap::from([(0, BigUint::one())])];
    for j in 0..n {
        let mut next: Vec<HashMap<i64, BigUint>> = vec![HashMap::new(); j as usize + 2];
        for (m, sums) in layer.iter().enumerate() {
            let m = m as u64;
            // prune states that can no longer reach n_1
            if m > n1 || n1 - m > n - j {
                continue;
            }
            let (w1, w0) = step_weights(design, j, m);
            for (&sum, w) in sums {
                if w1 > 0 && m < n1 {
                    *next[m as usize + 1]
                        .entry(sum + ints[j as usize])
                        .or_insert_with(BigUint::zero) += w * w1;
                }
                if w0 > 0 && n1 - m < n - j {
                    *next[m as usize].entry(sum).or_insert_with(BigUint::zero) += w * w0;
                }
            }
        }
        layer = next;
    }
    let slice = std::mem::take(&mut layer[n1 as usize]);
    let total: BigUint = slice.values().sum();
    if total.is_zero() {
        return Err(Error::infeasible(format!(
            "N_1({n}) = {n1} has probability zero under {design}"
        )));
    }
    let mut values: Vec<(i64, BigUint)> = slice.into_iter().collect();
    values.sort_by_key(|(v, _)| *v);
    let total = BigInt::from(total);
    let support = values
        .iter()
        .map(|(v, w)| {
            (
                *v as f64 / scale,
                BigRational::new(BigInt::from(w.clone()), total.clone()),
            )
        })
        .collect();
    Ok(ExactStatisticLaw {
        support,
        scale,
        integer_values: values.into_iter().map(|(v, _)| v).collect(),
    })
}

/// Exact `P(V >= v* | N_1(n) = n_1)`.
pub fn exact_conditional_pvalue(
    design: &DesignSpec,
    scores: &ScoreVector,
    n1: u64,
    v_star: f64,
) -> Result<BigRational> {
    Ok(exact_statistic_law(design, scores, n1)?.upper_tail(v_star))
}

/// `P(V >= v* | N_1(n) = n_1)` by enumeration, for cross-checking the
/// recursion on small `n`.
pub fn enumerated_pvalue(law: &EnumeratedLaw, scores: &ScoreVector, n1: u64, v_star: f64) -> Result<BigRational> {
    if scores.len() != law.n {
        return Err(Error::domain("score length differs from the law length"));
    }
    let tol = 1e-9 * scores.scores().iter().map(|a| a.abs()).sum::<f64>().max(1.0);
    let given = [Look { r: law.n as u64, n1 }];
    law.conditional_expectation(&given, |idx| {
        let seq = TreatmentSequence::from_index(idx as u64, law.n);
        if scores.dot(seq.assignments()) >= v_star - tol {
            BigRational::one()
        } else {
            BigRational::zero()
        }
    })
}

/// Staged crossing probabilities of a sequential test, by enumeration.
///
/// `scores[l]` is the score vector used at look `l` (length `r_l`), and
/// `bounds[l]` the boundary `d_l`.
#[derive(Clone, Debug)]
pub struct CrossingProbabilities {
    /// `P(V_1 <= d_1, ..., V_{l-1} <= d_{l-1}, V_l > d_l | looks 1..=l)`.
    pub joint: Vec<BigRational>,
    /// `P(V_l > d_l | V_i <= d_i for i < l, looks 1..=l)`.
    pub conditional: Vec<BigRational>,
    /// `P(V_1 <= d_1, ..., V_l <= d_l | looks 1..=l)`.
    pub continuation: Vec<BigRational>,
}

pub fn crossing_probabilities(
    law: &EnumeratedLaw,
    schedule: &LookSchedule,
    scores: &[ScoreVector],
    bounds: &[f64],
) -> Result<CrossingProbabilities> {
    let looks = schedule.looks();
    if scores.len() != looks.len() || bounds.len() != looks.len() {
        return Err(Error::domain("one score vector and one bound per look required"));
    }
    for (l, (a, look)) in scores.iter().zip(looks).enumerate() {
        if a.len() as u64 != look.r {
            return Err(Error::domain(format!(
                "look {}: score length {} but r = {}",
                l + 1,
                a.len(),
                look.r
            )));
        }
    }
    let stats = |idx: usize| -> Vec<f64> {
        let seq = TreatmentSequence::from_index(idx as u64, law.n);
        scores.iter().map(|a| a.dot(seq.assignments())).collect()
    };
    let mut joint = Vec::new();
    let mut conditional = Vec::new();
    let mut continuation = Vec::new();
    for l in 0..looks.len() {
        let given = &looks[..=l];
        let below = |v: &[f64], upto: usize| (0..upto).all(|i| v[i] <= bounds[i]);
        joint.push(law.conditional_expectation(given, |idx| {
            let v = stats(idx);
            indicator(below(&v, l) && v[l] > bounds[l])
        })?);
        continuation.push(law.conditional_expectation(given, |idx| indicator(below(&stats(idx), l + 1)))?);
        let survive = law.conditional_expectation(given, |idx| indicator(below(&stats(idx), l)))?;
        conditional.push(if survive.is_zero() {
            BigRational::zero()
        } else {
            &joint[l] / survive
        });
    }
    Ok(CrossingProbabilities {
        joint,
        conditional,
        continuation,
    })
}

fn indicator(b: bool) -> BigRational {
    if b {
        BigRational::one()
    } else {
        BigRational::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_dist::{conditional_pmf_exact, unconditional_pmf_exact};
    use crate::ranktest::ScoreKind;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn bcd23() -> DesignSpec {
        DesignSpec::bcd_ratio(2, 3).unwrap()
    }

    fn seq(s: &str) -> TreatmentSequence {
        s.parse().unwrap()
    }

    #[test]
    fn law_examples() {
        let law = enumerate_law(&bcd23(), 2).unwrap();
        assert_eq!(law.probability(&seq("11")).unwrap(), r(1, 6));
        assert_eq!(law.probability(&seq("10")).unwrap(), r(1, 3));
        assert_eq!(law.probability(&seq("01")).unwrap(), r(1, 3));
        assert_eq!(law.probability(&seq("00")).unwrap(), r(1, 6));
        let c = enumerate_law(&DesignSpec::complete(), 3).unwrap();
        assert!(c.entries().all(|(_, p)| p == r(1, 8)));
        for d in [bcd23(), DesignSpec::bcd_ratio(1, 1).unwrap(), DesignSpec::bcd_ratio(3, 5).unwrap()] {
            assert!(enumerate_law(&d, 9).unwrap().total().is_one());
        }
        assert!(enumerate_law(&bcd23(), 21).is_err());
    }

    #[test]
    fn conditional_pmf_examples() {
        let d = bcd23();
        let law = enumerate_law(&d, 4).unwrap();
        let v = oracle_conditional_pmf(&law, &[Look { r: 4, n1: 2 }], &[Look { r: 1, n1: 1 }]).unwrap();
        assert_eq!(v, r(16, 27));
        assert_eq!(v, conditional_pmf_exact(&d, 4, 2, 1, 1).unwrap());
        let u = oracle_conditional_pmf(&law, &[Look { r: 4, n1: 2 }], &[]).unwrap();
        assert_eq!(u, unconditional_pmf_exact(&d, 4, 2).unwrap());
        assert!(matches!(
            oracle_conditional_pmf(&law, &[Look { r: 4, n1: 2 }], &[Look { r: 2, n1: 2 }, Look { r: 3, n1: 0 }]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn pvalue_examples() {
        let c = DesignSpec::complete();
        let a = ScoreVector::from_centered(vec![-1.5, -0.5, 0.5, 1.5], ScoreKind::SimpleRank).unwrap();
        assert_eq!(exact_conditional_pvalue(&c, &a, 2, 2.0).unwrap(), r(1, 6));
        assert!(exact_conditional_pvalue(&c, &a, 2, -4.0).unwrap().is_one());
        let odd = ScoreVector::from_centered(vec![0.1, -0.1], ScoreKind::Raw).unwrap();
        assert!(exact_conditional_pvalue(&c, &odd, 1, 0.0).is_err());
    }

    #[test]
    fn recursion_matches_enumeration() {
        let d = bcd23();
        let law = enumerate_law(&d, 12).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 12) as f64 + 0.25 * (i % 3) as f64).collect();
        let a = crate::ranktest::centered_scores(&x, ScoreKind::SimpleRank).unwrap();
        let dist = exact_statistic_law(&d, &a, 6).unwrap();
        let total: BigRational = dist.support.iter().map(|(_, p)| p).sum();
        assert!(total.is_one());
        for &(v, _) in &dist.support {
            assert_eq!(
                dist.upper_tail(v),
                enumerated_pvalue(&law, &a, 6, v).unwrap(),
                "v* = {v}"
            );
        }
    }

    #[test]
    fn covariance_examples() {
        let law = enumerate_law(&bcd23(), 2).unwrap();
        let s = exact_covariance(&law, &[Look { r: 2, n1: 1 }]).unwrap();
        assert_eq!(s.get(0, 0), &r(1, 4));
        assert_eq!(s.get(0, 1), &r(-1, 4));
        let c = enumerate_law(&DesignSpec::complete(), 2).unwrap();
        let s = exact_covariance(&c, &[]).unwrap();
        assert_eq!(s.get(0, 0), &r(1, 4));
        assert!(s.get(0, 1).is_zero());
    }

    #[test]
    fn exact_quantile() {
        let c = DesignSpec::complete();
        let a = ScoreVector::from_centered(vec![-1.5, -0.5, 0.5, 1.5], ScoreKind::SimpleRank).unwrap();
        let dist = exact_statistic_law(&c, &a, 2).unwrap();
        // V takes -2, -1, 0, 0, 1, 2 with equal mass
        assert_eq!(dist.upper_quantile(0.2), 1.0);
        assert_eq!(dist.upper_quantile(0.4), 0.0);
        assert_eq!(dist.upper_quantile(0.0), 2.0);
    }
}
