//! Restricted randomization procedures and treatment sequences.
//!
//! A procedure assigns subject `j + 1` to treatment 1 with probability
//! `φ_{j+1} = Pr(T_{j+1} = 1 | N_1(j))`. Efron's biased coin design BCD(p)
//! tosses a fair coin at perfect balance and otherwise favours the
//! under-represented arm with probability `p`. Complete randomization is the
//! fair coin throughout (BCD(1/2)).
//!
//! The set of designs is closed on purpose: the conditional machinery in
//! [`crate::exact_dist`] has closed forms only for these two. Generalized
//! biased coin designs would enter as a new [`DesignKind`] variant together
//! with their conditional kernel.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DesignKind {
    Bcd,
    Complete,
}

/// Randomization procedure identity and bias parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DesignSpec {
    kind: DesignKind,
    p: Ratio<u64>,
}

impl DesignSpec {
    pub fn complete() -> Self {
        DesignSpec {
            kind: DesignKind::Complete,
            p: Ratio::new(1, 2),
        }
    }

    /// BCD(p) with an exact rational bias `num/den`.
    pub fn bcd_ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::domain("bias denominator is zero"));
        }
        let p = Ratio::new(num, den);
        if p < Ratio::new(1, 2) || p > Ratio::one() {
            return Err(Error::domain(format!(
                "BCD bias p = {num}/{den} outside [1/2, 1]"
            )));
        }
        Ok(DesignSpec {
            kind: DesignKind::Bcd,
            p,
        })
    }

    /// BCD(p) from a float; the bias is stored as the simplest rational
    /// within float precision (so `2.0 / 3.0` becomes exactly 2/3).
    pub fn bcd(p: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&p) {
            return Err(Error::domain(format!("BCD bias p = {p} outside [1/2, 1]")));
        }
        let r = Ratio::<i64>::approximate_float(p)
            .ok_or_else(|| Error::domain(format!("cannot represent p = {p}")))?;
        Self::bcd_ratio(*r.numer() as u64, *r.denom() as u64)
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn p_ratio(&self) -> Ratio<u64> {
        self.p
    }

    pub fn p(&self) -> f64 {
        *self.p.numer() as f64 / *self.p.denom() as f64
    }

    pub fn q(&self) -> f64 {
        (*self.p.denom() - *self.p.numer()) as f64 / *self.p.denom() as f64
    }

    pub fn p_exact(&self) -> BigRational {
        BigRational::new(BigInt::from(*self.p.numer()), BigInt::from(*self.p.denom()))
    }

    pub fn q_exact(&self) -> BigRational {
        BigRational::one() - self.p_exact()
    }

    /// Which of the three assignment regimes applies after `j` assignments
    /// with `m` on treatment 1. Integer comparison of `2m` against `j`.
    fn regime(&self, j: u64, m: u64) -> Regime {
        match (2 * m).cmp(&j) {
            std::cmp::Ordering::Equal => Regime::Balanced,
            std::cmp::Ordering::Less => Regime::Behind,
            std::cmp::Ordering::Greater => Regime::Ahead,
        }
    }

    /// `φ_{j+1}(m)` as a float, without range checks.
    pub(crate) fn phi(&self, j: u64, m: u64) -> f64 {
        if self.kind == DesignKind::Complete {
            return 0.5;
        }
        match self.regime(j, m) {
            Regime::Balanced => 0.5,
            Regime::Behind => self.p(),
            Regime::Ahead => self.q(),
        }
    }

    /// `φ_{j+1}(m)` exactly, without range checks.
    pub(crate) fn phi_exact(&self, j: u64, m: u64) -> BigRational {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        if self.kind == DesignKind::Complete {
            return half;
        }
        match self.regime(j, m) {
            Regime::Balanced => half,
            Regime::Behind => self.p_exact(),
            Regime::Ahead => self.q_exact(),
        }
    }

    /// True when the design never assigns with probability zero.
    pub fn is_fully_randomized(&self) -> bool {
        self.kind == DesignKind::Complete || *self.p.numer() < *self.p.denom()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Regime {
    Balanced,
    Behind,
    Ahead,
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DesignKind::Complete => write!(f, "complete"),
            DesignKind::Bcd => write!(f, "bcd:{}/{}", self.p.numer(), self.p.denom()),
        }
    }
}

/// Parses `complete`, `bcd:<p>` with `p` a decimal (`0.6667`, read exactly
/// as 6667/10000) or a fraction (`2/3`).
impl FromStr for DesignSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("complete") {
            return Ok(DesignSpec::complete());
        }
        let rest = s
            .strip_prefix("bcd:")
            .or_else(|| s.strip_prefix("BCD:"))
            .ok_or_else(|| {
                Error::domain(format!("unknown design '{s}' (expected bcd:<p> or complete)"))
            })?;
        let (num, den) = parse_exact_ratio(rest)?;
        DesignSpec::bcd_ratio(num, den)
    }
}

fn parse_exact_ratio(s: &str) -> Result<(u64, u64)> {
    let bad = || Error::domain(format!("cannot parse probability '{s}'"));
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        return Ok((n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let den = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| bad())?
    };
    Ok((int * den + frac, den))
}

#[derive(Serialize, Deserialize)]
struct DesignRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
}

impl Serialize for DesignSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self.kind {
            DesignKind::Complete => DesignRepr {
                kind: "complete".into(),
                p: None,
            },
            DesignKind::Bcd => DesignRepr {
                kind: "bcd".into(),
                p: Some(self.p()),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DesignSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DesignRepr::deserialize(deserializer)?;
        match repr.kind.to_ascii_lowercase().as_str() {
            "complete" => Ok(DesignSpec::complete()),
            "bcd" => {
                let p = repr.p.ok_or_else(|| D::Error::missing_field("p"))?;
                // Shortest decimal rendering first, so 0.6667 stays 6667/10000.
                match parse_exact_ratio(&format!("{p}")) {
                    Ok((num, den)) => DesignSpec::bcd_ratio(num, den),
                    Err(_) => DesignSpec::bcd(p),
                }
                .map_err(D::Error::custom)
            }
            other => Err(D::Error::custom(format!("unknown design kind '{other}'"))),
        }
    }
}

/// `Pr(T_{j+1} = 1 | N_1(j) = m)`.
pub fn assignment_probability(design: &DesignSpec, j: u64, m: u64) -> Result<f64> {
    if m > j {
        return Err(Error::domain(format!("count m = {m} exceeds step j = {j}")));
    }
    Ok(design.phi(j, m))
}

/// Exact form of [`assignment_probability`].
pub fn assignment_probability_exact(design: &DesignSpec, j: u64, m: u64) -> Result<BigRational> {
    if m > j {
        return Err(Error::domain(format!("count m = {m} exceeds step j = {j}")));
    }
    Ok(design.phi_exact(j, m))
}

/// Ordered binary treatment assignments `t_1..t_n` (`true` = treatment 1).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreatmentSequence(Vec<bool>);

impl TreatmentSequence {
    pub fn new(assignments: Vec<bool>) -> Self {
        TreatmentSequence(assignments)
    }

    /// Sequence whose bit `i` (least significant first) is `t_{i+1}`.
    pub fn from_index(index: u64, n: usize) -> Self {
        TreatmentSequence((0..n).map(|i| (index >> i) & 1 == 1).collect())
    }

    pub fn to_index(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &t)| acc | ((t as u64) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn assignments(&self) -> &[bool] {
        &self.0
    }

    /// `N_1(n)`.
    pub fn count_ones(&self) -> u64 {
        self.0.iter().filter(|&&t| t).count() as u64
    }

    /// `N_1(j)`, the number of ones among the first `j` assignments.
    pub fn count_ones_through(&self, j: usize) -> u64 {
        self.0[..j].iter().filter(|&&t| t).count() as u64
    }

    /// Running counts `N_1(0), N_1(1), ..., N_1(n)`.
    pub fn running_counts(&self) -> Vec<u64> {
        let mut counts = Vec::with_capacity(self.0.len() + 1);
        counts.push(0);
        let mut c = 0;
        for &t in &self.0 {
            c += t as u64;
            counts.push(c);
        }
        counts
    }

    /// Imbalance `D_j = 2 N_1(j) - j` for `j = 0..=n`.
    pub fn imbalance(&self) -> Vec<i64> {
        self.running_counts()
            .iter()
            .enumerate()
            .map(|(j, &c)| 2 * c as i64 - j as i64)
            .collect()
    }

    pub fn complement(&self) -> Self {
        TreatmentSequence(self.0.iter().map(|t| !t).collect())
    }
}

impl fmt::Display for TreatmentSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &t in &self.0 {
            f.write_str(if t { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for TreatmentSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::domain("empty treatment sequence"));
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!(
                    "invalid character '{other}' in treatment sequence"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(TreatmentSequence)
    }
}

/// Draws a sequence of length `n` from the unconditional reference set,
/// i.e. by running the procedure forward.
pub fn simulate_unconditional<R: Rng + ?Sized>(
    design: &DesignSpec,
    n: usize,
    rng: &mut R,
) -> Result<TreatmentSequence> {
    if n < 1 {
        return Err(Error::domain("sequence length must be at least 1"));
    }
    let mut out = Vec::with_capacity(n);
    let mut m = 0u64;
    for j in 0..n as u64 {
        let t = rng.random::<f64>() < design.phi(j, m);
        m += t as u64;
        out.push(t);
    }
    Ok(TreatmentSequence(out))
}

/// Probability `f(t)` of a sequence under the unconditional law.
pub fn sequence_probability(design: &DesignSpec, seq: &TreatmentSequence) -> f64 {
    let mut m = 0u64;
    let mut prob = 1.0;
    for (j, &t) in seq.0.iter().enumerate() {
        let phi = design.phi(j as u64, m);
        prob *= if t { phi } else { 1.0 - phi };
        m += t as u64;
    }
    prob
}

/// Exact form of [`sequence_probability`].
pub fn sequence_probability_exact(design: &DesignSpec, seq: &TreatmentSequence) -> BigRational {
    let mut m = 0u64;
    let mut prob = BigRational::one();
    for (j, &t) in seq.0.iter().enumerate() {
        let phi = design.phi_exact(j as u64, m);
        prob *= if t { phi } else { BigRational::one() - phi };
        if prob.is_zero() {
            return prob;
        }
        m += t as u64;
    }
    prob
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bcd23() -> DesignSpec {
        DesignSpec::bcd_ratio(2, 3).unwrap()
    }

    #[test]
    fn efron_rule_examples() {
        let d = bcd23();
        assert_eq!(assignment_probability(&d, 0, 0).unwrap(), 0.5);
        assert!((assignment_probability(&d, 3, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            assignment_probability(&DesignSpec::complete(), 7, 6).unwrap(),
            0.5
        );
        let pb = DesignSpec::bcd_ratio(1, 1).unwrap();
        assert_eq!(assignment_probability(&pb, 1, 1).unwrap(), 0.0);
        assert!(assignment_probability(&d, 2, 3).is_err());
    }

    #[test]
    fn bias_is_validated() {
        assert!(DesignSpec::bcd(0.4).is_err());
        assert!(DesignSpec::bcd(1.01).is_err());
        assert!(DesignSpec::bcd_ratio(1, 3).is_err());
        assert_eq!(DesignSpec::bcd(2.0 / 3.0).unwrap().p_ratio(), Ratio::new(2, 3));
    }

    #[test]
    fn parse_designs() {
        assert_eq!("complete".parse::<DesignSpec>().unwrap(), DesignSpec::complete());
        assert_eq!(
            "bcd:0.6".parse::<DesignSpec>().unwrap().p_ratio(),
            Ratio::new(3, 5)
        );
        assert_eq!(
            "bcd:2/3".parse::<DesignSpec>().unwrap().p_ratio(),
            Ratio::new(2, 3)
        );
        assert_eq!(
            "bcd:0.6667".parse::<DesignSpec>().unwrap().p_ratio(),
            Ratio::new(6667, 10000)
        );
        assert!("bcd:0.3".parse::<DesignSpec>().is_err());
        assert!("urn:2".parse::<DesignSpec>().is_err());
    }

    #[test]
    fn json_form() {
        let d: DesignSpec = serde_json::from_str(r#"{"kind":"bcd","p":0.6667}"#).unwrap();
        assert_eq!(d.p_ratio(), Ratio::new(6667, 10000));
        let c: DesignSpec = serde_json::from_str(r#"{"kind":"complete"}"#).unwrap();
        assert_eq!(c, DesignSpec::complete());
        let s = serde_json::to_string(&DesignSpec::bcd_ratio(3, 4).unwrap()).unwrap();
        assert_eq!(s, r#"{"kind":"bcd","p":0.75}"#);
    }

    #[test]
    fn sequence_probability_examples() {
        let d = bcd23();
        let seq: TreatmentSequence = "11".parse().unwrap();
        assert!((sequence_probability(&d, &seq) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            sequence_probability_exact(&d, &seq),
            BigRational::new(1.into(), 6.into())
        );
        for idx in 0..8 {
            let s = TreatmentSequence::from_index(idx, 3);
            assert_eq!(sequence_probability(&DesignSpec::complete(), &s), 0.125);
        }
    }

    #[test]
    fn running_counts_and_imbalance() {
        let s: TreatmentSequence = "1101".parse().unwrap();
        assert_eq!(s.running_counts(), vec![0, 1, 2, 2, 3]);
        assert_eq!(s.imbalance(), vec![0, 1, 2, 1, 2]);
        assert_eq!(s.to_string(), "1101");
        assert_eq!(TreatmentSequence::from_index(s.to_index(), 4), s);
    }

    #[test]
    fn two_step_balance_frequency() {
        // P(N_1(2) = 1) = 2/3 under BCD(2/3).
        let d = bcd23();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| simulate_unconditional(&d, 2, &mut rng).unwrap().count_ones() == 1)
            .count();
        let freq = hits as f64 / draws as f64;
        let se = (2.0 / 9.0 / draws as f64).sqrt();
        assert!((freq - 2.0 / 3.0).abs() < 4.0 * se, "freq {freq}");
    }

    #[test]
    fn simulate_rejects_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_unconditional(&bcd23(), 0, &mut rng).is_err());
    }
}
