//! Exact law of `N_1(n)` under the biased coin design, unconditionally and
//! conditionally on an earlier count `N_1(j) = m_j`.
//!
//! Both laws are closed forms built from ballot coefficients
//! `C(x, l) = (x - l)/(x + l) binom(x + l, l)`. The branch logic lives in one
//! place ([`closed_form`]), which returns a list of [`Piece`]s; the pieces are
//! then evaluated either exactly in `BigRational` or in log space
//! (`f64` logarithms with a signed carrier for the one difference term). The
//! log-space route is what makes horizons of several hundred steps usable:
//! terms like `p^{n_1 - m_j} q^{n - 2 n_1 - 1 + l} binom(.,.)` over/underflow
//! plain floats near `n = 500`.

use std::collections::HashMap;
use std::sync::RwLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

use crate::design::{DesignKind, DesignSpec};
use crate::error::{Error, Result};
use crate::numeric::{
    binomial_difference, binomial_exact, ln_binomial, ln_pow, ln_sum_exp, Scalar, SignedLog,
};

/// Numeric backend selector for the public pmf entry points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    /// Log-space floating evaluation; any horizon.
    #[default]
    Float,
    /// Exact rational evaluation; intended for `n <= EXACT_MAX_N`.
    Rational,
}

/// Largest horizon accepted by the rational backend in user-facing entry
/// points.
pub const EXACT_MAX_N: u64 = 64;

/// A probability carried as its natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbValue {
    ln: f64,
}

impl ProbValue {
    pub const ZERO: ProbValue = ProbValue {
        ln: f64::NEG_INFINITY,
    };
    pub const ONE: ProbValue = ProbValue { ln: 0.0 };

    pub fn from_ln(ln: f64) -> Self {
        ProbValue { ln }
    }

    pub fn ln(&self) -> f64 {
        self.ln
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    /// Plain value, clamped into `[0, 1]` after checking it lies there to
    /// within `1e-12`.
    pub fn value(&self) -> f64 {
        let v = self.ln.exp();
        debug_assert!(v <= 1.0 + 1e-12, "probability {v} exceeds 1");
        v.min(1.0)
    }
}

/// One additive term of a closed form.
#[derive(Clone, Debug, PartialEq)]
pub enum Piece {
    /// `binom(n, k) p^p_exp q^q_exp`
    Binomial {
        n: u64,
        k: i64,
        p_exp: i64,
        q_exp: i64,
    },
    /// `w p^p_exp Σ_{l=0}^{upper} C(x, l) q^{q0 + l}` with `w = 1/2` when
    /// `half`, else 1.
    BallotSum {
        half: bool,
        p_exp: i64,
        x: i64,
        upper: i64,
        q0: i64,
    },
    /// `(binom(n, k1) - binom(n, k2)) p^p_exp q^q_exp`
    Difference {
        n: u64,
        k1: i64,
        k2: i64,
        p_exp: i64,
        q_exp: i64,
    },
}

/// Result of resolving the boundary conventions and case analysis.
#[derive(Clone, Debug, PartialEq)]
pub enum Form {
    Zero,
    One,
    Pieces(Vec<Piece>),
}

/// Ballot coefficient `C(x, l)`, an integer; `C(0, 0) = 1`.
pub fn ballot_coefficient(x: u64, l: u64) -> Result<BigUint> {
    if l > x {
        return Err(Error::domain(format!("ballot coefficient C({x}, {l}) needs l <= x")));
    }
    if x == 0 {
        return Ok(BigUint::one());
    }
    // (x - l) (x + l - 1)! / (l! x!) = binom(x + l, l) (x - l) / (x + l)
    let b = binomial_exact(x + l, l as i64);
    Ok(b * BigUint::from(x - l) / BigUint::from(x + l))
}

/// `ln C(x, l)`; `-inf` when `C(x, l) = 0`.
pub fn ln_ballot_coefficient(x: u64, l: u64) -> Result<f64> {
    if l > x {
        return Err(Error::domain(format!("ballot coefficient C({x}, {l}) needs l <= x")));
    }
    Ok(ln_ballot_unchecked(x as i64, l as i64))
}

fn ln_ballot_unchecked(x: i64, l: i64) -> f64 {
    debug_assert!(0 <= l && l <= x || (x == 0 && l == 0), "C({x},{l})");
    if x == 0 {
        return 0.0;
    }
    if l == x {
        return f64::NEG_INFINITY;
    }
    ((x - l) as f64).ln() - ((x + l) as f64).ln() + ln_binomial((x + l) as u64, l)
}

fn ballot_exact_unchecked(x: i64, l: i64) -> BigInt {
    BigInt::from(ballot_coefficient(x as u64, l as u64).expect("l <= x by construction"))
}

/// Closed form of `P(N_1(n) = n_1)`.
fn unconditional_form(design: &DesignSpec, n: u64, n1: u64) -> Form {
    if n == 0 {
        return if n1 == 0 { Form::One } else { Form::Zero };
    }
    if n1 > n {
        return Form::Zero;
    }
    let (n, n1) = (n as i64, n1 as i64);
    if design.kind() == DesignKind::Complete {
        return Form::Pieces(vec![Piece::Binomial {
            n: n as u64,
            k: n1,
            p_exp: n,
            q_exp: 0,
        }]);
    }
    let piece = match (2 * n1).cmp(&n) {
        std::cmp::Ordering::Equal => Piece::BallotSum {
            half: false,
            p_exp: n1,
            x: n1,
            upper: n1 - 1,
            q0: 0,
        },
        std::cmp::Ordering::Less => Piece::BallotSum {
            half: true,
            p_exp: n1,
            x: n - n1,
            upper: n1,
            q0: n - 2 * n1 - 1,
        },
        std::cmp::Ordering::Greater => Piece::BallotSum {
            half: true,
            p_exp: n - n1,
            x: n1,
            upper: n - n1,
            q0: 2 * n1 - n - 1,
        },
    };
    Form::Pieces(vec![piece])
}

/// Closed form of `P(N_1(n) = n_1 | N_1(j) = m)`, including the boundary
/// conventions: 1 when `n = j, n_1 = m`; 0 when `m > n_1` or
/// `n - j < n_1 - m`; the unconditional law when `j = 0`.
///
/// Callers guarantee `m <= j <= n`.
pub fn closed_form(design: &DesignSpec, n: u64, n1: u64, j: u64, m: u64) -> Form {
    debug_assert!(m <= j && j <= n);
    if n1 < m || n1 - m > n - j {
        return Form::Zero;
    }
    if j == n {
        return if n1 == m { Form::One } else { Form::Zero };
    }
    if j == 0 {
        return unconditional_form(design, n, n1);
    }
    let (n, n1, j, m) = (n as i64, n1 as i64, j as i64, m as i64);
    if design.kind() == DesignKind::Complete {
        return Form::Pieces(vec![Piece::Binomial {
            n: (n - j) as u64,
            k: n1 - m,
            p_exp: n - j,
            q_exp: 0,
        }]);
    }
    let nj = (n - j) as u64;
    let pieces = match (2 * m).cmp(&j) {
        // Behind: fewer on treatment 1 than half.
        std::cmp::Ordering::Less => {
            if n1 < j - m {
                vec![Piece::Binomial {
                    n: nj,
                    k: n1 - m,
                    p_exp: n1 - m,
                    q_exp: n - j - n1 + m,
                }]
            } else if 2 * n1 < n {
                vec![
                    Piece::BallotSum {
                        half: true,
                        p_exp: n1 - m,
                        x: n - n1 - m,
                        upper: n1 + m - j,
                        q0: n - 2 * n1 - 1,
                    },
                    Piece::Difference {
                        n: nj,
                        k1: n1 - m,
                        k2: n1 - j + m,
                        p_exp: n1 - m,
                        q_exp: n - j - n1 + m,
                    },
                ]
            } else if 2 * n1 == n {
                vec![Piece::BallotSum {
                    half: false,
                    p_exp: n1 - m,
                    x: n1 - m,
                    upper: n - j - n1 + m,
                    q0: 0,
                }]
            } else {
                vec![Piece::BallotSum {
                    half: true,
                    p_exp: n - n1 - m,
                    x: n1 - m,
                    upper: n - j - n1 + m,
                    q0: 2 * n1 - n - 1,
                }]
            }
        }
        // Balanced: the walk restarts from zero imbalance.
        std::cmp::Ordering::Equal => {
            return unconditional_form(design, (n - j) as u64, (n1 - m) as u64);
        }
        // Ahead: more on treatment 1 than half.
        std::cmp::Ordering::Greater => {
            if 2 * n1 < n {
                vec![Piece::BallotSum {
                    half: true,
                    p_exp: n1 + m - j,
                    x: n - j - n1 + m,
                    upper: n1 - m,
                    q0: n - 2 * n1 - 1,
                }]
            } else if 2 * n1 == n {
                vec![Piece::BallotSum {
                    half: false,
                    p_exp: n - j - n1 + m,
                    x: n - j - n1 + m,
                    upper: n1 - m,
                    q0: 0,
                }]
            } else if n1 <= n - m {
                vec![
                    Piece::BallotSum {
                        half: true,
                        p_exp: n - j - n1 + m,
                        x: n1 + m - j,
                        upper: n - n1 - m,
                        q0: 2 * n1 - n - 1,
                    },
                    Piece::Difference {
                        n: nj,
                        k1: n1 - m,
                        k2: n1 - j + m,
                        p_exp: n - j - n1 + m,
                        q_exp: n1 - m,
                    },
                ]
            } else {
                vec![Piece::Binomial {
                    n: nj,
                    k: n1 - m,
                    p_exp: n - j - n1 + m,
                    q_exp: n1 - m,
                }]
            }
        }
    };
    Form::Pieces(pieces)
}

fn eval_ln(design: &DesignSpec, form: &Form) -> f64 {
    let pieces = match form {
        Form::Zero => return f64::NEG_INFINITY,
        Form::One => return 0.0,
        Form::Pieces(p) => p,
    };
    let ln_p = design.p().ln();
    let ln_q = design.q().ln();
    let mut total = SignedLog::ZERO;
    for piece in pieces {
        let term = match *piece {
            Piece::Binomial { n, k, p_exp, q_exp } => SignedLog::positive(
                ln_binomial(n, k) + ln_pow(ln_p, p_exp) + ln_pow(ln_q, q_exp),
            ),
            Piece::BallotSum {
                half,
                p_exp,
                x,
                upper,
                q0,
            } => {
                let sum = ln_sum_exp((0..=upper).map(|l| {
                    let lq = ln_pow(ln_q, q0 + l);
                    if lq == f64::NEG_INFINITY {
                        lq
                    } else {
                        ln_ballot_unchecked(x, l) + lq
                    }
                }));
                let w = if half { -std::f64::consts::LN_2 } else { 0.0 };
                SignedLog::positive(sum + w + ln_pow(ln_p, p_exp))
            }
            Piece::Difference {
                n,
                k1,
                k2,
                p_exp,
                q_exp,
            } => binomial_difference(n, k1, k2).mul_ln(ln_pow(ln_p, p_exp) + ln_pow(ln_q, q_exp)),
        };
        total = total.plus(term);
    }
    if total.negative {
        // Round-off only; the closed forms are nonnegative.
        debug_assert!(total.ln_abs < -25.0, "negative probability {}", total.to_f64());
        return f64::NEG_INFINITY;
    }
    total.ln_abs.min(0.0)
}

fn eval_exact(design: &DesignSpec, form: &Form) -> BigRational {
    let pieces = match form {
        Form::Zero => return BigRational::zero(),
        Form::One => return BigRational::one(),
        Form::Pieces(p) => p,
    };
    let p = design.p_exact();
    let q = design.q_exact();
    let pow = |base: &BigRational, e: i64| -> BigRational {
        debug_assert!(e >= 0);
        Pow::pow(base, e as u32)
    };
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let mut total = BigRational::zero();
    for piece in pieces {
        let term = match *piece {
            Piece::Binomial { n, k, p_exp, q_exp } => {
                BigRational::from(BigInt::from(binomial_exact(n, k))) * pow(&p, p_exp) * pow(&q, q_exp)
            }
            Piece::BallotSum {
                half: is_half,
                p_exp,
                x,
                upper,
                q0,
            } => {
                let mut sum = BigRational::zero();
                for l in 0..=upper {
                    if q.is_zero() && q0 + l > 0 {
                        continue;
                    }
                    sum += BigRational::from(ballot_exact_unchecked(x, l)) * pow(&q, q0 + l);
                }
                let w = if is_half { half.clone() } else { BigRational::one() };
                w * pow(&p, p_exp) * sum
            }
            Piece::Difference {
                n,
                k1,
                k2,
                p_exp,
                q_exp,
            } => {
                let d = BigInt::from(binomial_exact(n, k1)) - BigInt::from(binomial_exact(n, k2));
                BigRational::from(d) * pow(&p, p_exp) * pow(&q, q_exp)
            }
        };
        total += term;
    }
    total
}

fn check_counts(n: u64, n1: u64) -> Result<()> {
    if n1 > n {
        return Err(Error::domain(format!("count n_1 = {n1} exceeds horizon n = {n}")));
    }
    Ok(())
}

fn check_condition(n: u64, n1: u64, j: u64, m: u64) -> Result<()> {
    check_counts(n, n1)?;
    if j > n {
        return Err(Error::domain(format!("step j = {j} exceeds horizon n = {n}")));
    }
    if m > j {
        return Err(Error::domain(format!("count m_j = {m} exceeds step j = {j}")));
    }
    Ok(())
}

/// `P(N_1(n) = n_1)`.
pub fn unconditional_pmf(design: &DesignSpec, n: u64, n1: u64) -> Result<f64> {
    check_counts(n, n1)?;
    Ok(ProbValue::from_ln(eval_ln(design, &unconditional_form(design, n, n1))).value())
}

/// `ln P(N_1(n) = n_1)`; useful when the probability underflows.
pub fn ln_unconditional_pmf(design: &DesignSpec, n: u64, n1: u64) -> Result<f64> {
    check_counts(n, n1)?;
    Ok(eval_ln(design, &unconditional_form(design, n, n1)))
}

pub fn unconditional_pmf_exact(design: &DesignSpec, n: u64, n1: u64) -> Result<BigRational> {
    check_counts(n, n1)?;
    Ok(eval_exact(design, &unconditional_form(design, n, n1)))
}

/// `P(N_1(n) = n_1 | N_1(j) = m_j)`.
pub fn conditional_pmf(design: &DesignSpec, n: u64, n1: u64, j: u64, m: u64) -> Result<f64> {
    check_condition(n, n1, j, m)?;
    Ok(ProbValue::from_ln(eval_ln(design, &closed_form(design, n, n1, j, m))).value())
}

pub fn ln_conditional_pmf(design: &DesignSpec, n: u64, n1: u64, j: u64, m: u64) -> Result<f64> {
    check_condition(n, n1, j, m)?;
    Ok(eval_ln(design, &closed_form(design, n, n1, j, m)))
}

pub fn conditional_pmf_exact(
    design: &DesignSpec,
    n: u64,
    n1: u64,
    j: u64,
    m: u64,
) -> Result<BigRational> {
    check_condition(n, n1, j, m)?;
    Ok(eval_exact(design, &closed_form(design, n, n1, j, m)))
}

/// `ln P(N_1(n) = n_1 | N_1(j) = m)` without argument checks; requires
/// `m <= j <= n`.
pub(crate) fn ln_conditional_unchecked(design: &DesignSpec, n: u64, n1: u64, j: u64, m: u64) -> f64 {
    eval_ln(design, &closed_form(design, n, n1, j, m))
}

/// `P(N_1(n) = n_1)` for `n_1 = 0..=n`.
pub fn pmf_table(design: &DesignSpec, n: u64) -> Result<Vec<f64>> {
    conditional_pmf_table(design, n, 0, 0)
}

/// `P(N_1(n) = n_1 | N_1(j) = m_j)` for `n_1 = 0..=n`.
pub fn conditional_pmf_table(design: &DesignSpec, n: u64, j: u64, m: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    (0..=n).map(|n1| conditional_pmf(design, n, n1, j, m)).collect()
}

pub fn conditional_pmf_table_exact(
    design: &DesignSpec,
    n: u64,
    j: u64,
    m: u64,
) -> Result<Vec<BigRational>> {
    if n < 1 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    (0..=n).map(|n1| conditional_pmf_exact(design, n, n1, j, m)).collect()
}

/// Source of transition probabilities and conditional kernels for the
/// moment recursions. `conditional(n, n1, j, m)` is
/// `P(N_1(n) = n_1 | N_1(j) = m)` and must only be called with
/// `m <= j <= n`.
pub trait Kernel: Sync {
    type Value: Scalar;

    fn design(&self) -> &DesignSpec;
    fn conditional(&self, n: u64, n1: u64, j: u64, m: u64) -> Self::Value;
    fn phi(&self, j: u64, m: u64) -> Self::Value;
}

type MemoKey = (u64, u64, u64, u64);

/// Log-space conditional kernel with a per-instance memo keyed by
/// `(n, n_1, j, m_j)`.
#[derive(Debug)]
pub struct ConditionalKernel {
    design: DesignSpec,
    memo: RwLock<HashMap<MemoKey, f64>>,
}

impl ConditionalKernel {
    pub fn new(design: DesignSpec) -> Self {
        ConditionalKernel {
            design,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn ln_conditional(&self, n: u64, n1: u64, j: u64, m: u64) -> f64 {
        let key = (n, n1, j, m);
        if let Some(&v) = self.memo.read().expect("memo lock").get(&key) {
            return v;
        }
        let v = eval_ln(&self.design, &closed_form(&self.design, n, n1, j, m));
        self.memo.write().expect("memo lock").insert(key, v);
        v
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().expect("memo lock").len()
    }
}

impl Kernel for ConditionalKernel {
    type Value = f64;

    fn design(&self) -> &DesignSpec {
        &self.design
    }

    fn conditional(&self, n: u64, n1: u64, j: u64, m: u64) -> f64 {
        ProbValue::from_ln(self.ln_conditional(n, n1, j, m)).value()
    }

    fn phi(&self, j: u64, m: u64) -> f64 {
        self.design.phi(j, m)
    }
}

/// Rational conditional kernel with a per-instance memo.
#[derive(Debug)]
pub struct ExactKernel {
    design: DesignSpec,
    memo: RwLock<HashMap<MemoKey, BigRational>>,
}

impl ExactKernel {
    pub fn new(design: DesignSpec) -> Self {
        ExactKernel {
            design,
            memo: RwLock::new(HashMap::new()),
        }
    }
}

impl Kernel for ExactKernel {
    type Value = BigRational;

    fn design(&self) -> &DesignSpec {
        &self.design
    }

    fn conditional(&self, n: u64, n1: u64, j: u64, m: u64) -> BigRational {
        let key = (n, n1, j, m);
        if let Some(v) = self.memo.read().expect("memo lock").get(&key) {
            return v.clone();
        }
        let v = eval_exact(&self.design, &closed_form(&self.design, n, n1, j, m));
        self.memo
            .write()
            .expect("memo lock")
            .insert(key, v.clone());
        v
    }

    fn phi(&self, j: u64, m: u64) -> BigRational {
        self.design.phi_exact(j, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn bcd23() -> DesignSpec {
        DesignSpec::bcd_ratio(2, 3).unwrap()
    }

    #[test]
    fn ballot_examples() {
        for x in 1..20 {
            assert_eq!(ballot_coefficient(x, 0).unwrap(), BigUint::one());
            assert_eq!(ballot_coefficient(x, x).unwrap(), BigUint::zero());
        }
        assert_eq!(ballot_coefficient(2, 1).unwrap(), BigUint::one());
        assert_eq!(ballot_coefficient(0, 0).unwrap(), BigUint::one());
        assert!(ballot_coefficient(2, 3).is_err());
        // C(5, 2) = 3/7 * binom(7, 2) = 9
        assert_eq!(ballot_coefficient(5, 2).unwrap(), BigUint::from(9u32));
        assert!((ln_ballot_coefficient(5, 2).unwrap() - 9f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn unconditional_examples() {
        let half = DesignSpec::bcd_ratio(1, 2).unwrap();
        assert!((unconditional_pmf(&half, 4, 2).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(unconditional_pmf_exact(&bcd23(), 2, 1).unwrap(), r(2, 3));
        assert_eq!(unconditional_pmf_exact(&bcd23(), 2, 2).unwrap(), r(1, 6));
        assert!(unconditional_pmf(&bcd23(), 2, 3).is_err());
    }

    #[test]
    fn pmf_tables() {
        let half = DesignSpec::bcd_ratio(1, 2).unwrap();
        let t = pmf_table(&half, 2).unwrap();
        assert!((t[0] - 0.25).abs() < 1e-15 && (t[1] - 0.5).abs() < 1e-15);
        let t = pmf_table(&bcd23(), 2).unwrap();
        for (got, want) in t.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(pmf_table(&bcd23(), 0).is_err());
    }

    #[test]
    fn normalization_to_n_500() {
        for design in [
            DesignSpec::complete(),
            DesignSpec::bcd_ratio(3, 5).unwrap(),
            bcd23(),
            DesignSpec::bcd_ratio(3, 4).unwrap(),
            DesignSpec::bcd_ratio(1, 1).unwrap(),
        ] {
            for n in [1u64, 2, 7, 50, 199, 500] {
                let t = pmf_table(&design, n).unwrap();
                let s: f64 = t.iter().sum();
                assert!((s - 1.0).abs() < 1e-10, "{design} n={n} sum={s}");
                assert!(t.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn conditional_examples() {
        let d = bcd23();
        assert_eq!(conditional_pmf_exact(&d, 4, 2, 1, 1).unwrap(), r(16, 27));
        assert!((conditional_pmf(&d, 4, 2, 1, 1).unwrap() - 16.0 / 27.0).abs() < 1e-14);
        assert_eq!(conditional_pmf_exact(&d, 5, 3, 5, 3).unwrap(), r(1, 1));
        assert_eq!(conditional_pmf_exact(&d, 6, 1, 3, 2).unwrap(), r(0, 1));
        assert_eq!(
            conditional_pmf_exact(&d, 6, 3, 0, 0).unwrap(),
            unconditional_pmf_exact(&d, 6, 3).unwrap()
        );
        assert!(conditional_pmf(&d, 6, 3, 2, 3).is_err());
        assert!(conditional_pmf(&d, 6, 3, 7, 3).is_err());
    }

    #[test]
    fn permuted_block_limit() {
        let d = DesignSpec::bcd_ratio(1, 1).unwrap();
        // p = 1 forces exact balance at every even step.
        assert_eq!(unconditional_pmf_exact(&d, 10, 5).unwrap(), r(1, 1));
        assert_eq!(unconditional_pmf_exact(&d, 10, 4).unwrap(), r(0, 1));
        assert_eq!(unconditional_pmf(&d, 11, 5).unwrap(), 0.5);
        assert_eq!(conditional_pmf(&d, 10, 5, 3, 2).unwrap(), 1.0);
    }

    #[test]
    fn symmetry_at_large_n() {
        let d = DesignSpec::bcd_ratio(3, 4).unwrap();
        for n1 in 0..=300u64 {
            let a = unconditional_pmf(&d, 300, n1).unwrap();
            let b = unconditional_pmf(&d, 300, 300 - n1).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_agree() {
        let d = DesignSpec::bcd_ratio(3, 5).unwrap();
        let fk = ConditionalKernel::new(d);
        let ek = ExactKernel::new(d);
        for j in 0..=9u64 {
            for m in 0..=j {
                for n1 in 0..=9 {
                    let a = fk.conditional(9, n1, j, m);
                    let b = ek.conditional(9, n1, j, m).to_f64();
                    assert!((a - b).abs() < 1e-13);
                }
            }
        }
        assert!(fk.memo_len() > 0);
        // second query served from the memo
        let before = fk.memo_len();
        fk.conditional(9, 4, 3, 1);
        assert_eq!(fk.memo_len(), before);
    }
}
