//! Numeric carriers shared by the exact and floating backends.
//!
//! Probabilities in the floating backend travel as natural logarithms so that
//! products like `p^k q^l binom(x, y)` at horizons of several hundred steps
//! neither overflow nor underflow. The exact backend uses `BigRational`.

use std::fmt::Debug;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Field operations needed by the moment and covariance recursions.
///
/// Implemented for `f64` (floating backend) and `BigRational` (exact backend).
pub trait Scalar: Clone + Debug + PartialEq + Send + Sync + Zero + One {
    fn from_ratio(num: u64, den: u64) -> Self;
    fn to_f64(&self) -> f64;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn over(&self, other: &Self) -> Self;
}

impl Scalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn over(&self, other: &Self) -> Self {
        self / other
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn over(&self, other: &Self) -> Self {
        self / other
    }
}

/// Converts a rational to the nearest-ish `f64`, robust to numerators and
/// denominators far beyond the `f64` range.
pub fn rational_to_f64(value: &BigRational) -> f64 {
    if value.is_zero() {
        return 0.0;
    }
    if let Some(v) = ToPrimitive::to_f64(value) {
        if v.is_finite() && v != 0.0 {
            return v;
        }
    }
    let neg = value.numer() < &BigInt::zero();
    let num = value.numer().magnitude();
    let den = value.denom().magnitude();
    let ln = ln_biguint(num) - ln_biguint(den);
    let v = ln.exp();
    if neg {
        -v
    } else {
        v
    }
}

fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map(f64::ln).unwrap_or(f64::NEG_INFINITY);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit prefix fits f64");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Exact binomial coefficient; zero outside `0 <= k <= n`.
pub fn binomial_exact(n: u64, k: i64) -> BigUint {
    if k < 0 || k as u64 > n {
        return BigUint::zero();
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

const LN_FACT_TABLE: usize = 4096;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(LN_FACT_TABLE);
        table.push(0.0);
        // Kahan-compensated running sum of ln k.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..LN_FACT_TABLE {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        table
    })
}

/// `ln(k!)`.
pub fn ln_factorial(k: u64) -> f64 {
    let table = ln_factorial_table();
    if (k as usize) < table.len() {
        table[k as usize]
    } else {
        statrs::function::gamma::ln_gamma(k as f64 + 1.0)
    }
}

/// `ln binom(n, k)`; `-inf` outside the support.
pub fn ln_binomial(n: u64, k: i64) -> f64 {
    if k < 0 || k as u64 > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k as u64) - ln_factorial(n - k as u64)
}

/// `exponent * ln(base)` with the convention `0^0 = 1`.
pub fn ln_pow(ln_base: f64, exponent: i64) -> f64 {
    debug_assert!(exponent >= 0, "negative exponent {exponent}");
    if exponent == 0 {
        0.0
    } else {
        exponent as f64 * ln_base
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over an iterator of log terms.
pub fn ln_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// A real number carried as sign and log-magnitude, for intermediate
/// differences of log-space quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub negative: bool,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        negative: false,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn positive(ln_abs: f64) -> Self {
        SignedLog {
            negative: false,
            ln_abs,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    pub fn mul_ln(self, ln_factor: f64) -> Self {
        if self.is_zero() || ln_factor == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        SignedLog {
            negative: self.negative,
            ln_abs: self.ln_abs + ln_factor,
        }
    }

    pub fn plus(self, other: SignedLog) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        if self.negative == other.negative {
            return SignedLog {
                negative: self.negative,
                ln_abs: ln_add_exp(self.ln_abs, other.ln_abs),
            };
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (small.ln_abs - big.ln_abs).exp();
        if ratio >= 1.0 {
            return Self::ZERO;
        }
        SignedLog {
            negative: big.negative,
            ln_abs: big.ln_abs + (-ratio).ln_1p(),
        }
    }

    pub fn to_f64(self) -> f64 {
        let v = self.ln_abs.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// `binom(n, k1) - binom(n, k2)` in signed log form.
///
/// When the two log-magnitudes agree to within `1e-9` the difference is
/// recomputed from exact integers.
pub fn binomial_difference(n: u64, k1: i64, k2: i64) -> SignedLog {
    let a = ln_binomial(n, k1);
    let b = ln_binomial(n, k2);
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return SignedLog::ZERO;
    }
    if (a - b).abs() < 1e-9 {
        let ea = BigInt::from(binomial_exact(n, k1));
        let eb = BigInt::from(binomial_exact(n, k2));
        let diff = ea - eb;
        if diff.is_zero() {
            return SignedLog::ZERO;
        }
        let negative = diff < BigInt::zero();
        return SignedLog {
            negative,
            ln_abs: ln_biguint(diff.magnitude()),
        };
    }
    SignedLog::positive(a).plus(SignedLog {
        negative: true,
        ln_abs: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binomial_exact(5, 2), BigUint::from(10u32));
        assert_eq!(binomial_exact(5, 6), BigUint::zero());
        assert_eq!(binomial_exact(5, -1), BigUint::zero());
        assert!((ln_binomial(30, 15) - (155117520f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ln_factorial_matches_gamma_at_table_edge() {
        let k = (LN_FACT_TABLE - 1) as u64;
        let g = statrs::function::gamma::ln_gamma(k as f64 + 1.0);
        assert!((ln_factorial(k) - g).abs() / g < 1e-13);
    }

    #[test]
    fn signed_log_arithmetic() {
        let a = SignedLog::positive(5f64.ln());
        let b = SignedLog {
            negative: true,
            ln_abs: 3f64.ln(),
        };
        assert!((a.plus(b).to_f64() - 2.0).abs() < 1e-14);
        assert!((b.plus(a).to_f64() - 2.0).abs() < 1e-14);
        assert!(a.plus(SignedLog { negative: true, ..a }).is_zero());
    }

    #[test]
    fn binomial_difference_symmetric_indices_cancel_exactly() {
        assert!(binomial_difference(10, 3, 7).is_zero());
        let d = binomial_difference(10, 5, 3).to_f64();
        assert!((d - 132.0).abs() < 1e-10);
    }

    #[test]
    fn huge_rational_to_f64() {
        let big = BigInt::from(10u32).pow(400);
        let r = BigRational::new(BigInt::from(3u32) * &big, BigInt::from(7u32) * &big);
        assert!((rational_to_f64(&r) - 3.0 / 7.0).abs() < 1e-15);
    }
}
