//! Conditional moments and covariance of the assignment vector, and the
//! randomization-based information fraction
//!
//! ```text
//! t_l = a'_{r_l} Σ_{|r_l} a_{r_l} / a'_n Σ_{|n} a_n .
//! ```
//!
//! `Σ_{|n}` conditions on the final count `N_1(n) = n_1`; `Σ_{|r_l}` on every
//! look count through look `l`. By the Markov property of `N_1` the latter is
//! block diagonal over look segments, and each block is a *bridge*: the chain
//! started at `N_1(s) = m_s` and pinned at `N_1(e) = m_e`.
//!
//! Two routes compute the bridge moments:
//!
//! * the literal Bayes/Markov sums (`theta_*`, `cross_moment_*`), which query
//!   the closed-form kernel for every forward and backward factor and cost
//!   `O(n)` (first moments) or `O(n^2)` (cross moments) kernel calls per entry;
//! * a full-matrix assembly that keeps the backward factors
//!   `P(N_1(e) = m_e | N_1(j) = b)` from the kernel but propagates the forward
//!   factors through the chain, sharing work across entries. One row of
//!   cross moments then costs `O(n^2)` arithmetic and a full block `O(n^3)`.
//!
//! Both are generic over [`Kernel`], so the same code runs in `f64` and in
//! exact rational arithmetic.

use std::collections::HashMap;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::exact_dist::{unconditional_pmf, ConditionalKernel, ExactKernel, Kernel};
use num_traits::{One, Zero};

use crate::numeric::Scalar;
use crate::ranktest::{centered_scores, ScoreKind, ScoreVector};
use crate::rng::{tag, StreamSeed};
use crate::sampler::LookSchedule;
use rand::Rng;

/// The event a covariance matrix conditions on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// No conditioning: horizon `n` only.
    Unconditional { n: u64 },
    /// `N_1(n) = n_1`.
    Final { n: u64, n1: u64 },
    /// `∩_l {N_1(r_l) = n_{1l}}`.
    Looks(LookSchedule),
}

/// Dense symmetric covariance matrix of `T_1, ..., T_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix<S> {
    dim: usize,
    entries: Vec<S>,
    conditioning: Conditioning,
}

/// Floating covariance matrix as produced by the default backend.
pub type ConditionalCovariance = CovarianceMatrix<f64>;

impl<S: Scalar> CovarianceMatrix<S> {
    pub(crate) fn zeros(dim: usize, conditioning: Conditioning) -> Self {
        CovarianceMatrix {
            dim,
            entries: vec![S::zero(); dim * dim],
            conditioning,
        }
    }

    pub(crate) fn set_symmetric(&mut self, i: usize, j: usize, value: S) {
        self.entries[i * self.dim + j] = value.clone();
        self.entries[j * self.dim + i] = value;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `σ_{ij}` for 0-based positions.
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.conditioning
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.dim)
            .map(|i| self.row(i).iter().fold(S::zero(), |acc, x| acc.plus(x)))
            .collect()
    }

    pub fn to_f64(&self) -> ConditionalCovariance {
        CovarianceMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(Scalar::to_f64).collect(),
            conditioning: self.conditioning.clone(),
        }
    }
}

impl ConditionalCovariance {
    /// `a' Σ a`.
    pub fn quadratic_form(&self, a: &[f64]) -> Result<f64> {
        if a.len() != self.dim {
            return Err(Error::domain(format!(
                "score vector of length {} against a {}x{} covariance",
                a.len(),
                self.dim,
                self.dim
            )));
        }
        Ok((0..self.dim)
            .map(|i| {
                let row = self.row(i);
                a[i] * row.iter().zip(a).map(|(s, x)| s * x).sum::<f64>()
            })
            .sum())
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max_abs_diff(&self, other: &ConditionalCovariance) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Forward factor `P(N_1(j) = a | N_1(s) = m_s)`.
fn forward<K: Kernel>(kernel: &K, j: u64, a: u64, s: u64, ms: u64) -> K::Value {
    if a < ms || a - ms > j - s {
        K::Value::zero()
    } else if j == s {
        K::Value::one()
    } else {
        kernel.conditional(j, a, s, ms)
    }
}

/// Backward factor `P(N_1(e) = m_e | N_1(j) = b)`.
fn backward<K: Kernel>(kernel: &K, e: u64, me: u64, j: u64, b: u64) -> K::Value {
    if b > me || me - b > e - j {
        K::Value::zero()
    } else if j == e {
        K::Value::one()
    } else {
        kernel.conditional(e, me, j, b)
    }
}

/// `(s, m_s, e, m_e)` of the segment holding position `i` (1-based).
fn segment_for(schedule: &LookSchedule, i: u64) -> Result<(u64, u64, u64, u64)> {
    if i == 0 {
        return Err(Error::domain("positions are 1-based"));
    }
    let k = schedule
        .segment_of(i - 1)
        .ok_or_else(|| Error::domain(format!("position {i} beyond the last look")))?;
    let (s, ms) = schedule.segment_start(k);
    let look = schedule.looks()[k];
    Ok((s, ms, look.r, look.n1))
}

fn bridge_mass<K: Kernel>(kernel: &K, s: u64, ms: u64, e: u64, me: u64) -> Result<K::Value> {
    let z = backward(kernel, e, me, s, ms);
    if z.is_zero() {
        return Err(Error::infeasible(format!(
            "N_1({e}) = {me} is unreachable from N_1({s}) = {ms}"
        )));
    }
    Ok(z)
}

/// `E(T_i | bridge)` by the literal sum over `a`.
fn theta_bridge<K: Kernel>(kernel: &K, s: u64, ms: u64, e: u64, me: u64, i: u64) -> Result<K::Value> {
    let z = bridge_mass(kernel, s, ms, e, me)?;
    let mut acc = K::Value::zero();
    for a in ms..=ms + (i - 1 - s) {
        let f = forward(kernel, i - 1, a, s, ms);
        if f.is_zero() {
            continue;
        }
        let term = f
            .times(&kernel.phi(i - 1, a))
            .times(&backward(kernel, e, me, i, a + 1));
        acc = acc.plus(&term);
    }
    Ok(acc.over(&z))
}

/// `E(T_i T_j | bridge)`, `i < j`, by the literal double sum.
fn cross_bridge<K: Kernel>(
    kernel: &K,
    (s, ms, e, me): (u64, u64, u64, u64),
    i: u64,
    j: u64,
) -> Result<K::Value> {
    let z = bridge_mass(kernel, s, ms, e, me)?;
    let mut acc = K::Value::zero();
    for a in ms..=ms + (i - 1 - s) {
        let f = forward(kernel, i - 1, a, s, ms);
        if f.is_zero() {
            continue;
        }
        let head = f.times(&kernel.phi(i - 1, a));
        let mut inner = K::Value::zero();
        for b in a + 1..=a + 1 + (j - 1 - i) {
            let g = forward(kernel, j - 1, b, i, a + 1);
            if g.is_zero() {
                continue;
            }
            let term = g
                .times(&kernel.phi(j - 1, b))
                .times(&backward(kernel, e, me, j, b + 1));
            inner = inner.plus(&term);
        }
        acc = acc.plus(&head.times(&inner));
    }
    Ok(acc.over(&z))
}

fn check_single(n: u64, n1: u64) -> Result<()> {
    if n < 1 || n1 > n {
        return Err(Error::domain(format!("invalid conditioning N_1({n}) = {n1}")));
    }
    Ok(())
}

fn check_position(i: u64, n: u64) -> Result<()> {
    if i < 1 || i > n {
        return Err(Error::domain(format!("position {i} outside 1..={n}")));
    }
    Ok(())
}

/// `ϑ_{i|n_1} = E(T_i | N_1(n) = n_1)` with a caller-supplied kernel.
pub fn theta_single_with<K: Kernel>(kernel: &K, n: u64, n1: u64, i: u64) -> Result<K::Value> {
    check_single(n, n1)?;
    check_position(i, n)?;
    theta_bridge(kernel, 0, 0, n, n1, i)
}

/// `ϑ_{i|n_1} = E(T_i | N_1(n) = n_1)`, positions 1-based.
pub fn theta_single(design: &DesignSpec, n: u64, n1: u64, i: u64) -> Result<f64> {
    theta_single_with(&ConditionalKernel::new(*design), n, n1, i)
}

/// `E(T_i T_j | N_1(n) = n_1)` with a caller-supplied kernel.
pub fn cross_moment_single_with<K: Kernel>(
    kernel: &K,
    n: u64,
    n1: u64,
    i: u64,
    j: u64,
) -> Result<K::Value> {
    check_single(n, n1)?;
    check_position(i, n)?;
    check_position(j, n)?;
    if i >= j {
        return Err(Error::domain(format!("cross moment needs i < j, got {i}, {j}")));
    }
    cross_bridge(kernel, (0, 0, n, n1), i, j)
}

/// `E(T_i T_j | N_1(n) = n_1)` for `1 <= i < j <= n`.
pub fn cross_moment_single(design: &DesignSpec, n: u64, n1: u64, i: u64, j: u64) -> Result<f64> {
    cross_moment_single_with(&ConditionalKernel::new(*design), n, n1, i, j)
}

/// `ϑ_{i|r_l}`: first moment given every look in `schedule`.
pub fn theta_multilook_with<K: Kernel>(kernel: &K, schedule: &LookSchedule, i: u64) -> Result<K::Value> {
    let (s, ms, e, me) = segment_for(schedule, i)?;
    theta_bridge(kernel, s, ms, e, me, i)
}

/// `λ_{ij|r_l}`: cross moment given every look in `schedule`.
pub fn cross_moment_multilook_with<K: Kernel>(
    kernel: &K,
    schedule: &LookSchedule,
    i: u64,
    j: u64,
) -> Result<K::Value> {
    if i >= j {
        return Err(Error::domain(format!("cross moment needs i < j, got {i}, {j}")));
    }
    let seg_i = segment_for(schedule, i)?;
    let seg_j = segment_for(schedule, j)?;
    if seg_i != seg_j {
        let (s, ms, e, me) = seg_i;
        let ti = theta_bridge(kernel, s, ms, e, me, i)?;
        let (s, ms, e, me) = seg_j;
        return Ok(ti.times(&theta_bridge(kernel, s, ms, e, me, j)?));
    }
    cross_bridge(kernel, seg_i, i, j)
}

/// Covariance block of the bridge `N_1(s) = m_s → N_1(e) = m_e`, indexed by
/// positions `s+1 ..= e`, assembled by forward propagation.
fn bridge_block<K: Kernel>(kernel: &K, s: u64, ms: u64, e: u64, me: u64) -> Result<Vec<Vec<K::Value>>> {
    let z = bridge_mass(kernel, s, ms, e, me)?;
    let len = (e - s) as usize;
    let zero = K::Value::zero();
    let one = K::Value::one();

    // back[j - s][b - ms] = P(N_1(e) = m_e | N_1(j) = b);
    // phi[j - s][a - ms] = φ_{j+1}(a).
    let back: Vec<Vec<K::Value>> = (0..=len)
        .into_par_iter()
        .map(|dj| {
            let j = s + dj as u64;
            (0..=dj)
                .map(|db| backward(kernel, e, me, j, ms + db as u64))
                .collect()
        })
        .collect();
    let phi: Vec<Vec<K::Value>> = (0..len)
        .map(|dj| {
            let j = s + dj as u64;
            (0..=dj).map(|da| kernel.phi(j, ms + da as u64)).collect()
        })
        .collect();

    // forward[dj][da] = P(N_1(s + dj) = m_s + da | N_1(s) = m_s)
    let mut forward_dist: Vec<Vec<K::Value>> = Vec::with_capacity(len);
    let mut u = vec![one.clone()];
    for (dj, phi_j) in phi.iter().enumerate().take(len) {
        let mut next = vec![zero.clone(); dj + 2];
        for (da, w) in u.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            let p = &phi_j[da];
            next[da + 1] = next[da + 1].plus(&w.times(p));
            next[da] = next[da].plus(&w.times(&one.minus(p)));
        }
        forward_dist.push(std::mem::replace(&mut u, next));
    }

    let theta: Vec<K::Value> = (0..len)
        .map(|di| {
            // position i = s + di + 1, state before it at step s + di
            let mut acc = zero.clone();
            for (da, w) in forward_dist[di].iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                acc = acc.plus(&w.times(&phi[di][da]).times(&back[di + 1][da + 1]));
            }
            acc.over(&z)
        })
        .collect();

    let rows: Vec<Vec<K::Value>> = (0..len)
        .into_par_iter()
        .map(|di| {
            let mut row = vec![zero.clone(); len];
            let ti = &theta[di];
            row[di] = ti.times(&one.minus(ti));
            // v[db] = P(N_1(step) = m_s + db, T_i = 1 | N_1(s) = m_s), starting
            // at step s + di + 1 right after position i.
            let mut v = vec![zero.clone(); di + 2];
            for (da, w) in forward_dist[di].iter().enumerate() {
                v[da + 1] = w.times(&phi[di][da]);
            }
            for dj in di + 1..len {
                // position j = s + dj + 1, state before it at step s + dj
                let mut acc = zero.clone();
                for (db, w) in v.iter().enumerate() {
                    if w.is_zero() {
                        continue;
                    }
                    acc = acc.plus(&w.times(&phi[dj][db]).times(&back[dj + 1][db + 1]));
                }
                let lambda = acc.over(&z);
                row[dj] = lambda.minus(&ti.times(&theta[dj]));
                if dj + 1 < len {
                    let mut next = vec![zero.clone(); dj + 2];
                    for (db, w) in v.iter().enumerate() {
                        if w.is_zero() {
                            continue;
                        }
                        let p = &phi[dj][db];
                        next[db + 1] = next[db + 1].plus(&w.times(p));
                        next[db] = next[db].plus(&w.times(&one.minus(p)));
                    }
                    v = next;
                }
            }
            row
        })
        .collect();
    Ok(rows)
}

fn assemble<K: Kernel>(
    kernel: &K,
    segments: &[(u64, u64, u64, u64)],
    dim: usize,
    conditioning: Conditioning,
) -> Result<CovarianceMatrix<K::Value>> {
    let mut sigma = CovarianceMatrix::zeros(dim, conditioning);
    for &(s, ms, e, me) in segments {
        let block = bridge_block(kernel, s, ms, e, me)?;
        for (di, row) in block.into_iter().enumerate() {
            for (dj, value) in row.into_iter().enumerate().skip(di) {
                sigma.set_symmetric(s as usize + di, s as usize + dj, value);
            }
        }
    }
    Ok(sigma)
}

/// `Σ_{|n_1}` with a caller-supplied kernel.
pub fn covariance_final_with<K: Kernel>(kernel: &K, n: u64, n1: u64) -> Result<CovarianceMatrix<K::Value>> {
    check_single(n, n1)?;
    assemble(kernel, &[(0, 0, n, n1)], n as usize, Conditioning::Final { n, n1 })
}

/// `Σ_{|n_1}`: covariance of `T` given `N_1(n) = n_1`.
pub fn covariance_final(design: &DesignSpec, n: u64, n1: u64) -> Result<ConditionalCovariance> {
    covariance_final_with(&ConditionalKernel::new(*design), n, n1)
}

pub fn covariance_final_exact(design: &DesignSpec, n: u64, n1: u64) -> Result<CovarianceMatrix<BigRational>> {
    covariance_final_with(&ExactKernel::new(*design), n, n1)
}

/// `Σ_{|r_l}` with a caller-supplied kernel.
pub fn covariance_multilook_with<K: Kernel>(
    kernel: &K,
    schedule: &LookSchedule,
) -> Result<CovarianceMatrix<K::Value>> {
    let segments: Vec<_> = (0..schedule.len())
        .map(|k| {
            let (s, ms) = schedule.segment_start(k);
            let look = schedule.looks()[k];
            (s, ms, look.r, look.n1)
        })
        .collect();
    assemble(
        kernel,
        &segments,
        schedule.horizon() as usize,
        Conditioning::Looks(schedule.clone()),
    )
}

/// `Σ_{|r_l}`: block-diagonal covariance of the first `r_l` assignments given
/// every look count in `schedule` (pass `schedule.prefix(l)` for look `l`).
pub fn covariance_multilook(design: &DesignSpec, schedule: &LookSchedule) -> Result<ConditionalCovariance> {
    covariance_multilook_with(&ConditionalKernel::new(*design), schedule)
}

pub fn covariance_multilook_exact(
    design: &DesignSpec,
    schedule: &LookSchedule,
) -> Result<CovarianceMatrix<BigRational>> {
    covariance_multilook_with(&ExactKernel::new(*design), schedule)
}

/// Interim-to-final variance ratio at one look.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InformationFraction {
    /// 1-based look index.
    pub look: usize,
    pub t: f64,
    pub numerator: f64,
    pub denominator: f64,
}

fn fraction_from_forms(look: usize, numerator: f64, denominator: f64) -> Result<InformationFraction> {
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(Error::DegenerateScores(format!(
            "final variance form is {denominator} at look {look}"
        )));
    }
    if numerator.is_nan() || numerator <= 0.0 {
        return Err(Error::DegenerateScores(format!(
            "interim variance form is {numerator} at look {look}"
        )));
    }
    // The ratio is a variance ratio and belongs to (0, 1]; interpolated
    // denominators can undershoot the interim form, in which case it is capped.
    let t = (numerator / denominator).min(1.0);
    Ok(InformationFraction {
        look,
        t,
        numerator,
        denominator,
    })
}

/// `t_l` from a single final score vector.
pub fn information_fraction(
    look: usize,
    scores_l: &ScoreVector,
    scores_n: &ScoreVector,
    sigma_l: &ConditionalCovariance,
    sigma_n: &ConditionalCovariance,
) -> Result<InformationFraction> {
    information_fraction_averaged(look, scores_l, std::slice::from_ref(scores_n), sigma_l, sigma_n)
}

/// `t_l` with the denominator form averaged over completed score vectors.
pub fn information_fraction_averaged(
    look: usize,
    scores_l: &ScoreVector,
    completions: &[ScoreVector],
    sigma_l: &ConditionalCovariance,
    sigma_n: &ConditionalCovariance,
) -> Result<InformationFraction> {
    if completions.is_empty() {
        return Err(Error::domain("no completed score vectors"));
    }
    let numerator = sigma_l.quadratic_form(scores_l.scores())?;
    let mut total = 0.0;
    for a in completions {
        total += sigma_n.quadratic_form(a.scores())?;
    }
    fraction_from_forms(look, numerator, total / completions.len() as f64)
}

/// Fills responses `r+1..=n` by resampling the observed ones with replacement.
///
/// Returns `B` completed vectors; replicate `b` uses substream `b`. When the
/// observed prefix is already complete, the single observed vector is returned.
pub fn interpolate_responses(observed: &[f64], n: usize, bootstrap: usize, seed: StreamSeed) -> Result<Vec<Vec<f64>>> {
    if observed.is_empty() {
        return Err(Error::domain("no observed responses to resample"));
    }
    if observed.len() > n {
        return Err(Error::domain(format!(
            "{} observed responses exceed the horizon {n}",
            observed.len()
        )));
    }
    if bootstrap == 0 {
        return Err(Error::domain("bootstrap replicate count must be at least 1"));
    }
    if observed.len() == n {
        return Ok(vec![observed.to_vec()]);
    }
    Ok((0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(tag::INTERPOLATE, b as u64);
            let mut full = Vec::with_capacity(n);
            full.extend_from_slice(observed);
            for _ in observed.len()..n {
                full.push(observed[rng.random_range(0..observed.len())]);
            }
            full
        })
        .collect())
}

/// Completed responses re-scored over the full horizon.
pub fn interpolate_scores(
    observed: &[f64],
    n: usize,
    kind: ScoreKind,
    bootstrap: usize,
    seed: StreamSeed,
) -> Result<Vec<ScoreVector>> {
    interpolate_responses(observed, n, bootstrap, seed)?
        .iter()
        .map(|full| centered_scores(full, kind))
        .collect()
}

/// How the final count `n_1` behind `Σ_{|n}` is chosen at an interim look.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FinalCount {
    /// Nearest feasible count to `n · n_{1l} / r_l`.
    #[default]
    Projected,
    /// A known final count.
    Known(u64),
}

/// Source of the final score vector `a_n` in the denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenominatorScores {
    /// Complete the first `r_l` responses by resampling, `bootstrap` times.
    Interpolated { bootstrap: usize },
    /// Use all `n` responses as observed (retrospective analysis).
    Observed,
}

impl Default for DenominatorScores {
    fn default() -> Self {
        DenominatorScores::Interpolated { bootstrap: 100 }
    }
}

/// Nearest count to `target` with positive unconditional probability.
pub fn nearest_feasible_count(design: &DesignSpec, n: u64, target: f64) -> Result<u64> {
    let centre = target.round().clamp(0.0, n as f64) as i64;
    for offset in 0..=n as i64 {
        for cand in [centre - offset, centre + offset] {
            if (0..=n as i64).contains(&cand) && unconditional_pmf(design, n, cand as u64)? > 0.0 {
                return Ok(cand as u64);
            }
        }
    }
    Err(Error::infeasible(format!("no feasible final count at horizon {n}")))
}

/// Covariance matrices for every look of a schedule, computed once and reused
/// across data sets.
#[derive(Debug)]
pub struct InformationPlan {
    design: DesignSpec,
    n: u64,
    schedule: LookSchedule,
    final_count: FinalCount,
    sigma_looks: Vec<ConditionalCovariance>,
    final_counts: Vec<u64>,
    sigma_final: HashMap<u64, ConditionalCovariance>,
}

impl InformationPlan {
    pub fn new(design: DesignSpec, n: u64, schedule: LookSchedule, final_count: FinalCount) -> Result<Self> {
        if schedule.horizon() > n {
            return Err(Error::domain(format!(
                "last look at {} beyond the horizon {n}",
                schedule.horizon()
            )));
        }
        schedule.validate_for(&design)?;
        let kernel = ConditionalKernel::new(design);
        let sigma_looks = (1..=schedule.len())
            .map(|l| covariance_multilook_with(&kernel, &schedule.prefix(l)?))
            .collect::<Result<Vec<_>>>()?;
        let mut final_counts = Vec::with_capacity(schedule.len());
        let mut sigma_final = HashMap::new();
        for look in schedule.looks() {
            if look.r == n {
                final_counts.push(look.n1);
                continue;
            }
            let n1 = match final_count {
                FinalCount::Known(n1) => n1,
                FinalCount::Projected => {
                    nearest_feasible_count(&design, n, n as f64 * look.n1 as f64 / look.r as f64)?
                }
            };
            if n1 > n || unconditional_pmf(&design, n, n1)? == 0.0 {
                return Err(Error::infeasible(format!(
                    "final count {n1} has probability zero at horizon {n}"
                )));
            }
            final_counts.push(n1);
            if let std::collections::hash_map::Entry::Vacant(slot) = sigma_final.entry(n1) {
                slot.insert(covariance_final_with(&kernel, n, n1)?);
            }
        }
        Ok(InformationPlan {
            design,
            n,
            schedule,
            final_count,
            sigma_looks,
            final_counts,
            sigma_final,
        })
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn horizon(&self) -> u64 {
        self.n
    }

    pub fn schedule(&self) -> &LookSchedule {
        &self.schedule
    }

    pub fn final_count_mode(&self) -> FinalCount {
        self.final_count
    }

    /// Final count assumed behind `Σ_{|n}` at each look.
    pub fn final_counts(&self) -> &[u64] {
        &self.final_counts
    }

    /// `Σ_{|r_l}` for 1-based look `l`.
    pub fn sigma_look(&self, l: usize) -> &ConditionalCovariance {
        &self.sigma_looks[l - 1]
    }

    /// Information fractions at every look.
    ///
    /// `responses` must cover at least the last look (all `n` of them for
    /// [`DenominatorScores::Observed`]). At a look placed at the horizon the
    /// numerator and denominator are the same form and `t = 1`.
    pub fn fractions(
        &self,
        responses: &[f64],
        kind: ScoreKind,
        denominator: DenominatorScores,
        seed: StreamSeed,
    ) -> Result<Vec<InformationFraction>> {
        let horizon = self.schedule.horizon() as usize;
        if responses.len() < horizon {
            return Err(Error::domain(format!(
                "{} responses but the last look is at {horizon}",
                responses.len()
            )));
        }
        let n = self.n as usize;
        let observed_full = match denominator {
            DenominatorScores::Observed => {
                if responses.len() < n {
                    return Err(Error::domain(format!(
                        "observed denominator needs all {n} responses, got {}",
                        responses.len()
                    )));
                }
                Some(centered_scores(&responses[..n], kind)?)
            }
            DenominatorScores::Interpolated { .. } => None,
        };
        self.schedule
            .looks()
            .iter()
            .enumerate()
            .map(|(idx, look)| {
                let l = idx + 1;
                let r = look.r as usize;
                let scores_l = centered_scores(&responses[..r], kind)?;
                let numerator = self.sigma_looks[idx].quadratic_form(scores_l.scores())?;
                if r == n {
                    return fraction_from_forms(l, numerator, numerator);
                }
                let sigma_n = &self.sigma_final[&self.final_counts[idx]];
                match (&observed_full, denominator) {
                    (Some(a_n), _) => {
                        fraction_from_forms(l, numerator, sigma_n.quadratic_form(a_n.scores())?)
                    }
                    (None, DenominatorScores::Interpolated { bootstrap }) => {
                        let completions = interpolate_scores(
                            &responses[..r],
                            n,
                            kind,
                            bootstrap,
                            seed.child(tag::INTERPOLATE, l as u64),
                        )?;
                        information_fraction_averaged(l, &scores_l, &completions, &self.sigma_looks[idx], sigma_n)
                    }
                    (None, DenominatorScores::Observed) => unreachable!("observed scores computed above"),
                }
            })
            .collect()
    }
}
