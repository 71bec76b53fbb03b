//! Direct sampling from conditional reference sets.
//!
//! To draw a sequence with `N_1(n) = n_1` the procedure is re-weighted by the
//! ratio of conditional kernels
//!
//! ```text
//! p_{j+1} = φ_{j+1}(m_j) · P(N_1(n) = n_1 | N_1(j+1) = m_j + 1)
//!                        / P(N_1(n) = n_1 | N_1(j) = m_j)
//! ```
//!
//! (Bayes plus the Markov property of `N_1`). With several looks the same rule
//! targets only the next look count, one segment at a time.
//!
//! Kernel values are memoized lazily in a dense per-target table of
//! `OnceLock` cells, so a sampler can be shared read-only across threads.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{DesignSpec, TreatmentSequence};
use crate::error::{Error, Result};
use crate::exact_dist::ln_conditional_unchecked;

/// Tolerance on a transition probability before it is clamped into [0, 1].
const TRANSITION_SLACK: f64 = 1e-9;

/// One interim inspection: after `r` assignments, `n1` were on treatment 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Look {
    pub r: u64,
    pub n1: u64,
}

/// Ordered look positions `r_1 < ... < r_L` with their observed counts.
///
/// The conventions `r_0 = 0`, `n_{10} = 0` are implicit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LookScheduleRepr", into = "LookScheduleRepr")]
pub struct LookSchedule {
    looks: Vec<Look>,
}

#[derive(Serialize, Deserialize)]
struct LookScheduleRepr {
    looks: Vec<Look>,
}

impl TryFrom<LookScheduleRepr> for LookSchedule {
    type Error = Error;
    fn try_from(repr: LookScheduleRepr) -> Result<Self> {
        LookSchedule::new(repr.looks)
    }
}

impl From<LookSchedule> for LookScheduleRepr {
    fn from(s: LookSchedule) -> Self {
        LookScheduleRepr { looks: s.looks }
    }
}

impl LookSchedule {
    pub fn new(looks: Vec<Look>) -> Result<Self> {
        if looks.is_empty() {
            return Err(Error::domain("schedule has no looks"));
        }
        let (mut prev_r, mut prev_n1) = (0u64, 0u64);
        for (l, look) in looks.iter().enumerate() {
            if look.r <= prev_r {
                return Err(Error::domain(format!(
                    "look {}: position {} not after previous position {prev_r}",
                    l + 1,
                    look.r
                )));
            }
            if look.n1 < prev_n1 || look.n1 - prev_n1 > look.r - prev_r {
                return Err(Error::domain(format!(
                    "look {}: count {} unreachable from {prev_n1} in {} steps",
                    l + 1,
                    look.n1,
                    look.r - prev_r
                )));
            }
            prev_r = look.r;
            prev_n1 = look.n1;
        }
        Ok(LookSchedule { looks })
    }

    /// Convenience constructor from `(r, n1)` pairs.
    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(r, n1)| Look { r, n1 }).collect())
    }

    /// Single look at the horizon.
    pub fn single(n: u64, n1: u64) -> Result<Self> {
        Self::from_pairs(&[(n, n1)])
    }

    pub fn looks(&self) -> &[Look] {
        &self.looks
    }

    pub fn len(&self) -> usize {
        self.looks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.looks.is_empty()
    }

    /// Horizon `r_L`.
    pub fn horizon(&self) -> u64 {
        self.looks.last().expect("nonempty").r
    }

    /// Looks `1..=l`.
    pub fn prefix(&self, l: usize) -> Result<LookSchedule> {
        if l == 0 || l > self.looks.len() {
            return Err(Error::domain(format!(
                "look prefix {l} outside 1..={}",
                self.looks.len()
            )));
        }
        Ok(LookSchedule {
            looks: self.looks[..l].to_vec(),
        })
    }

    /// Segment start `(r_{k-1}, n_{1(k-1)})` for 0-based segment `k`.
    pub fn segment_start(&self, k: usize) -> (u64, u64) {
        if k == 0 {
            (0, 0)
        } else {
            let l = self.looks[k - 1];
            (l.r, l.n1)
        }
    }

    /// 0-based segment containing step `j`, i.e. `r_{k-1} <= j < r_k`.
    pub fn segment_of(&self, j: u64) -> Option<usize> {
        self.looks.iter().position(|l| j < l.r)
    }

    /// True when `seq` meets every look constraint.
    pub fn is_satisfied_by(&self, seq: &TreatmentSequence) -> bool {
        seq.len() as u64 >= self.horizon()
            && self
                .looks
                .iter()
                .all(|l| seq.count_ones_through(l.r as usize) == l.n1)
    }

    /// Checks that every segment has positive probability under `design`.
    pub fn validate_for(&self, design: &DesignSpec) -> Result<()> {
        for k in 0..self.looks.len() {
            let (s, ms) = self.segment_start(k);
            let look = self.looks[k];
            if ln_conditional_unchecked(design, look.r, look.n1, s, ms) == f64::NEG_INFINITY {
                return Err(Error::infeasible(format!(
                    "look {} (r = {}, n1 = {}) has probability zero under {design} given the previous look",
                    k + 1,
                    look.r,
                    look.n1
                )));
            }
        }
        Ok(())
    }
}

/// Lazily filled table of `ln P(N_1(end) = target | N_1(j) = m)` for
/// `start <= j <= end`.
#[derive(Debug)]
struct TargetTable {
    design: DesignSpec,
    start: u64,
    end: u64,
    target: u64,
    width: usize,
    cells: Vec<OnceLock<f64>>,
}

impl TargetTable {
    fn new(design: DesignSpec, start: u64, end: u64, target: u64) -> Self {
        let width = end as usize + 1;
        let rows = (end - start) as usize + 1;
        TargetTable {
            design,
            start,
            end,
            target,
            width,
            cells: (0..rows * width).map(|_| OnceLock::new()).collect(),
        }
    }

    #[inline]
    fn ln_kernel(&self, j: u64, m: u64) -> f64 {
        debug_assert!(j >= self.start && j <= self.end && m <= j);
        let idx = (j - self.start) as usize * self.width + m as usize;
        *self.cells[idx].get_or_init(|| {
            ln_conditional_unchecked(&self.design, self.end, self.target, j, m)
        })
    }

    /// Probability that assignment `j + 1` is treatment 1 given `N_1(j) = m`
    /// and the target.
    #[inline]
    fn transition(&self, j: u64, m: u64) -> Result<f64> {
        let den = self.ln_kernel(j, m);
        if den == f64::NEG_INFINITY {
            return Err(Error::infeasible(format!(
                "state N_1({j}) = {m} cannot reach N_1({}) = {}",
                self.end, self.target
            )));
        }
        let phi = self.design.phi(j, m);
        if phi == 0.0 {
            return Ok(0.0);
        }
        let num = self.ln_kernel(j + 1, m + 1);
        let p = phi * (num - den).exp();
        assert!(
            p <= 1.0 + TRANSITION_SLACK,
            "transition probability {p} at N_1({j}) = {m} exceeds 1"
        );
        Ok(p.clamp(0.0, 1.0))
    }

    fn sample_into<R: Rng + ?Sized>(&self, m0: u64, rng: &mut R, out: &mut Vec<bool>) -> Result<u64> {
        let mut m = m0;
        for j in self.start..self.end {
            let p = self.transition(j, m)?;
            let t = rng.random::<f64>() < p;
            m += t as u64;
            out.push(t);
        }
        debug_assert_eq!(m, self.target);
        Ok(m)
    }
}

/// `p_{j+1}` of the conditional rule for target `N_1(n) = n_1`.
pub fn conditional_transition(design: &DesignSpec, n: u64, n1: u64, j: u64, m: u64) -> Result<f64> {
    if j >= n {
        return Err(Error::domain(format!("step j = {j} must be below n = {n}")));
    }
    if m > j || n1 > n {
        return Err(Error::domain(format!("state N_1({j}) = {m} or target {n1} out of range")));
    }
    TargetTable::new(*design, j, n, n1).transition(j, m)
}

/// Reusable sampler for the conditional reference set `{N_1(n) = n_1}`.
#[derive(Debug)]
pub struct ConditionalSampler {
    n: u64,
    n1: u64,
    table: TargetTable,
}

impl ConditionalSampler {
    pub fn new(design: DesignSpec, n: u64, n1: u64) -> Result<Self> {
        if n < 1 || n1 > n {
            return Err(Error::domain(format!("invalid target N_1({n}) = {n1}")));
        }
        let table = TargetTable::new(design, 0, n, n1);
        if table.ln_kernel(0, 0) == f64::NEG_INFINITY {
            return Err(Error::domain(format!(
                "N_1({n}) = {n1} has probability zero under {design}"
            )));
        }
        Ok(ConditionalSampler { n, n1, table })
    }

    pub fn horizon(&self) -> u64 {
        self.n
    }

    pub fn target(&self) -> u64 {
        self.n1
    }

    pub fn transition(&self, j: u64, m: u64) -> Result<f64> {
        self.table.transition(j, m)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TreatmentSequence {
        let mut out = Vec::with_capacity(self.n as usize);
        self.sample_into(rng, &mut out);
        TreatmentSequence::new(out)
    }

    /// Appends one draw to `out` (cleared first).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<bool>) {
        out.clear();
        self.table
            .sample_into(0, rng, out)
            .expect("every reachable state of a feasible target is feasible");
    }
}

/// One draw from `{N_1(n) = n_1}` with law `h(t) = f(t) / P(N_1(n) = n_1)`.
pub fn sample_conditional<R: Rng + ?Sized>(
    design: &DesignSpec,
    n: u64,
    n1: u64,
    rng: &mut R,
) -> Result<TreatmentSequence> {
    Ok(ConditionalSampler::new(*design, n, n1)?.sample(rng))
}

/// Reusable sampler for `∩_l {N_1(r_l) = n_{1l}}`.
#[derive(Debug)]
pub struct MultiLookSampler {
    schedule: LookSchedule,
    segments: Vec<TargetTable>,
}

impl MultiLookSampler {
    pub fn new(design: DesignSpec, schedule: LookSchedule) -> Result<Self> {
        schedule.validate_for(&design).map_err(|e| match e {
            Error::Infeasible(msg) => Error::Domain(msg),
            other => other,
        })?;
        let segments = (0..schedule.len())
            .map(|k| {
                let (s, _) = schedule.segment_start(k);
                let look = schedule.looks()[k];
                TargetTable::new(design, s, look.r, look.n1)
            })
            .collect();
        Ok(MultiLookSampler { schedule, segments })
    }

    pub fn schedule(&self) -> &LookSchedule {
        &self.schedule
    }

    /// `ψ_{j+1}` at state `N_1(j) = m`.
    pub fn transition(&self, j: u64, m: u64) -> Result<f64> {
        let k = self.schedule.segment_of(j).ok_or_else(|| {
            Error::domain(format!("step {j} is at or beyond the last look"))
        })?;
        let (_, ms) = self.schedule.segment_start(k);
        if m < ms || m > j {
            return Err(Error::infeasible(format!(
                "state N_1({j}) = {m} inconsistent with the previous look count {ms}"
            )));
        }
        self.segments[k].transition(j, m)
    }

    /// Draw through look `l` (1-based): the first `r_l` assignments.
    pub fn sample_through_into<R: Rng + ?Sized>(&self, l: usize, rng: &mut R, out: &mut Vec<bool>) {
        assert!(l >= 1 && l <= self.segments.len(), "look {l} out of range");
        out.clear();
        let mut m = 0;
        for seg in &self.segments[..l] {
            m = seg
                .sample_into(m, rng, out)
                .expect("every reachable state of a feasible schedule is feasible");
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TreatmentSequence {
        let mut out = Vec::with_capacity(self.schedule.horizon() as usize);
        self.sample_through_into(self.segments.len(), rng, &mut out);
        TreatmentSequence::new(out)
    }
}

pub fn multilook_transition(
    design: &DesignSpec,
    schedule: &LookSchedule,
    j: u64,
    m: u64,
) -> Result<f64> {
    let k = schedule
        .segment_of(j)
        .ok_or_else(|| Error::domain(format!("step {j} is at or beyond the last look")))?;
    let (s, ms) = schedule.segment_start(k);
    if m < ms || m > j {
        return Err(Error::infeasible(format!(
            "state N_1({j}) = {m} inconsistent with the previous look count {ms}"
        )));
    }
    let look = schedule.looks()[k];
    TargetTable::new(*design, s.min(j), look.r, look.n1).transition(j, m)
}

pub fn sample_multilook<R: Rng + ?Sized>(
    design: &DesignSpec,
    schedule: &LookSchedule,
    rng: &mut R,
) -> Result<TreatmentSequence> {
    Ok(MultiLookSampler::new(*design, schedule.clone())?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::sequence_probability;
    use crate::exact_dist::conditional_pmf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn bcd23() -> DesignSpec {
        DesignSpec::bcd_ratio(2, 3).unwrap()
    }

    #[test]
    fn transition_examples() {
        let c = DesignSpec::complete();
        assert!((conditional_transition(&c, 4, 2, 1, 1).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((conditional_transition(&bcd23(), 4, 2, 1, 1).unwrap() - 0.25).abs() < 1e-14);
        for j in 0..6 {
            assert!((conditional_transition(&bcd23(), 6, 6, j, j).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!(matches!(
            conditional_transition(&bcd23(), 6, 1, 3, 2),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn random_allocation_rule_under_complete() {
        let c = DesignSpec::complete();
        for j in 0..10u64 {
            for m in 0..=j.min(4) {
                if 4 - m <= 10 - j {
                    let p = conditional_transition(&c, 10, 4, j, m).unwrap();
                    let want = (4 - m) as f64 / (10 - j) as f64;
                    assert!((p - want).abs() < 1e-13, "j={j} m={m}");
                }
            }
        }
    }

    #[test]
    fn multilook_examples() {
        let d = bcd23();
        let sched = LookSchedule::from_pairs(&[(2, 1), (4, 2)]).unwrap();
        assert!((multilook_transition(&d, &sched, 2, 1).unwrap() - 0.5).abs() < 1e-14);
        let c = DesignSpec::complete();
        let sampler = MultiLookSampler::new(c, sched.clone()).unwrap();
        for (j, m) in [(0u64, 0u64), (1, 0), (1, 1), (2, 1), (3, 1), (3, 2)] {
            let k = sched.segment_of(j).unwrap();
            let look = sched.looks()[k];
            let want = (look.n1 - m) as f64 / (look.r - j) as f64;
            assert!((sampler.transition(j, m).unwrap() - want).abs() < 1e-13);
        }
        // single look matches the one-target rule
        let single = LookSchedule::single(6, 3).unwrap();
        for j in 0..6u64 {
            for m in 0..=j.min(3) {
                if 3 - m <= 6 - j {
                    let a = multilook_transition(&d, &single, j, m).unwrap();
                    let b = conditional_transition(&d, 6, 3, j, m).unwrap();
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
        assert!(multilook_transition(&d, &sched, 4, 2).is_err());
        assert!(multilook_transition(&d, &sched, 3, 0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(LookSchedule::from_pairs(&[]).is_err());
        assert!(LookSchedule::from_pairs(&[(3, 2), (3, 2)]).is_err());
        assert!(LookSchedule::from_pairs(&[(3, 2), (5, 1)]).is_err());
        assert!(LookSchedule::from_pairs(&[(3, 2), (5, 5)]).is_err());
        let pb = DesignSpec::bcd_ratio(1, 1).unwrap();
        let s = LookSchedule::from_pairs(&[(2, 1), (4, 1)]).unwrap();
        let err = MultiLookSampler::new(pb, s).unwrap_err().to_string();
        assert!(err.contains("look 2"), "{err}");
        let json = r#"{"looks":[{"r":250,"n1":126},{"r":300,"n1":148},{"r":350,"n1":174}]}"#;
        let s: LookSchedule = serde_json::from_str(json).unwrap();
        assert_eq!(s.horizon(), 350);
        assert!(serde_json::from_str::<LookSchedule>(r#"{"looks":[{"r":2,"n1":3}]}"#).is_err());
    }

    #[test]
    fn infeasible_target_rejected() {
        let pb = DesignSpec::bcd_ratio(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_conditional(&pb, 6, 2, &mut rng).is_err());
        assert!(sample_conditional(&pb, 6, 3, &mut rng).is_ok());
    }

    #[test]
    fn constraint_satisfaction() {
        let d = bcd23();
        let sampler = ConditionalSampler::new(d, 6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            assert_eq!(sampler.sample(&mut rng).count_ones(), 3);
        }
        let sched = LookSchedule::from_pairs(&[(2, 1), (4, 2)]).unwrap();
        let ml = MultiLookSampler::new(d, sched.clone()).unwrap();
        for _ in 0..10_000 {
            assert!(sched.is_satisfied_by(&ml.sample(&mut rng)));
        }
    }

    #[test]
    fn conditional_law_n4() {
        let d = bcd23();
        let n = 4;
        let total = conditional_pmf(&d, n, 2, 0, 0).unwrap();
        let sampler = ConditionalSampler::new(d, n, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 1_000_000usize;
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sampler.sample(&mut rng).to_index()).or_default() += 1;
        }
        for idx in 0..16u64 {
            let s = TreatmentSequence::from_index(idx, n as usize);
            if s.count_ones() != 2 {
                assert!(!counts.contains_key(&idx));
                continue;
            }
            let h = sequence_probability(&d, &s) / total;
            let freq = counts.get(&idx).copied().unwrap_or(0) as f64 / draws as f64;
            let se = (h * (1.0 - h) / draws as f64).sqrt();
            assert!((freq - h).abs() < 4.0 * se, "{s}: {freq} vs {h}");
        }
    }

    #[test]
    fn complete_multilook_is_uniform() {
        let c = DesignSpec::complete();
        let sched = LookSchedule::from_pairs(&[(2, 1), (4, 2)]).unwrap();
        let ml = MultiLookSampler::new(c, sched).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 400_000usize;
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(ml.sample(&mut rng).to_index()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        let se = (0.25f64 * 0.75 / draws as f64).sqrt();
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 4.0 * se);
        }
    }

    #[test]
    fn telescoping_path_probability() {
        // Product of ψ over a segment equals ∏φ / P(segment) for every
        // admissible path.
        let d = DesignSpec::bcd_ratio(3, 4).unwrap();
        let sched = LookSchedule::from_pairs(&[(3, 1), (7, 4)]).unwrap();
        let ml = MultiLookSampler::new(d, sched.clone()).unwrap();
        for idx in 0..(1u64 << 7) {
            let s = TreatmentSequence::from_index(idx, 7);
            if !sched.is_satisfied_by(&s) {
                continue;
            }
            let counts = s.running_counts();
            for k in 0..2 {
                let (start, ms) = sched.segment_start(k);
                let look = sched.looks()[k];
                let (mut psi_prod, mut phi_prod) = (1.0, 1.0);
                for j in start..look.r {
                    let m = counts[j as usize];
                    let t = s.assignments()[j as usize];
                    let psi = ml.transition(j, m).unwrap();
                    let phi = d.phi(j, m);
                    psi_prod *= if t { psi } else { 1.0 - psi };
                    phi_prod *= if t { phi } else { 1.0 - phi };
                }
                let seg = conditional_pmf(&d, look.r, look.n1, start, ms).unwrap();
                assert!((psi_prod - phi_prod / seg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transitions_in_unit_interval_at_large_n() {
        let d = DesignSpec::bcd_ratio(3, 4).unwrap();
        let s = ConditionalSampler::new(d, 500, 240).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let t = s.sample(&mut rng);
            assert_eq!(t.count_ones(), 240);
        }
    }
}
