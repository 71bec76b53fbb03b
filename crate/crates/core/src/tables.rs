//! Reproduction harness for the reference tables.
//!
//! - Table 1: 95th percentiles of the unconditional draw count needed for
//!   `N_c = 2500` acceptances, for BCD(2/3) and BCD(3/4);
//! - Table 2: Monte Carlo estimates of an upper 0.1 tail under BCD(0.6) with
//!   their spread over repetitions, against the exact recursion for `n <= 40`;
//! - Table 3: type I error of the sequential conditional test with estimated
//!   boundaries and interpolated information fractions.
//!
//! Tables 2 and 3 generate their own response data from the seed.

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::covinfo::{DenominatorScores, FinalCount, InformationPlan};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::mc::{estimate_pvalue_with_sampler, k_percentile, tie_tolerance};
use crate::monitor::{
    incremental_alpha, look_scores, rejection_rate, estimate_boundaries_with, BoundaryConfig, SpendingFunction,
    SpendingKind,
};
use crate::numeric::rational_to_f64;
use crate::oracle::{exact_statistic_law, DP_MAX_N};
use crate::ranktest::{centered_scores, ScoreKind, ScoreVector};
use crate::rng::{tag, StreamSeed};
use crate::sampler::{ConditionalSampler, LookSchedule, MultiLookSampler};

/// Draw `n` responses from `N(mean, sd)` on substream `index`.
pub fn normal_responses(seed: StreamSeed, index: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let normal = Normal::new(mean, sd).expect("finite normal parameters");
    let mut rng = seed.stream(tag::DATA, index);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- Table 1

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Cell {
    pub design: String,
    pub n: u64,
    pub n1: u64,
    /// Imbalance column `n_1 / n`.
    pub fraction: f64,
    pub k95: u128,
    /// Value printed in the reference table.
    pub reference: f64,
}

impl Table1Cell {
    pub fn relative_error(&self) -> f64 {
        (self.k95 as f64 / self.reference - 1.0).abs()
    }
}

const TABLE1_FRACTIONS: [f64; 3] = [0.45, 0.48, 0.50];
const TABLE1_N: [u64; 3] = [100, 200, 500];

/// Reference values, rows `n = 100, 200, 500`, columns `n_1 = 0.45n, 0.48n, 0.50n`.
const TABLE1_BCD23: [[f64; 3]; 3] = [
    [3_531_344.0, 55_060.0, 5117.0],
    [3_611_280_266.0, 881_557.0, 5117.0],
    [3_877_310e12, 3_611_026_232.0, 5117.0],
];
const TABLE1_BCD34: [[f64; 3]; 3] = [
    [114_384_212.0, 156_865.0, 3822.0],
    [6_754_269e6, 12_709_307.0, 3822.0],
    [1_390_644e21, 6_754_269e6, 3822.0],
];

/// Table 1 grid: `N_c = 2500`, level 0.95.
pub fn table1() -> Result<Vec<Table1Cell>> {
    let designs = [
        (DesignSpec::bcd_ratio(2, 3)?, &TABLE1_BCD23),
        (DesignSpec::bcd_ratio(3, 4)?, &TABLE1_BCD34),
    ];
    let mut cells = Vec::new();
    for (design, reference) in designs {
        for (i, &n) in TABLE1_N.iter().enumerate() {
            for (c, &fraction) in TABLE1_FRACTIONS.iter().enumerate() {
                let n1 = (fraction * n as f64).round() as u64;
                cells.push(Table1Cell {
                    design: design.to_string(),
                    n,
                    n1,
                    fraction,
                    k95: k_percentile(&design, n, n1, 2500, 0.95)?,
                    reference: reference[i][c],
                });
            }
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------- Table 2

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table2Config {
    /// Monte Carlo repetitions per row.
    pub reps: usize,
    pub n_c: u64,
    /// Target upper tail for `v*`.
    pub tail: f64,
    /// `(n, n_1)` rows.
    pub rows: Vec<(u64, u64)>,
    /// Conditional draws used to place `v*` when no exact law is available.
    pub pilot_draws: u64,
    pub seed: u64,
}

impl Table2Config {
    pub fn new(seed: u64) -> Self {
        Table2Config {
            reps: 200,
            n_c: 2500,
            tail: 0.1,
            rows: vec![
                (30, 15),
                (30, 12),
                (40, 20),
                (40, 16),
                (100, 50),
                (100, 40),
                (500, 250),
                (500, 200),
            ],
            pilot_draws: 100_000,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table2Row {
    pub n: u64,
    pub n1: u64,
    pub v_star: f64,
    /// Exact `P(V >= v*)` from the recursion, when `n <= 40`.
    pub exact: Option<f64>,
    /// Pilot estimate of the tail when no exact value exists.
    pub pilot: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
}

impl Table2Row {
    /// Exact value when available, else the pilot estimate.
    pub fn reference(&self) -> f64 {
        self.exact.or(self.pilot).unwrap_or(f64::NAN)
    }
}

/// `v*` near the target tail: from the exact law when it is available,
/// otherwise from a large pilot sample.
fn place_v_star(
    design: &DesignSpec,
    sampler: &ConditionalSampler,
    scores: &ScoreVector,
    n1: u64,
    config: &Table2Config,
    seed: StreamSeed,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    if scores.len() <= DP_MAX_N {
        let law = exact_statistic_law(design, scores, n1)?;
        let (v, p) = law
            .support
            .iter()
            .map(|(v, _)| (*v, rational_to_f64(&law.upper_tail(*v))))
            .min_by(|a, b| (a.1 - config.tail).abs().total_cmp(&(b.1 - config.tail).abs()))
            .expect("nonempty support");
        return Ok((v, Some(p), None));
    }
    let mut buf = Vec::new();
    let mut values: Vec<f64> = (0..config.pilot_draws)
        .map(|k| {
            sampler.sample_into(&mut seed.stream(tag::SAMPLE, k), &mut buf);
            scores.dot(&buf)
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let v = values[(config.tail * values.len() as f64) as usize];
    let threshold = v - tie_tolerance(scores);
    let tail = values.iter().filter(|&&x| x >= threshold).count() as f64 / values.len() as f64;
    Ok((v, None, Some(tail)))
}

/// Table 2 under BCD(0.6) with simple rank scores of `N(0, 1)` responses.
pub fn table2(config: &Table2Config) -> Result<Vec<Table2Row>> {
    if config.reps < 2 {
        return Err(Error::domain("Table 2 needs at least two repetitions"));
    }
    let design = DesignSpec::bcd_ratio(3, 5)?;
    let root = StreamSeed::new(config.seed);
    config
        .rows
        .iter()
        .enumerate()
        .map(|(row, &(n, n1))| {
            let row_seed = root.child(tag::STUDY, row as u64);
            let responses = normal_responses(row_seed, 0, n as usize, 0.0, 1.0);
            let scores = centered_scores(&responses, ScoreKind::SimpleRank)?;
            let sampler = ConditionalSampler::new(design, n, n1)?;
            let (v_star, exact, pilot) = place_v_star(&design, &sampler, &scores, n1, config, row_seed)?;
            let estimates = (0..config.reps)
                .map(|k| {
                    let seed = row_seed.child(tag::PVALUE, k as u64);
                    Ok(estimate_pvalue_with_sampler(&sampler, &scores, v_star, config.n_c, seed)?.estimate)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, sd) = mean_sd(&estimates);
            Ok(Table2Row {
                n,
                n1,
                v_star,
                exact,
                pilot,
                mean,
                sd,
                reps: config.reps,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- Table 3

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table3Config {
    pub design: DesignSpec,
    pub n: u64,
    pub schedule: LookSchedule,
    pub alpha: f64,
    pub spending: SpendingKind,
    pub n_c: u64,
    /// Outer replications, each with fresh data, boundaries and evaluation.
    pub reps: usize,
    pub bootstrap: usize,
    /// Response distribution `N(mean, sd)`, shared by both arms.
    pub response_mean: f64,
    pub response_sd: f64,
    pub seed: u64,
}

impl Table3Config {
    /// The reference configuration: `n = 350`, BCD(3/4), looks at 250, 300, 350.
    pub fn full(seed: u64) -> Self {
        Table3Config {
            design: DesignSpec::bcd_ratio(3, 4).expect("valid design"),
            n: 350,
            schedule: LookSchedule::from_pairs(&[(250, 126), (300, 148), (350, 174)]).expect("valid schedule"),
            alpha: 0.05,
            spending: SpendingKind::OBrienFlemingType,
            n_c: 2500,
            reps: 1000,
            bootstrap: 100,
            response_mean: 1.0,
            response_sd: 0.9f64.sqrt(),
            seed,
        }
    }

    /// Desk-scale variant: `n = 100`, looks at 70, 85, 100, 200 replications.
    pub fn smoke(seed: u64) -> Self {
        Table3Config {
            n: 100,
            schedule: LookSchedule::from_pairs(&[(70, 35), (85, 42), (100, 50)]).expect("valid schedule"),
            reps: 200,
            ..Table3Config::full(seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table3Look {
    pub r: u64,
    pub n1: u64,
    /// Means over replications.
    pub t: f64,
    pub alpha_l: f64,
    pub d: f64,
    /// Share of replications whose boundary at this look is finite.
    pub finite_d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table3Report {
    pub looks: Vec<Table3Look>,
    /// Mean and SD over replications of the conditional type I error.
    pub alpha_hat: f64,
    pub alpha_sd: f64,
    pub reps: usize,
}

/// Runs the full pipeline: information fractions from interpolated data,
/// spending, staged boundary estimation, and evaluation of the resulting
/// sequential test on an independent batch of `N_c` conditional sequences.
pub fn table3(config: &Table3Config) -> Result<Table3Report> {
    if config.reps < 2 {
        return Err(Error::domain("Table 3 needs at least two replications"));
    }
    let sf = SpendingFunction::new(config.spending, config.alpha)?;
    let plan = InformationPlan::new(config.design, config.n, config.schedule.clone(), FinalCount::Projected)?;
    let sampler = MultiLookSampler::new(config.design, config.schedule.clone())?;
    let bounds_config = BoundaryConfig {
        n_c: config.n_c,
        ..BoundaryConfig::default()
    };
    let looks = config.schedule.len();
    let root = StreamSeed::new(config.seed);
    let mut t_sum = vec![0.0; looks];
    let mut a_sum = vec![0.0; looks];
    let mut d_sum = vec![0.0; looks];
    let mut d_finite = vec![0usize; looks];
    let mut alpha_hat = Vec::with_capacity(config.reps);
    for k in 0..config.reps {
        let rep = root.child(tag::STUDY, k as u64);
        let responses = normal_responses(rep, 0, config.n as usize, config.response_mean, config.response_sd);
        let fractions: Vec<f64> = plan
            .fractions(
                &responses,
                ScoreKind::SimpleRank,
                DenominatorScores::Interpolated {
                    bootstrap: config.bootstrap,
                },
                rep,
            )?
            .iter()
            .map(|f| f.t)
            .collect();
        let alphas = incremental_alpha(&sf, &fractions)?;
        let scores = look_scores(&config.schedule, &responses, ScoreKind::SimpleRank)?;
        let bounds = estimate_boundaries_with(&sampler, &scores, &alphas, &bounds_config, rep)?;
        let rate = rejection_rate(&sampler, &scores, &bounds.d, config.n_c, rep)?;
        alpha_hat.push(rate.overall);
        for l in 0..looks {
            t_sum[l] += fractions[l];
            a_sum[l] += alphas[l];
            if bounds.d[l].is_finite() {
                d_sum[l] += bounds.d[l];
                d_finite[l] += 1;
            }
        }
    }
    let reps = config.reps as f64;
    let (alpha_hat_mean, alpha_sd) = mean_sd(&alpha_hat);
    Ok(Table3Report {
        looks: config
            .schedule
            .looks()
            .iter()
            .enumerate()
            .map(|(l, look)| Table3Look {
                r: look.r,
                n1: look.n1,
                t: t_sum[l] / reps,
                alpha_l: a_sum[l] / reps,
                d: if d_finite[l] > 0 { d_sum[l] / d_finite[l] as f64 } else { f64::INFINITY },
                finite_d: d_finite[l] as f64 / reps,
            })
            .collect(),
        alpha_hat: alpha_hat_mean,
        alpha_sd,
        reps: config.reps,
    })
}

// ---------------------------------------------- information-fraction check

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InformationCheck {
    pub r: u64,
    pub n1: u64,
    /// Interim fraction from bootstrap-completed responses.
    pub interpolated: f64,
    /// Fraction with the complete responses and final count known.
    pub observed: f64,
}

/// Interpolated versus full-data information fractions for one simulated
/// trial: assignments drawn from the multi-look reference set of `schedule`,
/// responses `N(0, 1)` on treatment 0 and `N(shift, 1)` on treatment 1.
pub fn information_check(
    design: &DesignSpec,
    schedule: &LookSchedule,
    shift: f64,
    bootstrap: usize,
    seed: u64,
) -> Result<Vec<InformationCheck>> {
    let root = StreamSeed::new(seed);
    let n = schedule.horizon();
    let sampler = MultiLookSampler::new(*design, schedule.clone())?;
    let assignments = sampler.sample(&mut root.stream(tag::SAMPLE, 0));
    let noise = normal_responses(root, 0, n as usize, 0.0, 1.0);
    let responses: Vec<f64> = noise
        .iter()
        .zip(assignments.assignments())
        .map(|(e, &t)| if t { e + shift } else { *e })
        .collect();
    let interim = InformationPlan::new(*design, n, schedule.clone(), FinalCount::Projected)?;
    let known = InformationPlan::new(*design, n, schedule.clone(), FinalCount::Known(assignments.count_ones()))?;
    let interpolated = interim.fractions(
        &responses,
        ScoreKind::SimpleRank,
        DenominatorScores::Interpolated { bootstrap },
        root,
    )?;
    let observed = known.fractions(&responses, ScoreKind::SimpleRank, DenominatorScores::Observed, root)?;
    Ok(schedule
        .looks()
        .iter()
        .zip(interpolated.iter().zip(&observed))
        .map(|(look, (i, o))| InformationCheck {
            r: look.r,
            n1: look.n1,
            interpolated: i.t,
            observed: o.t,
        })
        .collect())
}

// ---------------------------------------------------------------- rendering

fn fmt_count(k: u128) -> String {
    let s = k.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn render_table1(cells: &[Table1Cell]) -> String {
    let mut out = String::from("design,n,n1,fraction,k95,reference,relative_error\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{:.2},{},{:.6e},{:.2e}\n",
            c.design,
            c.n,
            c.n1,
            c.fraction,
            c.k95,
            c.reference,
            c.relative_error()
        ));
    }
    out
}

/// Table 1 in the layout of the reference table.
pub fn render_table1_grid(cells: &[Table1Cell]) -> String {
    let mut out = String::new();
    for chunk in cells.chunks(TABLE1_N.len() * TABLE1_FRACTIONS.len()) {
        out.push_str(&format!("{}\n{:>5} {:>30} {:>30} {:>10}\n", chunk[0].design, "n", "0.45n", "0.48n", "0.50n"));
        for row in chunk.chunks(TABLE1_FRACTIONS.len()) {
            out.push_str(&format!(
                "{:>5} {:>30} {:>30} {:>10}\n",
                row[0].n,
                fmt_count(row[0].k95),
                fmt_count(row[1].k95),
                fmt_count(row[2].k95)
            ));
        }
    }
    out
}

pub fn render_table2(rows: &[Table2Row]) -> String {
    let mut out = String::from("n,n1,v_star,exact,pilot,mean,sd,reps\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.4},{:.4},{}\n",
            r.n,
            r.n1,
            r.v_star,
            opt(r.exact),
            opt(r.pilot),
            r.mean,
            r.sd,
            r.reps
        ));
    }
    out
}

pub fn render_table3(report: &Table3Report) -> String {
    let mut out = String::from("look,r,n1,t,alpha_l,d,alpha_hat,sd\n");
    let last = report.looks.len();
    for (l, look) in report.looks.iter().enumerate() {
        let tail = if l + 1 == last {
            format!("{:.4},{:.4}", report.alpha_hat, report.alpha_sd)
        } else {
            ",".to_string()
        };
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.1},{}\n",
            l + 1,
            look.r,
            look.n1,
            look.t,
            look.alpha_l,
            look.d,
            tail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_grid_shape() {
        let cells = table1().unwrap();
        assert_eq!(cells.len(), 18);
        assert_eq!(cells[2].k95, 5117);
        assert_eq!(cells[11].k95, 3822);
        let grid = render_table1_grid(&cells);
        assert!(grid.contains("5,117"), "{grid}");
    }

    #[test]
    fn count_formatting() {
        assert_eq!(fmt_count(5117), "5,117");
        assert_eq!(fmt_count(3_531_344), "3,531,344");
        assert_eq!(fmt_count(12), "12");
    }

    #[test]
    fn small_table2_row() {
        let config = Table2Config {
            reps: 20,
            n_c: 500,
            rows: vec![(20, 10)],
            ..Table2Config::new(3)
        };
        let rows = table2(&config).unwrap();
        let r = &rows[0];
        let exact = r.exact.unwrap();
        assert!((exact - 0.1).abs() < 0.05, "{exact}");
        // mean of 20 estimates: SE about sqrt(0.09 / 500 / 20) = 0.003
        assert!((r.mean - exact).abs() < 0.015, "{r:?}");
        assert_eq!(r, &table2(&config).unwrap()[0]);
    }

    #[test]
    fn tiny_table3() {
        let config = Table3Config {
            n: 40,
            schedule: LookSchedule::from_pairs(&[(20, 10), (30, 15), (40, 20)]).unwrap(),
            reps: 4,
            n_c: 400,
            bootstrap: 10,
            ..Table3Config::full(5)
        };
        let report = table3(&config).unwrap();
        assert_eq!(report.looks.len(), 3);
        assert_eq!(report.looks[2].t, 1.0);
        assert!(report.alpha_hat > 0.0 && report.alpha_hat < 0.15, "{report:?}");
    }
}
