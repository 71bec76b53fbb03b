//! Command-line surface of the `condrand` binary.
//!
//! Structured results are written as JSON, tabular ones as CSV and sequences
//! as 0/1 strings. Every randomized command reports its effective seed: as a
//! `seed` field in JSON and as a leading `# seed=<s>` line otherwise.
//!
//! Exit codes: 0 success, 2 usage or domain errors, 3 infeasible conditioning
//! or too few Monte Carlo acceptances, 4 I/O and parse errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::covinfo::{DenominatorScores, FinalCount, InformationFraction, InformationPlan};
use crate::design::{DesignSpec, TreatmentSequence};
use crate::error::{Error, Result};
use crate::exact_dist::{conditional_pmf_table, conditional_pmf_table_exact, unconditional_pmf, EXACT_MAX_N};
use crate::io::{read_responses, read_schedule, read_sequences, write_output, ResponseData, ScheduleFile};
use crate::mc::{estimate_pvalue_conditional, estimate_pvalue_rejection, estimate_pvalue_stratified, PValueEstimate};
use crate::monitor::{estimate_boundaries, BoundaryConfig, SpendingFunction, SpendingKind};
use crate::numeric::rational_to_f64;
use crate::oracle::{exact_conditional_pvalue, DP_MAX_N};
use crate::quantile::QuantileMethod;
use crate::ranktest::{centered_scores, linear_rank_statistic, ScoreKind, Stratum, StratifiedData};
use crate::rng::{tag, StreamSeed};
use crate::sampler::{ConditionalSampler, MultiLookSampler};
use crate::tables;

/// Environment variable overriding the default Monte Carlo size.
pub const REPS_ENV: &str = "CONDRAND_REPS";
const DEFAULT_REPS: u64 = 2500;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "condrand", version, about = "Conditional randomization tests under restricted randomization")]
pub struct Cli {
    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact (conditional) distribution of the treatment-1 count N_1(n).
    Dist(DistArgs),
    /// Draw sequences from a conditional or multi-look reference set.
    Sample(SampleArgs),
    /// Conditional randomization p-value of an observed trial.
    Pvalue(PvalueArgs),
    /// Sequential monitoring boundaries from an alpha-spending function.
    Boundaries(BoundaryArgs),
    /// Randomization-based information fractions at each look.
    Info(InfoArgs),
    /// Reproduce the reference tables.
    Tables(TablesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Rational,
    Float,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Direct,
    Rejection,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// `bcd:<p>` or `complete`.
    #[arg(long, value_parser = parse_design)]
    pub design: DesignSpec,
    #[arg(long)]
    pub n: u64,
    /// Condition on N_1(j) = m, written `j:m`.
    #[arg(long, value_parser = parse_given)]
    pub given: Option<(u64, u64)>,
    /// Report only this value of N_1(n).
    #[arg(long)]
    pub target: Option<u64>,
    #[arg(long, value_enum, default_value = "float")]
    pub backend: BackendArg,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_parser = parse_design)]
    pub design: DesignSpec,
    #[arg(long, requires = "n1", conflicts_with = "schedule")]
    pub n: Option<u64>,
    #[arg(long, requires = "n")]
    pub n1: Option<u64>,
    /// Sample from the multi-look reference set of this schedule.
    #[arg(long, required_unless_present = "n")]
    pub schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PvalueArgs {
    #[arg(long, value_parser = parse_design)]
    pub design: DesignSpec,
    #[arg(long)]
    pub responses: PathBuf,
    /// Observed assignments as a 0/1 string; each sequence in the file is
    /// analysed against the same responses.
    #[arg(long)]
    pub assignments: PathBuf,
    /// Monte Carlo size (attempts for the rejection method).
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "direct")]
    pub method: MethodArg,
    /// Sum per-stratum statistics; strata come from the responses' second column.
    #[arg(long, conflicts_with = "exact")]
    pub stratified: bool,
    /// Exact p-value by recursion (n <= 40).
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value = "simple-rank", value_parser = parse_scores)]
    pub scores: ScoreKind,
}

#[derive(Debug, Args)]
pub struct MonitoringArgs {
    #[arg(long, value_parser = parse_design)]
    pub design: DesignSpec,
    /// Look schedule JSON; `n` sets the planned horizon (default: last look).
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, default_value = "simple-rank", value_parser = parse_scores)]
    pub scores: ScoreKind,
    /// Completions used to interpolate the unobserved responses.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    /// Use the observed responses for the final form (needs all n).
    #[arg(long)]
    pub observed: bool,
    /// Known final count N_1(n); projected from each look otherwise.
    #[arg(long)]
    pub final_n1: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub monitoring: MonitoringArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `obf` (O'Brien–Fleming type) or `pocock`.
    #[arg(long, default_value = "obf", value_parser = parse_spending)]
    pub spending: SpendingKind,
    /// Retained sequences per stage, N_c.
    #[arg(long)]
    pub reps: Option<u64>,
    /// `harrell-davis` or `empirical`.
    #[arg(long, default_value = "harrell-davis", value_parser = parse_quantile)]
    pub quantile: QuantileMethod,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub monitoring: MonitoringArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Full,
    Smoke,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub which: u8,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outer repetitions for Tables 2 and 3.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Table 3 configuration.
    #[arg(long, value_enum, default_value = "full")]
    pub scale: ScaleArg,
}

fn parse_design(s: &str) -> std::result::Result<DesignSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scores(s: &str) -> std::result::Result<ScoreKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_spending(s: &str) -> std::result::Result<SpendingKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_quantile(s: &str) -> std::result::Result<QuantileMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_given(s: &str) -> std::result::Result<(u64, u64), String> {
    let (j, m) = s.split_once(':').ok_or_else(|| format!("expected j:m, got '{s}'"))?;
    let j = j.trim().parse().map_err(|_| format!("invalid step '{j}'"))?;
    let m = m.trim().parse().map_err(|_| format!("invalid count '{m}'"))?;
    Ok((j, m))
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::DegenerateScores(_) => EXIT_USAGE,
        Error::Infeasible(_) | Error::InsufficientAcceptances { .. } | Error::UnderSample { .. } => EXIT_INFEASIBLE,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
    }
}

fn effective_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn default_reps(reps: Option<u64>) -> Result<u64> {
    if let Some(r) = reps {
        return Ok(r);
    }
    match std::env::var(REPS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::domain(format!("{REPS_ENV}='{v}' is not a count"))),
        Err(_) => Ok(DEFAULT_REPS),
    }
}

/// Zero-probability conditioning is reported as infeasible (exit 3) before
/// the samplers, which treat it as a domain error, see it.
fn check_feasible(design: &DesignSpec, n: u64, n1: u64) -> Result<()> {
    if n1 <= n && unconditional_pmf(design, n, n1)? == 0.0 {
        return Err(Error::infeasible(format!("N_1({n}) = {n1} has probability zero under {design}")));
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Executes a parsed command and returns its primary output.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Dist(a) => dist(a),
        Command::Sample(a) => sample(a),
        Command::Pvalue(a) => pvalue(a),
        Command::Boundaries(a) => boundaries(a),
        Command::Info(a) => info(a),
        Command::Tables(a) => tables_cmd(a),
    }
}

/// Executes a parsed command line and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let output = execute(&cli.command)?;
    write_output(cli.out.as_deref(), &output)
}

/// Parses `args`, runs, reports errors on standard error and returns the
/// exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("condrand: {e}");
            exit_code(&e)
        }
    }
}

fn dist(a: &DistArgs) -> Result<String> {
    let (j, m) = a.given.unwrap_or((0, 0));
    if let Some(t) = a.target {
        if t > a.n {
            return Err(Error::domain(format!("target {t} exceeds n = {}", a.n)));
        }
    }
    let wanted = |n1: u64| a.target.is_none_or(|t| t == n1);
    let mut out = String::from("n1,probability\n");
    match a.backend {
        BackendArg::Float => {
            for (n1, p) in conditional_pmf_table(&a.design, a.n, j, m)?.iter().enumerate() {
                if wanted(n1 as u64) {
                    out.push_str(&format!("{n1},{p:e}\n"));
                }
            }
        }
        BackendArg::Rational => {
            if a.n > EXACT_MAX_N {
                return Err(Error::domain(format!(
                    "rational backend supports n <= {EXACT_MAX_N}; use --backend float"
                )));
            }
            for (n1, p) in conditional_pmf_table_exact(&a.design, a.n, j, m)?.iter().enumerate() {
                if wanted(n1 as u64) {
                    out.push_str(&format!("{n1},{p}\n"));
                }
            }
        }
    }
    Ok(out)
}

fn sample(a: &SampleArgs) -> Result<String> {
    let seed = effective_seed(a.seed);
    let root = StreamSeed::new(seed);
    let mut out = format!("# seed={seed}\n");
    let mut push = |t: &TreatmentSequence| {
        out.push_str(&t.to_string());
        out.push('\n');
    };
    match (&a.schedule, a.n, a.n1) {
        (Some(path), _, _) => {
            let file = read_schedule(path)?;
            file.schedule.validate_for(&a.design)?;
            let sampler = MultiLookSampler::new(a.design, file.schedule)?;
            for i in 0..a.count {
                push(&sampler.sample(&mut root.stream(tag::SAMPLE, i)));
            }
        }
        (None, Some(n), Some(n1)) => {
            check_feasible(&a.design, n, n1)?;
            let sampler = ConditionalSampler::new(a.design, n, n1)?;
            for i in 0..a.count {
                push(&sampler.sample(&mut root.stream(tag::SAMPLE, i)));
            }
        }
        _ => return Err(Error::domain("give --n and --n1, or --schedule")),
    }
    Ok(out)
}

#[derive(Serialize)]
struct PvalueOutput {
    estimate: f64,
    se: f64,
    n_effective: Option<u64>,
    v_star: f64,
    n: usize,
    n1: u64,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl PvalueOutput {
    fn from_estimate(e: PValueEstimate, v_star: f64, n: usize, n1: u64, seed: u64) -> Self {
        PvalueOutput {
            estimate: e.estimate,
            se: e.standard_error,
            n_effective: Some(e.n_effective),
            v_star,
            n,
            n1,
            method: match e.method {
                crate::mc::EstimatorMethod::DirectConditional => "direct",
                crate::mc::EstimatorMethod::Rejection => "rejection",
            },
            exact: None,
            seed: Some(seed),
        }
    }
}

fn stratified_data(design: &DesignSpec, data: &ResponseData, seq: &TreatmentSequence, kind: ScoreKind) -> Result<(StratifiedData, f64)> {
    if data.strata.is_none() {
        return Err(Error::domain("--stratified needs a stratum column in the responses"));
    }
    let mut strata = Vec::new();
    let mut v_star = 0.0;
    for (_, idx) in data.stratum_positions() {
        let responses: Vec<f64> = idx.iter().map(|&i| data.responses[i]).collect();
        let t = TreatmentSequence::new(idx.iter().map(|&i| seq.assignments()[i]).collect());
        check_feasible(design, t.len() as u64, t.count_ones())?;
        let scores = centered_scores(&responses, kind)?;
        v_star += linear_rank_statistic(&scores, &t)?;
        strata.push(Stratum {
            scores,
            n1: t.count_ones(),
            design: *design,
        });
    }
    Ok((StratifiedData::new(strata)?, v_star))
}

fn pvalue_one(a: &PvalueArgs, data: &ResponseData, seq: &TreatmentSequence, seed: StreamSeed) -> Result<PvalueOutput> {
    let n = data.responses.len();
    if seq.len() != n {
        return Err(Error::domain(format!(
            "{} assignments for {n} responses",
            seq.len()
        )));
    }
    let n1 = seq.count_ones();
    if a.stratified {
        let (strata, v_star) = stratified_data(&a.design, data, seq, a.scores)?;
        let reps = default_reps(a.reps)?;
        let e = estimate_pvalue_stratified(&strata, v_star, reps, seed)?;
        return Ok(PvalueOutput::from_estimate(e, v_star, n, n1, seed.value()));
    }
    check_feasible(&a.design, n as u64, n1)?;
    let scores = centered_scores(&data.responses, a.scores)?;
    let v_star = linear_rank_statistic(&scores, seq)?;
    if a.exact {
        if n > DP_MAX_N {
            return Err(Error::domain(format!(
                "exact p-values are computed for n <= {DP_MAX_N}; got n = {n}"
            )));
        }
        let p = exact_conditional_pvalue(&a.design, &scores, n1, v_star)?;
        return Ok(PvalueOutput {
            estimate: rational_to_f64(&p),
            se: 0.0,
            n_effective: None,
            v_star,
            n,
            n1,
            method: "exact",
            exact: Some(p.to_string()),
            seed: None,
        });
    }
    let reps = default_reps(a.reps)?;
    let e = match a.method {
        MethodArg::Direct => estimate_pvalue_conditional(&a.design, n1, &scores, v_star, reps, seed)?,
        MethodArg::Rejection => estimate_pvalue_rejection(&a.design, n1, &scores, v_star, reps, seed)?,
    };
    Ok(PvalueOutput::from_estimate(e, v_star, n, n1, seed.value()))
}

fn pvalue(a: &PvalueArgs) -> Result<String> {
    let data = read_responses(&a.responses)?;
    let sequences = read_sequences(&a.assignments)?;
    let seed = effective_seed(a.seed);
    let root = StreamSeed::new(seed);
    let outputs = sequences
        .iter()
        .map(|s| pvalue_one(a, &data, s, root))
        .collect::<Result<Vec<_>>>()?;
    Ok(match outputs.as_slice() {
        [one] => to_json(one),
        many => to_json(&many),
    })
}

fn monitoring_inputs(a: &MonitoringArgs) -> Result<(ScheduleFile, Vec<f64>)> {
    let file = read_schedule(&a.schedule)?;
    file.schedule.validate_for(&a.design)?;
    let data = read_responses(&a.responses)?;
    Ok((file, data.responses))
}

fn information(a: &MonitoringArgs, file: &ScheduleFile, responses: &[f64], seed: StreamSeed) -> Result<Vec<InformationFraction>> {
    let final_count = a.final_n1.map_or(FinalCount::Projected, FinalCount::Known);
    let plan = InformationPlan::new(a.design, file.horizon(), file.schedule.clone(), final_count)?;
    let denominator = if a.observed {
        DenominatorScores::Observed
    } else {
        DenominatorScores::Interpolated { bootstrap: a.bootstrap }
    };
    plan.fractions(responses, a.scores, denominator, seed)
}

fn boundaries(a: &BoundaryArgs) -> Result<String> {
    let m = &a.monitoring;
    let (file, responses) = monitoring_inputs(m)?;
    let seed = effective_seed(m.seed);
    let root = StreamSeed::new(seed);
    let fractions = match &file.fractions {
        Some(t) => t.clone(),
        None => information(m, &file, &responses, root)?.iter().map(|f| f.t).collect(),
    };
    let sf = SpendingFunction::new(a.spending, a.alpha)?;
    let config = BoundaryConfig {
        n_c: default_reps(a.reps)?,
        method: a.quantile,
        ..BoundaryConfig::default()
    };
    let result = estimate_boundaries(&m.design, &file.schedule, &responses, m.scores, &sf, &fractions, &config, root)?;
    let mut value = serde_json::to_value(&result).expect("serializable boundaries");
    value["seed"] = json!(seed);
    Ok(to_json(&value))
}

fn info(a: &InfoArgs) -> Result<String> {
    let m = &a.monitoring;
    let (file, responses) = monitoring_inputs(m)?;
    let seed = effective_seed(m.seed);
    let per_look = information(m, &file, &responses, StreamSeed::new(seed))?;
    Ok(to_json(&json!({ "seed": seed, "per_look": per_look })))
}

fn tables_cmd(a: &TablesArgs) -> Result<String> {
    let seed = effective_seed(a.seed);
    Ok(match a.which {
        1 => tables::render_table1(&tables::table1()?),
        2 => {
            let mut config = tables::Table2Config::new(seed);
            if let Some(r) = a.reps {
                config.reps = r;
            }
            format!("# seed={seed}\n{}", tables::render_table2(&tables::table2(&config)?))
        }
        _ => {
            let mut config = match a.scale {
                ScaleArg::Full => tables::Table3Config::full(seed),
                ScaleArg::Smoke => tables::Table3Config::smoke(seed),
            };
            if let Some(r) = a.reps {
                config.reps = r;
            }
            format!("# seed={seed}\n{}", tables::render_table3(&tables::table3(&config)?))
        }
    })
}

/// Path-free convenience for embedding: runs one command and returns its output.
pub fn run_to_string<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::domain(e.to_string()))?;
    let output = execute(&cli.command)?;
    if let Some(p) = cli.out.as_deref() {
        write_output(Some(p), &output)?;
    }
    Ok(output)
}
