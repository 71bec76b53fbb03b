//! Conditional randomization p-value of a linear rank test: Monte Carlo
//! (direct and rejection sampling) against the exact recursion.

use condrand::mc::{estimate_pvalue_conditional, estimate_pvalue_rejection, mc_sample_size};
use condrand::numeric::rational_to_f64;
use condrand::oracle::exact_conditional_pvalue;
use condrand::ranktest::{centered_scores, linear_rank_statistic};
use condrand::rng::{tag, StreamSeed};
use condrand::sampler::ConditionalSampler;
use condrand::tables::normal_responses;
use condrand::{DesignSpec, ScoreKind};

fn main() -> condrand::Result<()> {
    let design = DesignSpec::bcd_ratio(2, 3)?;
    let seed = StreamSeed::new(7);
    let (n, n1) = (24u64, 12u64);

    // one observed trial
    let observed = ConditionalSampler::new(design, n, n1)?.sample(&mut seed.stream(tag::SAMPLE, 0));
    let responses: Vec<f64> = normal_responses(seed, 0, n as usize, 0.0, 1.0)
        .iter()
        .zip(observed.assignments())
        .map(|(y, &t)| if t { y + 0.8 } else { *y })
        .collect();
    let scores = centered_scores(&responses, ScoreKind::SimpleRank)?;
    let v_star = linear_rank_statistic(&scores, &observed)?;
    println!("assignments {observed}, V = {v_star}");

    let exact = exact_conditional_pvalue(&design, &scores, n1, v_star)?;
    println!("exact        p = {:.5}", rational_to_f64(&exact));
    let direct = estimate_pvalue_conditional(&design, n1, &scores, v_star, 2500, seed)?;
    println!("direct       p = {:.5} (SE {:.5}, {} draws)", direct.estimate, direct.standard_error, direct.n_effective);
    let rejection = estimate_pvalue_rejection(&design, n1, &scores, v_star, 20_000, seed)?;
    println!(
        "rejection    p = {:.5} (SE {:.5}, {} of 20000 draws accepted)",
        rejection.estimate, rejection.standard_error, rejection.n_effective
    );
    println!("\nN_c for 10% relative error at p = 0.04, 99%: {}", mc_sample_size(0.04, 0.1, 0.99)?);
    Ok(())
}
