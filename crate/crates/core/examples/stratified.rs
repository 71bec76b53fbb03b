//! Stratified conditional test: each stratum is randomized separately and
//! the statistic is the sum of the per-stratum rank statistics.

use condrand::mc::estimate_pvalue_stratified;
use condrand::ranktest::{centered_scores, stratified_statistic, StratifiedData, Stratum};
use condrand::rng::{tag, StreamSeed};
use condrand::sampler::ConditionalSampler;
use condrand::tables::normal_responses;
use condrand::{DesignSpec, ScoreKind};

fn main() -> condrand::Result<()> {
    let design = DesignSpec::bcd_ratio(2, 3)?;
    let seed = StreamSeed::new(11);
    let sizes = [(20u64, 10u64), (15, 8), (25, 12)];
    let mut strata = Vec::new();
    let mut observed = Vec::new();
    for (s, &(n, n1)) in sizes.iter().enumerate() {
        let t = ConditionalSampler::new(design, n, n1)?.sample(&mut seed.stream(tag::SAMPLE, s as u64));
        let responses: Vec<f64> = normal_responses(seed, s as u64, n as usize, s as f64, 1.0)
            .iter()
            .zip(t.assignments())
            .map(|(y, &a)| if a { y + 0.5 } else { *y })
            .collect();
        strata.push(Stratum {
            scores: centered_scores(&responses, ScoreKind::SimpleRank)?,
            n1,
            design,
        });
        observed.push(t);
    }
    let data = StratifiedData::new(strata)?;
    let v_star = stratified_statistic(&data, &observed)?;
    let p = estimate_pvalue_stratified(&data, v_star, 5000, seed)?;
    println!("stratified V = {v_star}, p = {:.4} (SE {:.4})", p.estimate, p.standard_error);
    Ok(())
}
