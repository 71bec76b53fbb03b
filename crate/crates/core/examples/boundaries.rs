//! Sequential monitoring: spending-function levels, Monte Carlo boundaries
//! and the resulting decision for one simulated trial.

use condrand::monitor::{
    estimate_boundaries, incremental_alpha, look_scores, sequential_decision, BoundaryConfig, SpendingFunction,
};
use condrand::rng::{tag, StreamSeed};
use condrand::sampler::MultiLookSampler;
use condrand::tables::normal_responses;
use condrand::{DesignSpec, LookSchedule, ScoreKind};

fn main() -> condrand::Result<()> {
    let design = DesignSpec::bcd_ratio(3, 4)?;
    let seed = StreamSeed::new(7);
    let sf = SpendingFunction::obrien_fleming(0.05)?;
    let t = [0.3617, 0.6248, 1.0];
    println!("incremental levels at t = {t:?}: {:?}", incremental_alpha(&sf, &t)?);

    let schedule = LookSchedule::from_pairs(&[(100, 51), (150, 74), (200, 100)])?;
    let assignments = MultiLookSampler::new(design, schedule.clone())?.sample(&mut seed.stream(tag::SAMPLE, 0));
    let responses: Vec<f64> = normal_responses(seed, 0, 200, 0.0, 1.0)
        .iter()
        .zip(assignments.assignments())
        .map(|(y, &a)| if a { y + 0.5 } else { *y })
        .collect();

    let bounds = estimate_boundaries(
        &design,
        &schedule,
        &responses,
        ScoreKind::SimpleRank,
        &sf,
        &[0.5, 0.75, 1.0],
        &BoundaryConfig::default(),
        seed,
    )?;
    println!("boundaries d = {:?}", bounds.d);
    println!("retained per stage {:?} of {:?} drawn", bounds.n_used, bounds.n_drawn);

    let observed: Vec<f64> = look_scores(&schedule, &responses, ScoreKind::SimpleRank)?
        .iter()
        .zip(schedule.looks())
        .map(|(a, look)| a.dot(&assignments.assignments()[..look.r as usize]))
        .collect();
    println!("observed V = {observed:?}");
    println!("decision: {:?}", sequential_decision(&observed, &bounds)?);
    Ok(())
}
