//! Randomization-based information fractions from exact conditional
//! covariance matrices, with the unobserved responses interpolated by
//! resampling.

use condrand::covinfo::{covariance_final, DenominatorScores, FinalCount, InformationPlan};
use condrand::rng::StreamSeed;
use condrand::tables::{information_check, normal_responses};
use condrand::{DesignSpec, LookSchedule, ScoreKind};

fn main() -> condrand::Result<()> {
    let design = DesignSpec::bcd_ratio(3, 4)?;
    let sigma = covariance_final(&design, 6, 3)?;
    println!("Var(T | N_1(6) = 3) under {design}:");
    for i in 0..sigma.dim() {
        let row: Vec<String> = sigma.row(i).iter().map(|v| format!("{v:+.4}")).collect();
        println!("  {}", row.join(" "));
    }

    let schedule = LookSchedule::from_pairs(&[(250, 126), (300, 148), (350, 174)])?;
    let plan = InformationPlan::new(design, 350, schedule.clone(), FinalCount::Projected)?;
    let responses = normal_responses(StreamSeed::new(3), 0, 350, 1.0, 0.9f64.sqrt());
    let seed = StreamSeed::new(3);
    for f in plan.fractions(&responses, ScoreKind::SimpleRank, DenominatorScores::default(), seed)? {
        println!("look {}: t = {:.4}", f.look, f.t);
    }

    println!("\ninterpolated vs full-data fractions:");
    for c in information_check(&design, &schedule, 0.5, 100, 2010)? {
        println!("  r = {}: {:.4} vs {:.4}", c.r, c.interpolated, c.observed);
    }
    Ok(())
}
