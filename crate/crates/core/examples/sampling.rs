//! Direct sampling from a conditional reference set and from the multi-look
//! reference set of an interim schedule.

use condrand::rng::{tag, StreamSeed};
use condrand::sampler::{ConditionalSampler, MultiLookSampler};
use condrand::{DesignSpec, LookSchedule};

fn main() -> condrand::Result<()> {
    let design = DesignSpec::bcd_ratio(3, 5)?;
    let seed = StreamSeed::new(42);

    let sampler = ConditionalSampler::new(design, 30, 15)?;
    println!("sequences with N_1(30) = 15 under {design}:");
    for i in 0..3 {
        println!("  {}", sampler.sample(&mut seed.stream(tag::SAMPLE, i)));
    }

    let schedule = LookSchedule::from_pairs(&[(10, 6), (20, 9), (30, 15)])?;
    let sampler = MultiLookSampler::new(design, schedule.clone())?;
    println!("\nsequences through looks {:?}:", schedule.looks());
    for i in 0..3 {
        let t = sampler.sample(&mut seed.stream(tag::SAMPLE, i));
        assert!(schedule.is_satisfied_by(&t));
        println!("  {t}");
    }
    Ok(())
}
