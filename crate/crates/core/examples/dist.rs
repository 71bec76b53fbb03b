//! Exact law of the treatment-1 count under Efron's biased coin design,
//! unconditionally and given an interim count.

use condrand::exact_dist::{conditional_pmf_exact, conditional_pmf_table, pmf_table};
use condrand::DesignSpec;

fn main() -> condrand::Result<()> {
    let design: DesignSpec = "bcd:2/3".parse()?;
    let n = 10;
    println!("P(N_1({n}) = n_1) under {design}");
    for (n1, p) in pmf_table(&design, n)?.iter().enumerate() {
        println!("  n_1 = {n1:>2}: {p:.6}");
    }

    println!("\nP(N_1({n}) = n_1 | N_1(4) = 3)");
    for (n1, p) in conditional_pmf_table(&design, n, 4, 3)?.iter().enumerate() {
        if *p > 0.0 {
            println!("  n_1 = {n1:>2}: {p:.6}");
        }
    }

    let exact = conditional_pmf_exact(&design, 4, 2, 1, 1)?;
    println!("\nexactly, P(N_1(4) = 2 | N_1(1) = 1) = {exact}");
    Ok(())
}
