//! Reproduces Table 1 and the desk-scale variant of Table 3.

use condrand::tables::{render_table1_grid, render_table3, table1, table3, Table3Config};

fn main() -> condrand::Result<()> {
    println!("95th percentile of K, N_c = 2500\n{}", render_table1_grid(&table1()?));
    let config = Table3Config {
        reps: 50,
        ..Table3Config::smoke(1)
    };
    println!("sequential test, n = {}, {} replications:", config.n, config.reps);
    print!("{}", render_table3(&table3(&config)?));
    Ok(())
}
