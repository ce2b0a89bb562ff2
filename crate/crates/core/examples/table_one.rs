//! Reduced Monte Carlo run of the (P1, SRS) block: 100 replicates.
//!
//! `cargo run --release --example table_one [reps]`

use nnimpute::sim::scenario::{build_population, run_scenario_on, ScenarioConfig};
use nnimpute::sim::{emit_table, table_rows};

fn main() -> nnimpute::Result<()> {
    let reps = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let cfg = ScenarioConfig::default();
    let pop = build_population(&cfg)?;
    let report = run_scenario_on(&cfg, &pop, reps)?;
    print!("{}", emit_table(&table_rows(&report)));
    println!("{reps} replicates in {:.1?}", report.wall_time);
    Ok(())
}
