//! Writes a sample to CSV, reads it back and runs the estimation pipeline.

use nnimpute::io::{estimate, read_sample_csv, write_sample_csv, EstimateConfig};
use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::survey::{draw_sample, SamplingDesign};
use nnimpute::variance::VarianceMethod;
use nnimpute::Basis;

fn main() -> nnimpute::Result<()> {
    let pop = generate_population(PopulationId::P1, 10_000, 8, false)?;
    let sample = draw_sample(&pop.data, &SamplingDesign::SimpleRandom { n: 300 }, 2)?
        .sample
        .mask_nonrespondents();
    let text = write_sample_csv(&sample);
    println!("{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));

    let data = read_sample_csv(&text, pop.size())?;
    let cfg = EstimateConfig {
        population_size: pop.size(),
        targets: vec!["mean".into(), format!("proportion_below:{}", pop.threshold), "median".into()],
        basis: Basis::FirstAndSecondOrder,
        methods: vec![VarianceMethod::Proposed, VarianceMethod::Naive],
        ..EstimateConfig::default()
    };
    let out = estimate(&data, &cfg)?;
    print!("\n{}", out.report_csv());
    Ok(())
}
