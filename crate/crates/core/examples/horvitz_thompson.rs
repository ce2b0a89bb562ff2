//! Horvitz-Thompson and Hajek means on a Poisson PPS sample.

use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::survey::{draw_sample, hajek_estimate, ht_estimate, SamplingDesign};

fn main() -> nnimpute::Result<()> {
    let pop = generate_population(PopulationId::P1, 20_000, 3, true)?;
    let design = SamplingDesign::PoissonPps {
        expected_size: 400.0,
        sizes: pop.sizes.clone(),
    };
    let drawn = draw_sample(&pop.data, &design, 42)?;
    let s = &drawn.sample;
    println!("population mean      {:.4}", pop.mean);
    println!("sample size          {} (clipped {})", s.len(), drawn.clipped);
    println!("N_hat = sum 1/pi     {:.1}", s.estimated_population_size());
    println!("Horvitz-Thompson     {:.4}", ht_estimate(s, |y| y)?);
    println!("Hajek                {:.4}", hajek_estimate(s, |y| y)?);
    println!("HT share below c     {:.4}", ht_estimate(s, |y| f64::from(u8::from(y < pop.threshold)))?);
    Ok(())
}
