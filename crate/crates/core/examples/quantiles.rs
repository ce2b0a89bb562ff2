//! Imputed quantiles across levels, with the estimating function around the median.

use nnimpute::estimators::nni_estimating_function;
use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::survey::{draw_sample, SamplingDesign};
use nnimpute::{fit_matching_model, nearest_neighbor_match, nni_estimate, Basis, ParameterSpec};

fn main() -> nnimpute::Result<()> {
    let pop = generate_population(PopulationId::P1, 50_000, 1, false)?;
    let sample = draw_sample(&pop.data, &SamplingDesign::SimpleRandom { n: 800 }, 9)?
        .sample
        .mask_nonrespondents();
    let scores = fit_matching_model(&sample, Basis::FirstAndSecondOrder)?.scores(&sample)?;
    let a = nearest_neighbor_match(&sample, &scores)?;

    println!("population median {:.4}", pop.median);
    for alpha in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let q = nni_estimate(&sample, &a, &ParameterSpec::quantile(alpha)?)?.value;
        println!("alpha {alpha:.2}  xi_hat {q:.4}");
    }
    let med = nni_estimate(&sample, &a, &ParameterSpec::quantile(0.5)?)?.value;
    for d in [-0.1, -0.01, 0.0, 0.01, 0.1] {
        let s = nni_estimating_function(&sample, &a, 0.5, med + d)?;
        println!("S({:+.2}) = {s:+.4}", d);
    }
    Ok(())
}
