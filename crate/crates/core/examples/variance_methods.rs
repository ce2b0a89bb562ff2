//! Proposed linearized jackknife against the naive jackknife that
//! re-imputes inside every replicate, on one sample.

use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::survey::{draw_sample, SamplingDesign};
use nnimpute::{
    fit_matching_model, naive_variance, nearest_neighbor_match, proposed_variance, Basis, KernelConfig, ParameterSpec,
    ReplicationScheme,
};

fn main() -> nnimpute::Result<()> {
    let pop = generate_population(PopulationId::P1, 50_000, 1, false)?;
    let sample = draw_sample(&pop.data, &SamplingDesign::SimpleRandom { n: 800 }, 5)?
        .sample
        .mask_nonrespondents();
    let basis = Basis::FirstAndSecondOrder;
    let scores = fit_matching_model(&sample, basis)?.scores(&sample)?;
    let a = nearest_neighbor_match(&sample, &scores)?;
    let scheme = ReplicationScheme::jackknife(sample.design_weights().as_slice())?;
    let kernel = KernelConfig::rule_of_thumb(sample.len(), 1.5)?;

    let targets = [
        ("mu", ParameterSpec::Mean, pop.mean),
        ("eta", ParameterSpec::ProportionBelow { threshold: pop.threshold }, pop.proportion),
        ("xi", ParameterSpec::quantile(0.5)?, pop.median),
    ];
    println!("{:<4} {:>9} {:>9} {:>11} {:>11}", "", "truth", "point", "proposed", "naive");
    for (name, spec, truth) in targets {
        let p = proposed_variance(&sample, &a, &scores, &spec, &scheme, kernel)?;
        let n = naive_variance(&sample, basis, &spec, &scheme)?;
        println!("{name:<4} {truth:>9.4} {:>9.4} {:>11.3e} {:>11.3e}", p.point, p.variance, n.variance);
    }
    Ok(())
}
