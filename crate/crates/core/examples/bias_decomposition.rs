//! Splits the imputation error of the mean into its linear part and the
//! matching bias, then shows how the matching discrepancy shrinks with n
//! for a scalar score versus raw-covariate matching.

use nnimpute::sim::diagnostics::{bias_decomposition, discrepancy_trend, MatchingKind, TREND_SIZES};
use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::survey::{draw_sample, SamplingDesign};
use nnimpute::{fit_matching_model, nearest_neighbor_match, ParameterSpec};

fn main() -> nnimpute::Result<()> {
    let id = PopulationId::P2;
    let pop = generate_population(id, 20_000, 2, false)?;
    let sample = draw_sample(&pop.data, &SamplingDesign::SimpleRandom { n: 800 }, 1)?
        .sample
        .mask_nonrespondents();
    let scores = fit_matching_model(&sample, id.default_basis())?.scores(&sample)?;
    let a = nearest_neighbor_match(&sample, &scores)?;
    let d = bias_decomposition(&pop, &sample, &a, &ParameterSpec::Mean)?;
    println!("D_N {:+.4}  B_N {:+.4}  sum {:+.4}  sqrt(n) error {:+.4}", d.d_n, d.b_n, d.d_n + d.b_n, d.scaled_error);

    for kind in [MatchingKind::Score(id.default_basis()), MatchingKind::Mahalanobis] {
        let t = discrepancy_trend(&pop, kind, &TREND_SIZES, 5, 3)?;
        let means: Vec<String> = t.points.iter().map(|p| format!("{}: {:.4}", p.n, p.mean_discrepancy)).collect();
        println!("{kind:?}: {}  slope {:.2}", means.join("  "), t.discrepancy_slope);
    }
    Ok(())
}
