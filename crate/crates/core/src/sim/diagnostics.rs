//! Splitting the imputation error into its variance and matching-bias parts
//! using the known population model.
//!
//! With `mu(x)` the true conditional mean of `g(y)`,
//!
//! ```text
//! D_N = sqrt(n) [ N^-1 sum pi_i^-1 { mu(x_i) + delta_i (1 + k_i)(g_i - mu(x_i)) } - mu_g ]
//! B_N = sqrt(n) N^-1 sum pi_i^-1 (1 - delta_i) { mu(x_donor(i)) - mu(x_i) }
//! ```
//!
//! and `D_N + B_N = sqrt(n) (mu_hat - mu_g)` exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{nni_mean_estimate, ParameterSpec};
use crate::matching::{
    fit_matching_model, mahalanobis_match, matching_discrepancy, nearest_neighbor_match, Basis, Discrepancy,
    MatchAssignment,
};
use crate::survey::{draw_sample_with, SamplingDesign, SurveyDataset};

use super::population::Population;
use super::scenario::replicate_rng;

/// Sample sizes of the matching-discrepancy trend.
pub const TREND_SIZES: [usize; 3] = [200, 800, 3_200];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasDecomposition {
    pub d_n: f64,
    pub b_n: f64,
    /// `sqrt(n) (mu_hat - mu_g)`.
    pub scaled_error: f64,
    pub estimate: f64,
    pub truth: f64,
    pub sample_size: usize,
}

impl BiasDecomposition {
    /// `|D_N + B_N - sqrt(n)(mu_hat - mu_g)|`.
    pub fn identity_gap(&self) -> f64 {
        (self.d_n + self.b_n - self.scaled_error).abs()
    }
}

/// Computes `D_N` and `B_N` for the mean or a `y < c` proportion on one
/// sample drawn from `population`.
pub fn bias_decomposition(
    population: &Population,
    sample: &SurveyDataset,
    assignment: &MatchAssignment,
    spec: &ParameterSpec,
) -> Result<BiasDecomposition> {
    let indicator = match spec {
        ParameterSpec::Mean => None,
        ParameterSpec::ProportionBelow { threshold } => Some(*threshold),
        _ => {
            return Err(Error::InvalidParameter(
                "bias decomposition needs the mean or a proportion".into(),
            ))
        }
    };
    let truth = population.outcomes().map(|y| spec.g(y).expect("mean-type")).sum::<f64>() / population.size() as f64;
    let estimate = nni_mean_estimate(sample, assignment, spec)?.value;
    let big_n = sample.population_size() as f64;
    let n = sample.len();
    let root_n = (n as f64).sqrt();
    let units = sample.units();
    let mu: Vec<f64> = units
        .iter()
        .map(|u| population.conditional_mean_of(&u.covariates, indicator))
        .collect();
    let k = assignment.multiplicity();
    let mut d = 0.0;
    let mut b = 0.0;
    for (i, u) in units.iter().enumerate() {
        let w = 1.0 / u.inclusion_prob;
        if u.responded {
            let g = spec.g(u.outcome.expect("respondent outcome")).expect("mean-type");
            d += w * (mu[i] + (1.0 + k[i]) * (g - mu[i]));
        } else {
            d += w * mu[i];
            let donor = assignment.donor_of(i).expect("nonrespondent has a donor");
            b += w * (mu[donor] - mu[i]);
        }
    }
    Ok(BiasDecomposition {
        d_n: root_n * (d / big_n - truth),
        b_n: root_n * b / big_n,
        scaled_error: root_n * (estimate - truth),
        estimate,
        truth,
        sample_size: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MatchingKind {
    /// Nearest neighbor on the fitted scalar score.
    Score(Basis),
    /// Nearest neighbor on the raw covariates, Mahalanobis metric.
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendPoint {
    pub n: usize,
    pub mean_discrepancy: f64,
    pub mean_abs_b_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyTrend {
    pub matching: MatchingKind,
    pub points: Vec<TrendPoint>,
    /// Least-squares slope of log mean discrepancy on log n.
    pub discrepancy_slope: f64,
    pub b_n_slope: f64,
}

/// Ordinary least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Matches `reps` simple random samples at each size and averages the
/// donor-recipient discrepancy and `|B_N|` for the mean.
pub fn discrepancy_trend(
    population: &Population,
    matching: MatchingKind,
    sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<DiscrepancyTrend> {
    if sizes.len() < 2 || reps == 0 {
        return Err(Error::InvalidParameter("a trend needs two sizes and one replicate".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        let design = SamplingDesign::SimpleRandom { n };
        let mut disc = 0.0;
        let mut abs_b = 0.0;
        for r in 0..reps {
            let mut rng = replicate_rng(seed, si * reps + r);
            let sample = draw_sample_with(&population.data, &design, &mut rng)?.sample.mask_nonrespondents();
            let (assignment, discrepancy) = match matching {
                MatchingKind::Score(basis) => {
                    let scores = fit_matching_model(&sample, basis)?.scores(&sample)?;
                    let a = nearest_neighbor_match(&sample, &scores)?;
                    let d = matching_discrepancy(&a, Discrepancy::Scalar(&scores));
                    (a, d)
                }
                MatchingKind::Mahalanobis => {
                    let (a, white) = mahalanobis_match(&sample)?;
                    let d = matching_discrepancy(&a, Discrepancy::Covariate(&white));
                    (a, d)
                }
            };
            disc += discrepancy;
            abs_b += bias_decomposition(population, &sample, &assignment, &ParameterSpec::Mean)?
                .b_n
                .abs();
        }
        points.push(TrendPoint {
            n,
            mean_discrepancy: disc / reps as f64,
            mean_abs_b_n: abs_b / reps as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let discrepancy_slope = log_log_slope(&xs, &points.iter().map(|p| p.mean_discrepancy).collect::<Vec<_>>());
    let b_n_slope = log_log_slope(&xs, &points.iter().map(|p| p.mean_abs_b_n).collect::<Vec<_>>());
    Ok(DiscrepancyTrend {
        matching,
        points,
        discrepancy_slope,
        b_n_slope,
    })
}
