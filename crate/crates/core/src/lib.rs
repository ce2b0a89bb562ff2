//! Nearest neighbor imputation for survey means, proportions and quantiles,
//! with replication variance estimation that does not re-impute.
//!
//! The pieces fit together as follows. A [`SurveyDataset`] holds the sample
//! with its inclusion probabilities and response indicators.
//! [`fit_matching_model`] turns covariates into a scalar matching score, and
//! [`nearest_neighbor_match`] assigns each nonrespondent a donor and records
//! the donor multiplicities. [`nni_estimate`] gives the point estimate and
//! [`proposed_variance`] its variance and confidence interval.
//!
//! The [`sim`] module contains the Monte Carlo lab.

pub mod error;
pub mod estimators;
pub mod io;
pub mod matching;
pub mod sim;
pub mod smoothers;
pub mod survey;
pub mod variance;

pub use error::{Error, Result};
pub use estimators::{
    nni_estimate, nni_estimating_function, nni_mean_estimate, nni_quantile_estimate, EstimatorForm,
    OutcomeFn, ParameterSpec, PointEstimate,
};
pub use matching::{
    fit_matching_model, mahalanobis_match, matching_discrepancy, nearest_neighbor_match,
    weighted_multiplicity, Basis, Discrepancy, DonorIndex, MatchAssignment, MatchingModel,
};
pub use smoothers::{kernel_density, kernel_regression, s_derivative, smoothed_cdf, KernelConfig};
pub use survey::{
    draw_sample, hajek_estimate, ht_estimate, DesignWeights, SamplingDesign, SurveyDataset, Unit,
};
pub use variance::{
    confidence_interval, naive_variance, proposed_variance, v_rep, ReplicationScheme, SchemeKind,
    VarianceMethod, VarianceReport,
};
