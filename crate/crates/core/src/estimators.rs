//! Nearest neighbor imputation point estimators.
//!
//! Means and proportions are normalized by the known population size `N`.
//! Quantiles invert the Hajek-normalized imputed distribution function, so
//! that the estimated CDF reaches exactly one.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matching::MatchAssignment;
use crate::survey::SurveyDataset;

/// A named real function of the outcome.
#[derive(Clone)]
pub struct OutcomeFn {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl OutcomeFn {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.f)(y)
    }
}

impl fmt::Debug for OutcomeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("OutcomeFn").field(&self.name).finish()
    }
}

/// The finite-population quantity being estimated.
#[derive(Debug, Clone)]
pub enum ParameterSpec {
    /// Population mean of `y`.
    Mean,
    /// Population mean of `g(y)`.
    MeanOf(OutcomeFn),
    /// Share of the population with `y < threshold` (strict).
    ProportionBelow { threshold: f64 },
    /// `inf { xi : F(xi) >= alpha }`, scored with `I(y <= xi) - alpha`.
    Quantile { alpha: f64 },
}

impl ParameterSpec {
    pub fn quantile(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level {alpha} is not in (0, 1)")));
        }
        Ok(Self::Quantile { alpha })
    }

    pub fn is_quantile(&self) -> bool {
        matches!(self, Self::Quantile { .. })
    }

    /// `g(y)` for the mean-type targets; `None` for quantiles.
    #[inline]
    pub fn g(&self, y: f64) -> Option<f64> {
        match self {
            Self::Mean => Some(y),
            Self::MeanOf(f) => Some(f.eval(y)),
            Self::ProportionBelow { threshold } => Some(if y < *threshold { 1.0 } else { 0.0 }),
            Self::Quantile { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Mean => "mean".into(),
            Self::MeanOf(f) => format!("mean_of_{}", f.name()),
            Self::ProportionBelow { threshold } => format!("proportion_below_{threshold}"),
            Self::Quantile { alpha } => format!("quantile_{alpha}"),
        }
    }
}

/// Quantile estimating score `I(y <= xi) - alpha`.
#[inline]
pub fn quantile_score(y: f64, xi: f64, alpha: f64) -> f64 {
    if y <= xi {
        1.0 - alpha
    } else {
        -alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorForm {
    ImputedSum,
    DonorWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub form_used: EstimatorForm,
    /// The imputed-sum evaluation, when it was computed alongside the donor form.
    pub imputed_sum: Option<f64>,
    pub donor_weight: f64,
    pub sample_size: usize,
    pub population_size: usize,
    pub respondents: usize,
}

/// Donor masses `delta_i (1 + k_i) / pi_i`, zero for nonrespondents.
pub fn donor_masses(data: &SurveyDataset, assignment: &MatchAssignment) -> Vec<f64> {
    data.units()
        .iter()
        .zip(assignment.multiplicity())
        .map(|(u, k)| if u.responded { (1.0 + k) / u.inclusion_prob } else { 0.0 })
        .collect()
}

/// Imputed mean of `g(y)`, evaluated in both the imputed-sum and donor-weight
/// forms. The two must agree; a disagreement means the assignment is corrupt.
pub fn nni_mean_estimate(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    spec: &ParameterSpec,
) -> Result<PointEstimate> {
    if spec.is_quantile() {
        return Err(Error::InvalidParameter(
            "quantiles are estimated with nni_quantile_estimate".into(),
        ));
    }
    assignment.check(data)?;
    let units = data.units();
    let big_n = data.population_size() as f64;
    let g = |y: f64| spec.g(y).expect("mean-type target");

    let mut imputed = 0.0;
    let mut scale = 0.0;
    for (j, u) in units.iter().enumerate() {
        let y = match assignment.donor_of(j) {
            None => u.y(),
            Some(i) => units[i].y(),
        };
        let term = g(y) / u.inclusion_prob;
        imputed += term;
        scale += term.abs();
    }
    imputed /= big_n;
    scale /= big_n;

    // Same operation order as `ht_estimate` when nothing is missing.
    let donor: f64 = units
        .iter()
        .zip(assignment.multiplicity())
        .filter(|(u, _)| u.responded)
        .map(|(u, k)| (1.0 + k) * g(u.y()) / u.inclusion_prob)
        .sum::<f64>()
        / big_n;

    if (imputed - donor).abs() > 1e-10 * (1.0 + scale) {
        return Err(Error::FormMismatch { imputed, donor });
    }
    Ok(PointEstimate {
        value: donor,
        form_used: EstimatorForm::DonorWeight,
        imputed_sum: Some(imputed),
        donor_weight: donor,
        sample_size: data.len(),
        population_size: data.population_size(),
        respondents: data.respondent_count(),
    })
}

/// `F_nni(xi) - alpha` with the Hajek normalization.
///
/// The normalizer is the total donor mass, which equals `sum 1/pi_i` over the
/// sample, so `F_nni(+inf)` is exactly one.
pub fn nni_estimating_function(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    alpha: f64,
    xi: f64,
) -> Result<f64> {
    assignment.check(data)?;
    let masses = donor_masses(data, assignment);
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let below: f64 = data
        .units()
        .iter()
        .zip(&masses)
        .filter(|(u, _)| u.responded && u.y() <= xi)
        .map(|(_, w)| w)
        .sum();
    let cdf = if below == total { 1.0 } else { below / total };
    Ok(cdf - alpha)
}

/// Smallest value `y` with `sum_{y_i <= y} w_i >= alpha * sum w_i`.
///
/// `order` lists indices of `values` in ascending value order; indices with
/// zero mass may be included. The scan is exact on the step function, with a
/// relative rounding guard of 1e-12 on the comparison.
pub fn step_quantile(values: &[f64], masses: &[f64], order: &[usize], alpha: f64) -> Result<f64> {
    let total: f64 = order.iter().map(|&i| masses[i]).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let target = alpha * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut last = f64::NAN;
    let mut k = 0;
    while k < order.len() {
        let y = values[order[k]];
        // Absorb the whole tie group before testing the crossing.
        while k < order.len() && values[order[k]] == y {
            cum += masses[order[k]];
            k += 1;
        }
        if cum > 0.0 {
            last = y;
            if cum >= target {
                return Ok(y);
            }
        }
    }
    Ok(last)
}

/// Respondent positions sorted by outcome, ties by position.
pub fn respondents_by_outcome(data: &SurveyDataset) -> Vec<usize> {
    let units = data.units();
    let mut order: Vec<usize> = (0..units.len()).filter(|&i| units[i].responded).collect();
    order.sort_by(|&a, &b| units[a].y().total_cmp(&units[b].y()).then(a.cmp(&b)));
    order
}

/// Outcome vector with zeros in place of missing values.
pub(crate) fn outcome_or_zero(data: &SurveyDataset) -> Vec<f64> {
    data.units()
        .iter()
        .map(|u| if u.responded { u.y() } else { 0.0 })
        .collect()
}

/// `inf { xi : S_nni(xi) >= 0 }` by a scan over the sorted respondent outcomes.
pub fn nni_quantile_estimate(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    spec: &ParameterSpec,
) -> Result<PointEstimate> {
    let alpha = match spec {
        ParameterSpec::Quantile { alpha } => *alpha,
        _ => {
            return Err(Error::InvalidParameter(
                "nni_quantile_estimate needs a quantile target".into(),
            ))
        }
    };
    assignment.check(data)?;
    if data.respondent_count() == 0 {
        return Err(Error::NoRespondents);
    }
    let masses = donor_masses(data, assignment);
    let order = respondents_by_outcome(data);
    let values = outcome_or_zero(data);
    let value = step_quantile(&values, &masses, &order, alpha)?;
    Ok(PointEstimate {
        value,
        form_used: EstimatorForm::DonorWeight,
        imputed_sum: None,
        donor_weight: value,
        sample_size: data.len(),
        population_size: data.population_size(),
        respondents: data.respondent_count(),
    })
}

/// Dispatches to the mean or quantile estimator.
pub fn nni_estimate(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    spec: &ParameterSpec,
) -> Result<PointEstimate> {
    if spec.is_quantile() {
        nni_quantile_estimate(data, assignment, spec)
    } else {
        nni_mean_estimate(data, assignment, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::nearest_neighbor_match;
    use crate::survey::{ht_estimate, Unit};
    use approx::assert_relative_eq;

    /// N = n = 5, pi = 1; respondents {1, 2, 5} with y = (1, 2, 5) and
    /// m = (0, 1, 3); nonrespondents {3, 4} with m = (0.4, 2.1).
    pub(crate) fn five_unit() -> (SurveyDataset, MatchAssignment) {
        let units = vec![
            Unit::respondent(1, vec![0.0], 1.0, 1.0),
            Unit::respondent(2, vec![1.0], 2.0, 1.0),
            Unit::nonrespondent(3, vec![0.4], 1.0),
            Unit::nonrespondent(4, vec![2.1], 1.0),
            Unit::respondent(5, vec![3.0], 5.0, 1.0),
        ];
        let data = SurveyDataset::new(units, 5).unwrap();
        let m: Vec<f64> = data.units().iter().map(|u| u.covariates[0]).collect();
        let a = nearest_neighbor_match(&data, &m).unwrap();
        (data, a)
    }

    #[test]
    fn five_unit_mean_both_forms() {
        let (data, a) = five_unit();
        assert_eq!(a.donor_of(2), Some(0));
        assert_eq!(a.donor_of(3), Some(4));
        assert_eq!(a.multiplicity(), &[1.0, 0.0, 0.0, 0.0, 1.0]);
        let est = nni_mean_estimate(&data, &a, &ParameterSpec::Mean).unwrap();
        assert_relative_eq!(est.value, 2.8, epsilon = 1e-14);
        assert_relative_eq!(est.imputed_sum.unwrap(), 2.8, epsilon = 1e-14);
    }

    #[test]
    fn no_missing_equals_ht() {
        let units: Vec<Unit> = (0..6)
            .map(|i| Unit::respondent(i, vec![i as f64], (i * i) as f64, 0.1 + 0.1 * i as f64))
            .collect();
        let data = SurveyDataset::new(units, 40).unwrap();
        let a = nearest_neighbor_match(&data, &[0.0; 6]).unwrap();
        let est = nni_mean_estimate(&data, &a, &ParameterSpec::Mean).unwrap();
        assert_eq!(est.value, ht_estimate(&data, |y| y).unwrap());
    }

    #[test]
    fn estimating_function_limits() {
        let (data, a) = five_unit();
        assert_eq!(nni_estimating_function(&data, &a, 0.3, f64::INFINITY).unwrap(), 1.0 - 0.3);
        assert_eq!(nni_estimating_function(&data, &a, 0.3, 0.5).unwrap(), -0.3);
        assert_relative_eq!(nni_estimating_function(&data, &a, 0.5, 2.0).unwrap(), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn five_unit_median() {
        let (data, a) = five_unit();
        let est = nni_quantile_estimate(&data, &a, &ParameterSpec::quantile(0.5).unwrap()).unwrap();
        assert_eq!(est.value, 2.0);
    }

    #[test]
    fn textbook_median() {
        let units: Vec<Unit> = [3.0, 1.0, 5.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &y)| Unit::respondent(i as u64, vec![0.0], y, 0.5))
            .collect();
        let data = SurveyDataset::new(units, 10).unwrap();
        let a = nearest_neighbor_match(&data, &[0.0; 5]).unwrap();
        let est = nni_quantile_estimate(&data, &a, &ParameterSpec::Quantile { alpha: 0.5 }).unwrap();
        assert_eq!(est.value, 3.0);
    }

    #[test]
    fn ties_are_absorbed_before_crossing() {
        let values = [1.0, 2.0, 2.0, 3.0];
        let masses = [1.0, 1.0, 1.0, 1.0];
        let order = [0, 1, 2, 3];
        assert_eq!(step_quantile(&values, &masses, &order, 0.3).unwrap(), 2.0);
        assert_eq!(step_quantile(&values, &masses, &order, 0.75).unwrap(), 2.0);
        assert_eq!(step_quantile(&values, &masses, &order, 0.76).unwrap(), 3.0);
        assert!(matches!(
            step_quantile(&values, &[0.0; 4], &order, 0.5),
            Err(Error::ZeroWeight)
        ));
    }

    #[test]
    fn proportion_uses_strict_inequality() {
        let (data, a) = five_unit();
        let est = nni_mean_estimate(&data, &a, &ParameterSpec::ProportionBelow { threshold: 2.0 }).unwrap();
        // imputed outcomes (1, 2, 1, 5, 5): only the two ones are < 2
        assert_relative_eq!(est.value, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn invalid_quantile_level() {
        assert!(ParameterSpec::quantile(0.0).is_err());
        assert!(ParameterSpec::quantile(1.0).is_err());
        assert!(ParameterSpec::quantile(0.25).is_ok());
    }

    #[test]
    fn mean_of_custom_function() {
        let (data, a) = five_unit();
        let spec = ParameterSpec::MeanOf(OutcomeFn::new("square", |y| y * y));
        let est = nni_mean_estimate(&data, &a, &spec).unwrap();
        assert_relative_eq!(est.value, (1.0 + 4.0 + 1.0 + 25.0 + 25.0) / 5.0, epsilon = 1e-13);
    }
}
