//! Replication variance estimation for the imputed estimators.
//!
//! The proposed method never re-imputes. Each sampled unit is reduced to a
//! pseudo observation `psi_i = mu(m_i) + delta_i (1 + k_i) {z_i - mu(m_i)}`,
//! where `mu` is a kernel regression fitted once on the full sample and `k_i`
//! comes from the original match, and only the replicate weights change
//! between replicates. For quantiles the replicated quantity is the
//! estimating function at the point estimate, divided by the squared
//! derivative afterwards.
//!
//! The naive method reruns matching inside every replicate. It is kept so the
//! failure mode can be reproduced; it should not be used for inference.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    donor_masses, nni_estimate, outcome_or_zero, quantile_score, respondents_by_outcome,
    step_quantile, ParameterSpec,
};
use crate::matching::{
    fit_matching_model, fit_matching_model_weighted, nearest_neighbor_match, Basis, DonorIndex, MatchAssignment,
};
use crate::smoothers::{kernel_regression, s_derivative, KernelConfig, SmoothedCurve};
use crate::survey::SurveyDataset;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    DeleteOneJackknife,
    Bootstrap { replicates: usize },
}

/// Replicate weights `omega_i^(k)` (one row per replicate) and factors `c_k`.
#[derive(Debug, Clone)]
pub struct ReplicationScheme {
    kind: SchemeKind,
    n: usize,
    factors: Vec<f64>,
    weights: Vec<f64>,
}

impl ReplicationScheme {
    /// Builds replicate weights from the full-sample weights `1/(N pi_i)`.
    /// `seed` is used by the bootstrap only.
    pub fn build(kind: SchemeKind, base_weights: &[f64], seed: u64) -> Result<Self> {
        match kind {
            SchemeKind::DeleteOneJackknife => Self::jackknife(base_weights),
            SchemeKind::Bootstrap { replicates } => Self::bootstrap(base_weights, replicates, seed),
        }
    }

    /// Delete-one jackknife: row `k` zeroes unit `k` and inflates the rest by
    /// `n / (n - 1)`; `c_k = (n - 1) / n`.
    pub fn jackknife(base_weights: &[f64]) -> Result<Self> {
        let n = base_weights.len();
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        let inflate = n as f64 / (n - 1) as f64;
        let mut weights = Vec::with_capacity(n * n);
        for k in 0..n {
            weights.extend(
                base_weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| if i == k { 0.0 } else { inflate * w }),
            );
        }
        Ok(Self {
            kind: SchemeKind::DeleteOneJackknife,
            n,
            factors: vec![(n - 1) as f64 / n as f64; n],
            weights,
        })
    }

    /// With-replacement bootstrap drawing `n - 1` units per replicate, with
    /// weights `omega_i * n/(n-1) * count_i` and `c_k = 1/B`.
    pub fn bootstrap(base_weights: &[f64], replicates: usize, seed: u64) -> Result<Self> {
        let n = base_weights.len();
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        if replicates == 0 {
            return Err(Error::InvalidParameter("bootstrap needs at least one replicate".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = n as f64 / (n - 1) as f64;
        let mut weights = Vec::with_capacity(n * replicates);
        let mut counts = vec![0u32; n];
        for _ in 0..replicates {
            counts.fill(0);
            for _ in 0..n - 1 {
                counts[rng.random_range(0..n)] += 1;
            }
            weights.extend(
                base_weights
                    .iter()
                    .zip(&counts)
                    .map(|(w, &c)| w * scale * f64::from(c)),
            );
        }
        Ok(Self {
            kind: SchemeKind::Bootstrap { replicates },
            n,
            factors: vec![1.0 / replicates as f64; replicates],
            weights,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// Number of sampled units each replicate covers.
    pub fn units(&self) -> usize {
        self.n
    }

    /// Number of replicates `L`.
    pub fn replicates(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn replicate(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n..(k + 1) * self.n]
    }

    /// `sum_i omega_i^(k) v_i` for every replicate `k`.
    pub fn replicate_totals(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "values vs replicate weights",
                left: values.len(),
                right: self.n,
            });
        }
        Ok((0..self.replicates())
            .map(|k| {
                self.replicate(k)
                    .iter()
                    .zip(values)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect())
    }
}

/// `sum_k c_k (theta_k - theta)^2`.
pub fn v_rep(estimate: f64, replicates: &[f64], factors: &[f64]) -> Result<f64> {
    if replicates.len() != factors.len() {
        return Err(Error::LengthMismatch {
            what: "replicates vs factors",
            left: replicates.len(),
            right: factors.len(),
        });
    }
    Ok(replicates
        .iter()
        .zip(factors)
        .map(|(r, c)| c * (r - estimate) * (r - estimate))
        .sum())
}

/// `(point - z sqrt(v), point + z sqrt(v))` at the 95% level.
pub fn confidence_interval(point: f64, variance: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) {
        return Err(Error::NegativeVariance(variance));
    }
    let half = Z_975 * variance.sqrt();
    Ok((point - half, point + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Proposed,
    Naive,
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Proposed => "proposed",
            Self::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub target: String,
    pub method: VarianceMethod,
    pub point: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replicates that entered the variance.
    pub replicates: usize,
    /// Estimating-function derivative at the point estimate, for quantiles.
    pub derivative: Option<f64>,
}

impl VarianceReport {
    pub fn new(
        target: String,
        method: VarianceMethod,
        point: f64,
        variance: f64,
        replicates: usize,
        derivative: Option<f64>,
    ) -> Result<Self> {
        let (ci_low, ci_high) = confidence_interval(point, variance)?;
        Ok(Self {
            target,
            method,
            point,
            variance,
            ci_low,
            ci_high,
            replicates,
            derivative,
        })
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    pub const CSV_HEADER: &'static str = "target,method,point,variance,ci_low,ci_high,L,derivative";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.target,
            self.method,
            self.point,
            self.variance,
            self.ci_low,
            self.ci_high,
            self.replicates,
            self.derivative.map(|d| d.to_string()).unwrap_or_default()
        )
    }
}

/// `psi_i = fitted_i + delta_i (1 + k_i) (z_i - fitted_i)`.
///
/// `z[i]` is read for respondents only, so nonrespondents may carry any
/// placeholder.
pub fn pseudo_observations(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    fitted: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    assignment.check(data)?;
    for (what, len) in [("fitted values vs units", fitted.len()), ("scores vs units", z.len())] {
        if len != data.len() {
            return Err(Error::LengthMismatch {
                what,
                left: len,
                right: data.len(),
            });
        }
    }
    Ok(data
        .units()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if u.responded {
                fitted[i] + (1.0 + assignment.multiplicity()[i]) * (z[i] - fitted[i])
            } else {
                fitted[i]
            }
        })
        .collect())
}

/// Kernel regression of `z` on the matching scores over respondents, weighted
/// by the design weights.
pub fn fit_respondent_curve(
    data: &SurveyDataset,
    scores: &[f64],
    z: &[f64],
    config: KernelConfig,
) -> Result<SmoothedCurve> {
    if scores.len() != data.len() || z.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs units",
            left: scores.len().min(z.len()),
            right: data.len(),
        });
    }
    let w = data.design_weights();
    let points: Vec<(f64, f64, f64)> = data
        .units()
        .iter()
        .enumerate()
        .filter(|(_, u)| u.responded)
        .map(|(i, _)| (scores[i], z[i], w.0[i]))
        .collect();
    kernel_regression(&points, config)
}

/// Per-unit response fed to the smoother and the pseudo observations:
/// `g(y_i)` for mean targets, `I(y_i <= xi) - alpha` for quantiles.
fn responses(data: &SurveyDataset, spec: &ParameterSpec, xi: f64) -> Vec<f64> {
    data.units()
        .iter()
        .map(|u| match (u.responded, spec) {
            (false, _) => 0.0,
            (true, ParameterSpec::Quantile { alpha }) => quantile_score(u.y(), xi, *alpha),
            (true, s) => s.g(u.y()).expect("mean-type target"),
        })
        .collect()
}

/// Replicates of the linearized estimator.
#[derive(Debug, Clone)]
pub struct ProposedReplicates {
    pub psi: Vec<f64>,
    /// Full-sample value `sum omega_i psi_i` the replicates are centered on.
    pub center: f64,
    pub replicates: Vec<f64>,
    /// Curve evaluations that fell back to the nearest training point.
    pub degenerate_evaluations: usize,
}

/// Builds `sum_i omega_i^(k) psi_i` for every replicate from a curve fitted
/// once on the full sample. Matching is not redone.
pub fn proposed_replicates(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    scores: &[f64],
    z: &[f64],
    curve: &SmoothedCurve,
    scheme: &ReplicationScheme,
) -> Result<ProposedReplicates> {
    let (fitted, degenerate) = curve.evaluate_many(scores);
    let psi = pseudo_observations(data, assignment, &fitted, z)?;
    let w = data.design_weights();
    let center = w.0.iter().zip(&psi).map(|(w, p)| w * p).sum();
    let replicates = scheme.replicate_totals(&psi)?;
    Ok(ProposedReplicates {
        psi,
        center,
        replicates,
        degenerate_evaluations: degenerate,
    })
}

/// Replicates for a mean-type target.
pub fn proposed_replicates_mean(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    spec: &ParameterSpec,
    scores: &[f64],
    curve: &SmoothedCurve,
    scheme: &ReplicationScheme,
) -> Result<ProposedReplicates> {
    if spec.is_quantile() {
        return Err(Error::InvalidParameter("mean-type target expected".into()));
    }
    let z = responses(data, spec, 0.0);
    proposed_replicates(data, assignment, scores, &z, curve, scheme)
}

/// Quantile variance `S'(xi)^-2 V_rep{S(xi)}` from the replicates of the
/// estimating function at `point` and a precomputed derivative.
pub fn proposed_variance_quantile(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    alpha: f64,
    point: f64,
    scores: &[f64],
    curve: &SmoothedCurve,
    derivative: f64,
    scheme: &ReplicationScheme,
) -> Result<VarianceReport> {
    if !(derivative >= crate::smoothers::DERIVATIVE_FLOOR) {
        return Err(Error::FlatEstimatingFunction {
            derivative,
            floor: crate::smoothers::DERIVATIVE_FLOOR,
        });
    }
    let spec = ParameterSpec::quantile(alpha)?;
    let z = responses(data, &spec, point);
    let reps = proposed_replicates(data, assignment, scores, &z, curve, scheme)?;
    let v_s = v_rep(reps.center, &reps.replicates, scheme.factors())?;
    VarianceReport::new(
        spec.label(),
        VarianceMethod::Proposed,
        point,
        v_s / (derivative * derivative),
        scheme.replicates(),
        Some(derivative),
    )
}

/// The full proposed procedure for one target: point estimate, kernel curve
/// at bandwidth `kernel`, replicates and confidence interval.
pub fn proposed_variance(
    data: &SurveyDataset,
    assignment: &MatchAssignment,
    scores: &[f64],
    spec: &ParameterSpec,
    scheme: &ReplicationScheme,
    kernel: KernelConfig,
) -> Result<VarianceReport> {
    let point = nni_estimate(data, assignment, spec)?.value;
    match spec {
        ParameterSpec::Quantile { alpha } => {
            let z = responses(data, spec, point);
            let curve = fit_respondent_curve(data, scores, &z, kernel)?;
            let masses = donor_masses(data, assignment);
            let weighted: Vec<(f64, f64)> = data
                .units()
                .iter()
                .zip(&masses)
                .filter(|(u, _)| u.responded)
                .map(|(u, &w)| (u.y(), w))
                .collect();
            let derivative = s_derivative(&weighted, kernel, point)?;
            proposed_variance_quantile(data, assignment, *alpha, point, scores, &curve, derivative, scheme)
        }
        _ => {
            let z = responses(data, spec, 0.0);
            let curve = fit_respondent_curve(data, scores, &z, kernel)?;
            let reps = proposed_replicates(data, assignment, scores, &z, &curve, scheme)?;
            let variance = v_rep(reps.center, &reps.replicates, scheme.factors())?;
            VarianceReport::new(
                spec.label(),
                VarianceMethod::Proposed,
                point,
                variance,
                scheme.replicates(),
                None,
            )
        }
    }
}

/// Replicate estimates from rerunning the whole estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveReplicates {
    pub estimates: Vec<f64>,
    pub factors: Vec<f64>,
    /// Replicates where the estimator could not be rerun: no respondent left,
    /// or a rank-deficient matching fit.
    pub skipped: usize,
}

/// Naive replication for several targets at once.
///
/// In replicate `k` the units with zero weight are dropped, the matching
/// model is refitted with the replicate weights, every remaining
/// nonrespondent is matched again among the remaining respondents, and each
/// estimator is recomputed with the replicate weights. This is the procedure
/// that fails; it exists to reproduce the failure.
pub fn naive_replicates_multi(
    data: &SurveyDataset,
    basis: Basis,
    specs: &[ParameterSpec],
    scheme: &ReplicationScheme,
) -> Result<Vec<NaiveReplicates>> {
    if scheme.units() != data.len() {
        return Err(Error::LengthMismatch {
            what: "replicate weights vs units",
            left: scheme.units(),
            right: data.len(),
        });
    }
    let units = data.units();
    let order = respondents_by_outcome(data);
    let values = outcome_or_zero(data);
    let g_values: Vec<Option<Vec<f64>>> = specs
        .iter()
        .map(|s| (!s.is_quantile()).then(|| responses(data, s, 0.0)))
        .collect();

    let mut out: Vec<NaiveReplicates> = specs
        .iter()
        .map(|_| NaiveReplicates {
            estimates: Vec::with_capacity(scheme.replicates()),
            factors: Vec::with_capacity(scheme.replicates()),
            skipped: 0,
        })
        .collect();
    let mut mass = vec![0.0; units.len()];

    for k in 0..scheme.replicates() {
        let w = scheme.replicate(k);
        let allowed = |i: usize| w[i] > 0.0;
        let refit = fit_matching_model_weighted(data, basis, w).and_then(|model| {
            let scores = model.scores(data)?;
            let index = DonorIndex::new(
                order
                    .iter()
                    .filter(|&&i| allowed(i))
                    .map(|&i| (i, units[i].id, scores[i])),
            )?;
            Ok((scores, index))
        });
        let Ok((scores, index)) = refit else {
            for o in &mut out {
                o.skipped += 1;
            }
            continue;
        };
        mass.fill(0.0);
        for (j, u) in units.iter().enumerate() {
            if !allowed(j) {
                continue;
            }
            let donor = if u.responded { j } else { index.nearest(scores[j]) };
            mass[donor] += w[j];
        }
        for ((spec, g), o) in specs.iter().zip(&g_values).zip(&mut out) {
            let estimate = match (spec, g) {
                (ParameterSpec::Quantile { alpha }, _) => step_quantile(&values, &mass, &order, *alpha)?,
                (_, Some(g)) => order.iter().map(|&i| mass[i] * g[i]).sum(),
                _ => unreachable!("mean-type targets carry g values"),
            };
            o.estimates.push(estimate);
            o.factors.push(scheme.factors()[k]);
        }
    }
    Ok(out)
}

pub fn naive_replicates(
    data: &SurveyDataset,
    basis: Basis,
    spec: &ParameterSpec,
    scheme: &ReplicationScheme,
) -> Result<NaiveReplicates> {
    Ok(naive_replicates_multi(data, basis, std::slice::from_ref(spec), scheme)?
        .pop()
        .expect("one target in, one out"))
}

/// `v_rep` of naive replicates around the full-sample estimate.
pub fn variance_from_naive(point: f64, reps: &NaiveReplicates) -> Result<f64> {
    v_rep(point, &reps.estimates, &reps.factors)
}

/// Naive variance centered on the full-sample estimate, which is computed
/// here with the same basis.
///
/// Not a valid variance estimator for nearest neighbor imputation; kept to
/// reproduce its failure.
pub fn naive_variance(
    data: &SurveyDataset,
    basis: Basis,
    spec: &ParameterSpec,
    scheme: &ReplicationScheme,
) -> Result<VarianceReport> {
    let scores = fit_matching_model(data, basis)?.scores(data)?;
    let assignment = nearest_neighbor_match(data, &scores)?;
    let point = nni_estimate(data, &assignment, spec)?.value;
    let reps = naive_replicates(data, basis, spec, scheme)?;
    let variance = variance_from_naive(point, &reps)?;
    VarianceReport::new(
        spec.label(),
        VarianceMethod::Naive,
        point,
        variance,
        reps.estimates.len(),
        None,
    )
}
