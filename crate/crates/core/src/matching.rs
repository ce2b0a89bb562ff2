//! Scalar matching variable, nearest neighbor donor assignment and donor
//! multiplicities.
//!
//! The matching variable `m(x)` is a polynomial regression of the outcome on
//! the covariates, fitted by design-weighted least squares on respondents.
//! Each nonrespondent receives the respondent whose `m` is closest; ties go to
//! the smaller unit id so that assignments are fully deterministic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::SurveyDataset;

/// Polynomial basis used for the matching regression. Every basis contains an
/// intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `1, x_1, ..., x_p`
    FirstOrder,
    /// `1, x_1, ..., x_p, x_1^2, ..., x_p^2`
    FirstOrderPlusSquares,
    /// All first and second order terms, including cross products.
    FirstAndSecondOrder,
}

impl Basis {
    pub fn len(&self, p: usize) -> usize {
        match self {
            Basis::FirstOrder => 1 + p,
            Basis::FirstOrderPlusSquares => 1 + 2 * p,
            Basis::FirstAndSecondOrder => 1 + p + p * (p + 1) / 2,
        }
    }

    pub fn term_names(&self, p: usize) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=p).map(|j| format!("x{j}")));
        match self {
            Basis::FirstOrder => {}
            Basis::FirstOrderPlusSquares => names.extend((1..=p).map(|j| format!("x{j}^2"))),
            Basis::FirstAndSecondOrder => {
                for a in 1..=p {
                    for b in a..=p {
                        names.push(if a == b {
                            format!("x{a}^2")
                        } else {
                            format!("x{a}*x{b}")
                        });
                    }
                }
            }
        }
        names
    }

    /// Writes the basis expansion of `x` into `out`.
    pub fn expand_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend_from_slice(x);
        match self {
            Basis::FirstOrder => {}
            Basis::FirstOrderPlusSquares => out.extend(x.iter().map(|v| v * v)),
            Basis::FirstAndSecondOrder => {
                for a in 0..x.len() {
                    for b in a..x.len() {
                        out.push(x[a] * x[b]);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingModel {
    basis: Basis,
    dimension: usize,
    coefficients: Vec<f64>,
    residual_mean_square: f64,
}

impl MatchingModel {
    /// Builds a model from known coefficients.
    pub fn from_coefficients(basis: Basis, dimension: usize, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len(dimension) {
            return Err(Error::DimensionMismatch {
                expected: basis.len(dimension),
                found: coefficients.len(),
            });
        }
        Ok(Self {
            basis,
            dimension,
            coefficients,
            residual_mean_square: f64::NAN,
        })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Weighted mean squared residual over the respondents used in the fit.
    pub fn residual_mean_square(&self) -> f64 {
        self.residual_mean_square
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        let mut row = Vec::with_capacity(self.coefficients.len());
        self.basis.expand_into(x, &mut row);
        Ok(dot(&row, &self.coefficients))
    }

    /// `m(x_i)` for every unit of `data`, respondents and nonrespondents alike.
    pub fn scores(&self, data: &SurveyDataset) -> Result<Vec<f64>> {
        if data.dimension() != self.dimension && !data.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: data.dimension(),
            });
        }
        let mut row = Vec::with_capacity(self.coefficients.len());
        Ok(data
            .units()
            .iter()
            .map(|u| {
                self.basis.expand_into(&u.covariates, &mut row);
                dot(&row, &self.coefficients)
            })
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `m(x)` by least squares on respondents, weighting each by `1/(N pi_i)`.
pub fn fit_matching_model(data: &SurveyDataset, basis: Basis) -> Result<MatchingModel> {
    fit_matching_model_weighted(data, basis, data.design_weights().as_slice())
}

/// Weighted least-squares fit over the respondents with positive weight.
pub fn fit_matching_model_weighted(data: &SurveyDataset, basis: Basis, weights: &[f64]) -> Result<MatchingModel> {
    if weights.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "weights vs units",
            left: weights.len(),
            right: data.len(),
        });
    }
    let p = data.dimension();
    let q = basis.len(p);
    let rows: Vec<usize> = (0..data.len())
        .filter(|&i| data.units()[i].responded && weights[i] > 0.0)
        .collect();
    if rows.is_empty() {
        return Err(Error::NoRespondents);
    }
    if rows.len() < q {
        return Err(Error::TooFewRespondents {
            respondents: rows.len(),
            terms: q,
        });
    }

    let mut design = DMatrix::<f64>::zeros(rows.len(), q);
    let mut target = DVector::<f64>::zeros(rows.len());
    let mut expanded = Vec::with_capacity(q);
    for (r, &i) in rows.iter().enumerate() {
        let u = &data.units()[i];
        let sw = weights[i].sqrt();
        basis.expand_into(&u.covariates, &mut expanded);
        for (c, v) in expanded.iter().enumerate() {
            design[(r, c)] = sw * v;
        }
        target[r] = sw * u.y();
    }

    let col_norms: Vec<f64> = (0..q).map(|c| design.column(c).norm()).collect();
    let qr = design.qr();
    let r = qr.r();
    // A column lying in the span of its predecessors leaves a vanishing pivot.
    let collinear: Vec<String> = basis
        .term_names(p)
        .into_iter()
        .enumerate()
        .filter(|&(c, _)| col_norms[c] == 0.0 || r[(c, c)].abs() <= 1e-9 * col_norms[c])
        .map(|(_, name)| name)
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let mut rhs = target.clone();
    qr.q_tr_mul(&mut rhs);
    let rhs = rhs.rows(0, q).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient { columns: vec!["<singular R>".into()] })?;

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let mut ss = 0.0;
    let mut wsum = 0.0;
    for &i in &rows {
        let u = &data.units()[i];
        basis.expand_into(&u.covariates, &mut expanded);
        let resid = u.y() - dot(&expanded, &coefficients);
        ss += weights[i] * resid * resid;
        wsum += weights[i];
    }
    Ok(MatchingModel {
        basis,
        dimension: p,
        coefficients,
        residual_mean_square: ss / wsum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    m: f64,
    id: u64,
    pos: usize,
}

/// Respondents sorted by matching score for logarithmic nearest neighbor lookups.
#[derive(Debug, Clone)]
pub struct DonorIndex {
    sorted: Vec<Entry>,
}

impl DonorIndex {
    /// `donors` yields `(position, unit_id, m)` triples.
    pub fn new(donors: impl IntoIterator<Item = (usize, u64, f64)>) -> Result<Self> {
        let mut sorted: Vec<Entry> = donors
            .into_iter()
            .map(|(pos, id, m)| Entry { m, id, pos })
            .collect();
        if sorted.is_empty() {
            return Err(Error::NoRespondents);
        }
        if let Some(e) = sorted.iter().find(|e| !e.m.is_finite()) {
            return Err(Error::InvalidUnit {
                unit_id: e.id,
                message: "non-finite matching score".into(),
            });
        }
        sorted.sort_by(|a, b| a.m.total_cmp(&b.m).then(a.id.cmp(&b.id)));
        Ok(Self { sorted })
    }

    /// Builds the index over the respondents of `data`.
    pub fn for_respondents(data: &SurveyDataset, scores: &[f64]) -> Result<Self> {
        if scores.len() != data.len() {
            return Err(Error::LengthMismatch {
                what: "scores vs units",
                left: scores.len(),
                right: data.len(),
            });
        }
        Self::new(
            data.units()
                .iter()
                .enumerate()
                .filter(|(_, u)| u.responded)
                .map(|(i, u)| (i, u.id, scores[i])),
        )
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Position of the donor nearest to `q`.
    pub fn nearest(&self, q: f64) -> usize {
        self.nearest_where(q, |_| true)
            .expect("index is never empty")
    }

    /// Nearest donor among those whose position satisfies `allowed`.
    pub fn nearest_where(&self, q: f64, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        let split = self.sorted.partition_point(|e| e.m < q);

        // Right side: first allowed entry has the smallest m >= q, and the
        // smallest id within that m.
        let right = self.sorted[split..].iter().find(|e| allowed(e.pos));

        // Left side: walk down to the largest allowed m < q, then keep walking
        // through equal m values to reach the smallest allowed id.
        let mut left: Option<&Entry> = None;
        for e in self.sorted[..split].iter().rev() {
            match left {
                Some(best) if e.m != best.m => break,
                _ if allowed(e.pos) => left = Some(e),
                _ => {}
            }
        }

        match (left, right) {
            (None, None) => None,
            (Some(l), None) => Some(l.pos),
            (None, Some(r)) => Some(r.pos),
            (Some(l), Some(r)) => {
                let dl = q - l.m;
                let dr = r.m - q;
                if dl < dr || (dl == dr && l.id < r.id) {
                    Some(l.pos)
                } else {
                    Some(r.pos)
                }
            }
        }
    }
}

/// Donor assignment for one sample, indexed by unit position.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchAssignment {
    donor: Vec<Option<usize>>,
    uses: Vec<usize>,
    multiplicity: Vec<f64>,
}

impl MatchAssignment {
    /// Assembles an assignment from explicit donor positions (`None` for
    /// respondents) and computes both multiplicities.
    pub fn from_donors(data: &SurveyDataset, donor: Vec<Option<usize>>) -> Result<Self> {
        if donor.len() != data.len() {
            return Err(Error::AssignmentMismatch(format!(
                "{} donor slots for {} units",
                donor.len(),
                data.len()
            )));
        }
        let units = data.units();
        let mut uses = vec![0usize; data.len()];
        for (j, d) in donor.iter().enumerate() {
            match (units[j].responded, d) {
                (true, None) => {}
                (false, Some(i)) => {
                    if *i >= units.len() || !units[*i].responded {
                        return Err(Error::AssignmentMismatch(format!(
                            "donor of unit {} is not a respondent",
                            units[j].id
                        )));
                    }
                    uses[*i] += 1;
                }
                (true, Some(_)) => {
                    return Err(Error::AssignmentMismatch(format!(
                        "respondent {} has a donor",
                        units[j].id
                    )))
                }
                (false, None) => {
                    return Err(Error::AssignmentMismatch(format!(
                        "nonrespondent {} has no donor",
                        units[j].id
                    )))
                }
            }
        }
        let multiplicity = weighted_multiplicity(data, &donor);
        Ok(Self {
            donor,
            uses,
            multiplicity,
        })
    }

    /// Donor position of unit `j`, `None` when `j` is a respondent.
    pub fn donor_of(&self, j: usize) -> Option<usize> {
        self.donor[j]
    }

    pub fn donors(&self) -> &[Option<usize>] {
        &self.donor
    }

    /// Unweighted use counts, zero for nonrespondents.
    pub fn uses(&self) -> &[usize] {
        &self.uses
    }

    /// Design-weighted multiplicities `k_i`, zero for nonrespondents.
    pub fn multiplicity(&self) -> &[f64] {
        &self.multiplicity
    }

    pub fn len(&self) -> usize {
        self.donor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.donor.is_empty()
    }

    pub(crate) fn check(&self, data: &SurveyDataset) -> Result<()> {
        if self.donor.len() != data.len() {
            return Err(Error::AssignmentMismatch(format!(
                "assignment covers {} units, dataset has {}",
                self.donor.len(),
                data.len()
            )));
        }
        for (u, d) in data.units().iter().zip(&self.donor) {
            if u.responded == d.is_some() {
                return Err(Error::AssignmentMismatch(format!(
                    "unit {} response flag disagrees with assignment",
                    u.id
                )));
            }
        }
        Ok(())
    }
}

/// `k_i = sum_j (pi_i / pi_j) (1 - delta_j) d_ij` for every position `i`.
pub fn weighted_multiplicity(data: &SurveyDataset, donor: &[Option<usize>]) -> Vec<f64> {
    let units = data.units();
    let mut k = vec![0.0; units.len()];
    for (j, d) in donor.iter().enumerate() {
        if let Some(i) = *d {
            k[i] += units[i].inclusion_prob / units[j].inclusion_prob;
        }
    }
    k
}

/// One-nearest-neighbor matching on the scalar `scores`.
pub fn nearest_neighbor_match(data: &SurveyDataset, scores: &[f64]) -> Result<MatchAssignment> {
    let index = DonorIndex::for_respondents(data, scores)?;
    let donor = data
        .units()
        .iter()
        .enumerate()
        .map(|(j, u)| (!u.responded).then(|| index.nearest(scores[j])))
        .collect();
    MatchAssignment::from_donors(data, donor)
}

/// Covariate whitening used by Mahalanobis matching.
#[derive(Debug, Clone)]
pub struct Whitening {
    transformed: Vec<Vec<f64>>,
    /// False when the covariance was singular and plain Euclidean distance is used.
    pub mahalanobis: bool,
}

impl Whitening {
    /// Maps every unit to `L^-1 x` with `L L^T` the empirical covariance of
    /// the covariates, so that Euclidean distance on the result is the
    /// Mahalanobis distance.
    pub fn new(data: &SurveyDataset) -> Self {
        let n = data.len();
        let p = data.dimension();
        let raw: Vec<Vec<f64>> = data.units().iter().map(|u| u.covariates.clone()).collect();
        if n < 2 {
            return Self {
                transformed: raw,
                mahalanobis: false,
            };
        }
        let mut mean = vec![0.0; p];
        for x in &raw {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for x in &raw {
            for a in 0..p {
                for b in 0..p {
                    cov[(a, b)] += (x[a] - mean[a]) * (x[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        match cov.cholesky() {
            Some(chol) => {
                let l = chol.l();
                let transformed = raw
                    .iter()
                    .map(|x| {
                        let v = DVector::from_column_slice(x);
                        l.solve_lower_triangular(&v)
                            .map(|z| z.iter().copied().collect())
                            .unwrap_or_else(|| x.clone())
                    })
                    .collect();
                Self {
                    transformed,
                    mahalanobis: true,
                }
            }
            None => Self {
                transformed: raw,
                mahalanobis: false,
            },
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.transformed[a]
            .iter()
            .zip(&self.transformed[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Brute-force nearest neighbor matching on the raw covariates under the
/// Mahalanobis metric. Falls back to Euclidean distance when the covariance
/// is singular, reported through the returned [`Whitening`].
pub fn mahalanobis_match(data: &SurveyDataset) -> Result<(MatchAssignment, Whitening)> {
    let white = Whitening::new(data);
    let units = data.units();
    let donors: Vec<usize> = (0..units.len()).filter(|&i| units[i].responded).collect();
    if donors.is_empty() {
        return Err(Error::NoRespondents);
    }
    let donor = (0..units.len())
        .map(|j| {
            if units[j].responded {
                return None;
            }
            let mut best = donors[0];
            let mut best_d = white.distance(best, j);
            for &i in &donors[1..] {
                let d = white.distance(i, j);
                if d < best_d || (d == best_d && units[i].id < units[best].id) {
                    best = i;
                    best_d = d;
                }
            }
            Some(best)
        })
        .collect();
    Ok((MatchAssignment::from_donors(data, donor)?, white))
}

/// How donor-recipient distance is measured by [`matching_discrepancy`].
pub enum Discrepancy<'a> {
    /// `|m_donor - m_recipient|` on the given per-unit scores.
    Scalar(&'a [f64]),
    /// `||x_donor - x_recipient||` under the given whitening.
    Covariate(&'a Whitening),
}

/// Mean donor-recipient distance over nonrespondents, zero when there are none.
pub fn matching_discrepancy(assignment: &MatchAssignment, metric: Discrepancy<'_>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (j, d) in assignment.donors().iter().enumerate() {
        if let Some(i) = *d {
            total += match &metric {
                Discrepancy::Scalar(m) => (m[i] - m[j]).abs(),
                Discrepancy::Covariate(w) => w.distance(i, j),
            };
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
