//! Finite-population data model, design weights and the two sampling designs.
//!
//! A [`SurveyDataset`] is an ordered list of [`Unit`]s together with the known
//! population size `N`. The same type is used for a fully enumerated population
//! (every `inclusion_prob` equal to one) and for a drawn sample.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Inclusion probabilities at or above one are clipped to this value.
pub const PI_CLIP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: u64,
    pub covariates: Vec<f64>,
    /// Observed outcome. Required when `responded` is true; ignored otherwise.
    pub outcome: Option<f64>,
    pub responded: bool,
    pub inclusion_prob: f64,
}

impl Unit {
    pub fn respondent(id: u64, covariates: Vec<f64>, y: f64, inclusion_prob: f64) -> Self {
        Self {
            id,
            covariates,
            outcome: Some(y),
            responded: true,
            inclusion_prob,
        }
    }

    pub fn nonrespondent(id: u64, covariates: Vec<f64>, inclusion_prob: f64) -> Self {
        Self {
            id,
            covariates,
            outcome: None,
            responded: false,
            inclusion_prob,
        }
    }

    /// Outcome of a respondent. Panics on a nonrespondent; callers check `responded`.
    #[inline]
    pub(crate) fn y(&self) -> f64 {
        self.outcome.expect("respondent outcome validated at construction")
    }
}

#[derive(Debug, Clone)]
pub struct SurveyDataset {
    units: Vec<Unit>,
    population_size: usize,
    dimension: usize,
}

impl SurveyDataset {
    /// Validates and wraps `units`.
    ///
    /// Every unit must carry a covariate vector of the same non-zero length,
    /// an inclusion probability in (0, 1], a unique id, and an outcome when it
    /// is a respondent.
    pub fn new(units: Vec<Unit>, population_size: usize) -> Result<Self> {
        if population_size == 0 {
            return Err(Error::InvalidParameter("population size must be positive".into()));
        }
        let dimension = units.first().map_or(0, |u| u.covariates.len());
        let mut seen = HashSet::with_capacity(units.len());
        for u in &units {
            if !seen.insert(u.id) {
                return Err(Error::DuplicateUnitId(u.id));
            }
            if u.covariates.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: u.covariates.len(),
                });
            }
            if u.covariates.is_empty() {
                return Err(Error::InvalidUnit {
                    unit_id: u.id,
                    message: "at least one covariate is required".into(),
                });
            }
            if u.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidUnit {
                    unit_id: u.id,
                    message: "non-finite covariate".into(),
                });
            }
            if !(u.inclusion_prob > 0.0 && u.inclusion_prob <= 1.0) {
                return Err(Error::InvalidInclusionProb {
                    unit_id: u.id,
                    value: u.inclusion_prob,
                });
            }
            match u.outcome {
                None if u.responded => return Err(Error::MissingOutcome { unit_id: u.id }),
                Some(y) if u.responded && !y.is_finite() => {
                    return Err(Error::InvalidUnit {
                        unit_id: u.id,
                        message: "non-finite outcome".into(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            units,
            population_size,
            dimension,
        })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    /// Number of covariates per unit.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn respondent_count(&self) -> usize {
        self.units.iter().filter(|u| u.responded).count()
    }

    pub fn response_rate(&self) -> f64 {
        if self.units.is_empty() {
            return 0.0;
        }
        self.respondent_count() as f64 / self.units.len() as f64
    }

    /// Design weights `1 / (N pi_i)`.
    pub fn design_weights(&self) -> DesignWeights {
        let n = self.population_size as f64;
        DesignWeights(
            self.units
                .iter()
                .map(|u| 1.0 / (n * u.inclusion_prob))
                .collect(),
        )
    }

    /// Estimated population size `sum 1/pi_i`.
    pub fn estimated_population_size(&self) -> f64 {
        self.units.iter().map(|u| 1.0 / u.inclusion_prob).sum()
    }

    /// Ratio `max(pi_i) / min(pi_i)`, the spread bounded by the design regularity
    /// condition `C1 <= pi_i N / n <= C2`.
    pub fn inclusion_spread(&self) -> f64 {
        let (lo, hi) = self
            .units
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), u| {
                (lo.min(u.inclusion_prob), hi.max(u.inclusion_prob))
            });
        hi / lo
    }

    /// Drops the outcome of every nonrespondent.
    pub fn mask_nonrespondents(mut self) -> Self {
        for u in self.units.iter_mut().filter(|u| !u.responded) {
            u.outcome = None;
        }
        self
    }

    /// Keeps only the respondents; `N` is unchanged.
    pub fn respondents_only(&self) -> Self {
        Self {
            units: self.units.iter().filter(|u| u.responded).cloned().collect(),
            population_size: self.population_size,
            dimension: self.dimension,
        }
    }

    /// Position of the unit with the given id.
    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignWeights(pub Vec<f64>);

impl DesignWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingDesign {
    /// Simple random sampling without replacement of exactly `n` units.
    SimpleRandom { n: usize },
    /// Poisson sampling with `pi_i = expected_size * s_i / sum_j s_j`.
    PoissonPps {
        expected_size: f64,
        sizes: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct DrawnSample {
    pub sample: SurveyDataset,
    /// How many population units had their probability clipped to [`PI_CLIP`].
    pub clipped: usize,
}

/// First-order inclusion probabilities of a Poisson PPS design, after clipping.
pub fn pps_inclusion_probs(expected_size: f64, sizes: &[f64]) -> Result<(Vec<f64>, usize)> {
    if !(expected_size > 0.0) {
        return Err(Error::InvalidParameter("expected size must be positive".into()));
    }
    if let Some(s) = sizes.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!("size value {s} is not positive")));
    }
    let total: f64 = sizes.iter().sum();
    let mut clipped = 0;
    let probs = sizes
        .iter()
        .map(|s| {
            let p = expected_size * s / total;
            if p >= 1.0 {
                clipped += 1;
                PI_CLIP
            } else {
                p
            }
        })
        .collect();
    Ok((probs, clipped))
}

/// Draws a sample from a fully enumerated population.
///
/// Unit order is preserved and the drawn units carry their inclusion
/// probabilities. The same seed always yields the same sample.
pub fn draw_sample(
    population: &SurveyDataset,
    design: &SamplingDesign,
    seed: u64,
) -> Result<DrawnSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_sample_with(population, design, &mut rng)
}

pub fn draw_sample_with<R: Rng + ?Sized>(
    population: &SurveyDataset,
    design: &SamplingDesign,
    rng: &mut R,
) -> Result<DrawnSample> {
    let big_n = population.len();
    match design {
        SamplingDesign::SimpleRandom { n } => {
            let n = *n;
            if n > big_n {
                return Err(Error::SampleTooLarge {
                    n,
                    population: big_n,
                });
            }
            if n == 0 {
                return Err(Error::EmptySample);
            }
            let mut picks = index::sample(rng, big_n, n).into_vec();
            picks.sort_unstable();
            let pi = n as f64 / big_n as f64;
            let units = picks
                .into_iter()
                .map(|i| Unit {
                    inclusion_prob: pi,
                    ..population.units[i].clone()
                })
                .collect();
            Ok(DrawnSample {
                sample: SurveyDataset::new(units, population.population_size)?,
                clipped: 0,
            })
        }
        SamplingDesign::PoissonPps {
            expected_size,
            sizes,
        } => {
            if sizes.len() != big_n {
                return Err(Error::LengthMismatch {
                    what: "size values vs population",
                    left: sizes.len(),
                    right: big_n,
                });
            }
            let (probs, clipped) = pps_inclusion_probs(*expected_size, sizes)?;
            let units: Vec<Unit> = population
                .units
                .iter()
                .zip(&probs)
                .filter_map(|(u, &p)| {
                    rng.random_bool(p).then(|| Unit {
                        inclusion_prob: p,
                        ..u.clone()
                    })
                })
                .collect();
            if units.is_empty() {
                return Err(Error::EmptySample);
            }
            Ok(DrawnSample {
                sample: SurveyDataset::new(units, population.population_size)?,
                clipped,
            })
        }
    }
}

/// Horvitz-Thompson mean `N^-1 sum g(y_i) / pi_i`.
///
/// Every unit must be a respondent; use [`SurveyDataset::respondents_only`]
/// to restrict explicitly.
pub fn ht_estimate(data: &SurveyDataset, g: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for u in data.units() {
        let y = match (u.responded, u.outcome) {
            (true, Some(y)) => y,
            _ => return Err(Error::MissingOutcome { unit_id: u.id }),
        };
        total += g(y) / u.inclusion_prob;
    }
    Ok(total / data.population_size() as f64)
}

/// Hajek mean `sum g(y_i)/pi_i / sum 1/pi_i`.
pub fn hajek_estimate(data: &SurveyDataset, g: impl Fn(f64) -> f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for u in data.units() {
        let y = match (u.responded, u.outcome) {
            (true, Some(y)) => y,
            _ => return Err(Error::MissingOutcome { unit_id: u.id }),
        };
        num += g(y) / u.inclusion_prob;
        den += 1.0 / u.inclusion_prob;
    }
    Ok(num / den)
}
