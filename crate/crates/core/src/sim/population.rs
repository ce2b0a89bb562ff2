//! Synthetic finite populations with a logistic response mechanism.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::Basis;
use crate::smoothers::gaussian_cdf;
use crate::survey::{SurveyDataset, Unit};

/// Accepted band for the realized response rate of a generated population.
pub const RESPONSE_RATE_BAND: (f64, f64) = (0.70, 0.80);

/// Outcome models. `P1`..`P3` are linear in 2, 4 and 6 covariates; `P4`..`P6`
/// add `x1^2 + x2^2 - 2/3`. `Constant` has `y = 1` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PopulationId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    Constant,
}

impl PopulationId {
    /// The six outcome models, without the constant test population.
    pub const STUDY: [PopulationId; 6] = [Self::P1, Self::P2, Self::P3, Self::P4, Self::P5, Self::P6];

    /// Covariates entering the outcome and the response model.
    pub fn active_covariates(self) -> usize {
        match self {
            Self::P1 | Self::P4 | Self::Constant => 2,
            Self::P2 | Self::P5 => 4,
            Self::P3 | Self::P6 => 6,
        }
    }

    fn quadratic(self) -> bool {
        matches!(self, Self::P4 | Self::P5 | Self::P6)
    }

    /// `E(y | x)` for the active covariates.
    pub fn conditional_mean(self, x: &[f64]) -> f64 {
        if self == Self::Constant {
            return 1.0;
        }
        let intercept = if self.active_covariates() == 2 { -1.0 } else { -1.5 };
        let linear: f64 = x.iter().sum();
        let quad = if self.quadratic() {
            x[0] * x[0] + x[1] * x[1] - 2.0 / 3.0
        } else {
            0.0
        };
        intercept + linear + quad
    }

    /// Standard deviation of the additive error.
    pub fn noise_sd(self) -> f64 {
        if self == Self::Constant {
            0.0
        } else {
            1.0
        }
    }

    /// Matching basis of the replication study: second order when it
    /// contains the true mean, first order otherwise.
    pub fn default_basis(self) -> Basis {
        if self.quadratic() {
            Basis::FirstOrder
        } else {
            Basis::FirstAndSecondOrder
        }
    }
}

impl fmt::Display for PopulationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for PopulationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "P1" => Self::P1,
            "P2" => Self::P2,
            "P3" => Self::P3,
            "P4" => Self::P4,
            "P5" => Self::P5,
            "P6" => Self::P6,
            "CONSTANT" => Self::Constant,
            _ => return Err(Error::Config(format!("unknown population {s:?}"))),
        })
    }
}

/// A generated population with its fixed finite-population parameters.
///
/// `data` holds every unit with `inclusion_prob = 1`, the outcome always
/// present and `responded` set from the response mechanism.
#[derive(Debug, Clone)]
pub struct Population {
    pub id: PopulationId,
    pub data: SurveyDataset,
    /// Size variable for the PPS design, `log(|y + nu| + 4)`.
    pub sizes: Vec<f64>,
    pub mean: f64,
    /// Threshold `c` with exactly `floor(0.8 N)` outcomes below it.
    pub threshold: f64,
    /// Share of outcomes strictly below `threshold`.
    pub proportion: f64,
    pub median: f64,
    pub response_rate: f64,
}

impl Population {
    pub fn size(&self) -> usize {
        self.data.len()
    }

    /// `E{g(y) | x}` for the mean and the `y < threshold` indicator.
    pub fn conditional_mean_of(&self, x: &[f64], indicator_below: Option<f64>) -> f64 {
        let m = self.id.conditional_mean(x);
        match indicator_below {
            None => m,
            Some(c) if self.id.noise_sd() == 0.0 => f64::from(u8::from(m < c)),
            Some(c) => gaussian_cdf((c - m) / self.id.noise_sd()),
        }
    }

    pub fn outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.units().iter().map(|u| u.outcome.expect("population outcomes are complete"))
    }
}

/// Generates `size` units from model `id`.
///
/// `x1..x3 ~ U[0, 1]`, `x4..x6, e, nu ~ N(0, 1)`, all independent; only the
/// active covariates are kept. `delta ~ Bernoulli(expit(sum of active x))`,
/// or 1 for every unit when `full_response` is set.
pub fn generate_population(id: PopulationId, size: usize, seed: u64, full_response: bool) -> Result<Population> {
    if size < 2 {
        return Err(Error::InvalidParameter("population needs at least two units".into()));
    }
    let p = id.active_covariates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units = Vec::with_capacity(size);
    let mut sizes = Vec::with_capacity(size);
    let mut responding = 0usize;
    for i in 0..size {
        let mut x = [0.0; 6];
        for v in &mut x[..3] {
            *v = rng.random::<f64>();
        }
        for v in &mut x[3..] {
            *v = rng.sample(StandardNormal);
        }
        let e: f64 = rng.sample(StandardNormal);
        let nu: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let x = x[..p].to_vec();
        let y = id.conditional_mean(&x) + id.noise_sd() * e;
        let eta: f64 = x.iter().sum();
        let responded = full_response || u < 1.0 / (1.0 + (-eta).exp());
        responding += usize::from(responded);
        sizes.push(((y + nu).abs() + 4.0).ln());
        units.push(Unit {
            id: i as u64,
            covariates: x,
            outcome: Some(y),
            responded,
            inclusion_prob: 1.0,
        });
    }
    let response_rate = responding as f64 / size as f64;
    let (low, high) = RESPONSE_RATE_BAND;
    if !full_response && !(low..=high).contains(&response_rate) {
        return Err(Error::ResponseRate {
            rate: response_rate,
            low,
            high,
        });
    }

    let mut sorted: Vec<f64> = units.iter().map(|u| u.outcome.unwrap()).collect();
    let mean = sorted.iter().sum::<f64>() / size as f64;
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[size * 4 / 5];
    let proportion = sorted.iter().filter(|&&y| y < threshold).count() as f64 / size as f64;
    let median = sorted[size.div_ceil(2) - 1];
    let data = SurveyDataset::new(units, size)?;
    Ok(Population {
        id,
        data,
        sizes,
        mean,
        threshold,
        proportion,
        median,
        response_rate,
    })
}
