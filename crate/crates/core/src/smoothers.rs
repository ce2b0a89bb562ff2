//! Gaussian kernel plug-ins used by the variance procedures: Nadaraya-Watson
//! regression on the scalar matching variable, a weighted density, a smoothed
//! CDF, and the derivative of the smoothed quantile estimating function.
//!
//! Density and CDF estimates are normalized by the total weight, so the
//! smoothed CDF tends to exactly one.

use std::f64::consts::FRAC_1_SQRT_2;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Weighted kernel mass below which a regression query is treated as outside
/// the data and answered by the nearest training point.
pub const MASS_FLOOR: f64 = 1e-300;

/// Smallest acceptable estimating-function derivative. The quantile variance
/// divides by its square.
pub const DERIVATIVE_FLOOR: f64 = 1e-6;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Standard normal distribution function, the integrated Gaussian kernel.
#[inline]
pub fn gaussian_cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    bandwidth: f64,
}

impl KernelConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(Self { bandwidth })
    }

    /// `h = scale * n^(-1/5)`; the default scale is 1.5.
    pub fn rule_of_thumb(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        Self::new(scale * (n as f64).powf(-0.2))
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

/// One evaluation of a [`SmoothedCurve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveValue {
    pub value: f64,
    /// The kernel mass underflowed and the nearest training response was used.
    pub degenerate: bool,
}

/// Nadaraya-Watson fit over `(location, response, weight)` triples.
#[derive(Debug, Clone)]
pub struct SmoothedCurve {
    locations: Vec<f64>,
    responses: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl SmoothedCurve {
    pub fn evaluate(&self, q: f64) -> CurveValue {
        let inv_h = 1.0 / self.bandwidth;
        let mut num = 0.0;
        let mut den = 0.0;
        for ((m, z), w) in self.locations.iter().zip(&self.responses).zip(&self.weights) {
            let u = (q - m) * inv_h;
            let k = w * (-0.5 * u * u).exp();
            num += k * z;
            den += k;
        }
        // The 1/sqrt(2 pi) factor cancels in the ratio; apply it only for the floor.
        if den * INV_SQRT_2PI > MASS_FLOOR {
            CurveValue {
                value: num / den,
                degenerate: false,
            }
        } else {
            CurveValue {
                value: self.nearest_response(q),
                degenerate: true,
            }
        }
    }

    /// Evaluates at every query; also returns how many were degenerate.
    pub fn evaluate_many(&self, queries: &[f64]) -> (Vec<f64>, usize) {
        let mut degenerate = 0;
        let values = queries
            .iter()
            .map(|&q| {
                let v = self.evaluate(q);
                degenerate += usize::from(v.degenerate);
                v.value
            })
            .collect();
        (values, degenerate)
    }

    fn nearest_response(&self, q: f64) -> f64 {
        let mut best = 0;
        for (i, m) in self.locations.iter().enumerate() {
            if (m - q).abs() < (self.locations[best] - q).abs() {
                best = i;
            }
        }
        self.responses[best]
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

/// Fits `q -> sum w_i K((q - m_i)/h) z_i / sum w_i K((q - m_i)/h)`.
pub fn kernel_regression(points: &[(f64, f64, f64)], config: KernelConfig) -> Result<SmoothedCurve> {
    if points.is_empty() {
        return Err(Error::NoRespondents);
    }
    if points.iter().any(|&(_, _, w)| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter("kernel weights must be non-negative".into()));
    }
    if !points.iter().any(|&(_, _, w)| w > 0.0) {
        return Err(Error::ZeroWeight);
    }
    Ok(SmoothedCurve {
        locations: points.iter().map(|p| p.0).collect(),
        responses: points.iter().map(|p| p.1).collect(),
        weights: points.iter().map(|p| p.2).collect(),
        bandwidth: config.bandwidth(),
    })
}

fn total_weight(points: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::ZeroWeight)
    }
}

/// `f(xi) = (sum w_i)^-1 h^-1 sum w_i K((xi - y_i)/h)` over `(y_i, w_i)`.
pub fn kernel_density(points: &[(f64, f64)], config: KernelConfig, xi: f64) -> Result<f64> {
    let total = total_weight(points)?;
    let h = config.bandwidth();
    let s: f64 = points
        .iter()
        .map(|&(y, w)| w * gaussian_kernel((xi - y) / h))
        .sum();
    Ok(s / (total * h))
}

/// `F(xi) = (sum w_i)^-1 sum w_i Phi((xi - y_i)/h)`.
pub fn smoothed_cdf(points: &[(f64, f64)], config: KernelConfig, xi: f64) -> Result<f64> {
    let total = total_weight(points)?;
    let h = config.bandwidth();
    let s: f64 = points
        .iter()
        .map(|&(y, w)| w * gaussian_cdf((xi - y) / h))
        .sum();
    Ok(s / total)
}

/// Derivative of the smoothed quantile estimating function at `xi`.
///
/// For the indicator score the derivative of the kernel-smoothed
/// `F(xi) - alpha` is the weighted kernel density of the donor-weighted
/// outcomes, with weights `delta_i (1 + k_i) / pi_i`. Values below
/// [`DERIVATIVE_FLOOR`] are reported as a flat estimating function.
pub fn s_derivative(points: &[(f64, f64)], config: KernelConfig, xi: f64) -> Result<f64> {
    let d = kernel_density(points, config, xi)?;
    if d < DERIVATIVE_FLOOR {
        return Err(Error::FlatEstimatingFunction {
            derivative: d,
            floor: DERIVATIVE_FLOOR,
        });
    }
    Ok(d)
}
