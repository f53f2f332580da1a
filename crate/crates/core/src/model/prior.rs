use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Prior of one parameter component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    /// `Beta(alpha, beta)` over a probability.
    Beta { alpha: f64, beta: f64 },
    /// `N(mean, sd²)`.
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    pub fn beta(alpha: f64, beta: f64) -> Self {
        Prior::Beta { alpha, beta }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Prior::Normal { mean, sd }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTemplate(vec![format!("invalid prior hyperparameters {self:?}")]))
        }
    }

    pub fn is_probability(&self) -> bool {
        matches!(self, Prior::Beta { .. })
    }

    /// Closed support interval, `[0, 1]` for Beta and the whole line for Normal.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Prior::Beta { .. } => (0.0, 1.0),
            Prior::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match self {
            Prior::Beta { .. } => (0.0..=1.0).contains(&x),
            Prior::Normal { .. } => x.is_finite(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Beta { alpha, beta } => alpha / (alpha + beta),
            Prior::Normal { mean, .. } => mean,
        }
    }

    /// Mode, falling back to the mean for Beta shapes without an interior mode.
    pub fn mode(&self) -> f64 {
        match *self {
            Prior::Beta { alpha, beta } if alpha > 1.0 && beta > 1.0 => (alpha - 1.0) / (alpha + beta - 2.0),
            Prior::Beta { .. } => self.mean(),
            Prior::Normal { mean, .. } => mean,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Prior::Beta { alpha, beta } => {
                let n = alpha + beta;
                (alpha * beta / (n * n * (n + 1.0))).sqrt()
            }
            Prior::Normal { sd, .. } => sd,
        }
    }

    /// Log density; `-∞` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
                let term = |shape: f64, v: f64| if shape == 1.0 { 0.0 } else { (shape - 1.0) * v.ln() };
                norm + term(alpha, x) + term(beta, 1.0 - x)
            }
            Prior::Normal { mean, sd } => {
                if !x.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let u = (x - mean) / sd;
                -0.5 * u * u - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Beta { alpha, beta } => Beta::new(alpha, beta).expect("validated Beta").sample(rng),
            Prior::Normal { mean, sd } => Normal::new(mean, sd).expect("validated Normal").sample(rng),
        }
    }

    /// Conjugate update of a Beta prior with Bernoulli counts.
    pub fn beta_posterior(&self, successes: f64, failures: f64) -> Option<Prior> {
        match *self {
            Prior::Beta { alpha, beta } => Some(Prior::Beta { alpha: alpha + successes, beta: beta + failures }),
            Prior::Normal { .. } => None,
        }
    }
}
