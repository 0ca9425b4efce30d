use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MonteCarlo,
    Quadrature,
    ClosedForm,
}

/// A numeric result with its uncertainty.
///
/// Monte Carlo estimates carry the empirical standard error of the mean.
/// Quadrature and closed-form values carry a deterministic error bound in
/// the same field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub method: Method,
}

/// Error bound attached to values computed from erfc and elementary functions.
pub const CLOSED_FORM_BOUND: f64 = 1e-14;

impl Estimate {
    pub fn closed_form(value: f64) -> Self {
        Self { value, std_error: CLOSED_FORM_BOUND * value.abs().max(1.0), samples: 0, method: Method::ClosedForm }
    }

    pub fn quadrature(value: f64, bound: f64) -> Self {
        Self { value, std_error: bound.abs(), samples: 0, method: Method::Quadrature }
    }

    pub fn monte_carlo(value: f64, std_error: f64, samples: u64) -> Self {
        Self { value, std_error, samples, method: Method::MonteCarlo }
    }

    /// Combined error of two independent results: root-sum-square when
    /// either side is random, plain sum when both are deterministic bounds.
    pub fn combined_error(&self, other: &Estimate) -> f64 {
        if self.method == Method::MonteCarlo || other.method == Method::MonteCarlo {
            self.std_error.hypot(other.std_error)
        } else {
            self.std_error + other.std_error
        }
    }

    fn merged_method(&self, other: &Estimate) -> Method {
        use Method::*;
        match (self.method, other.method) {
            (MonteCarlo, _) | (_, MonteCarlo) => MonteCarlo,
            (Quadrature, _) | (_, Quadrature) => Quadrature,
            _ => ClosedForm,
        }
    }

    pub fn add(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            std_error: self.combined_error(other),
            samples: self.samples.max(other.samples),
            method: self.merged_method(other),
        }
    }

    pub fn sub(&self, other: &Estimate) -> Estimate {
        Estimate { value: self.value - other.value, ..self.add(other) }
    }

    pub fn scale(&self, c: f64) -> Estimate {
        Estimate { value: c * self.value, std_error: c.abs() * self.std_error, ..*self }
    }

    /// `|value - target| <= k * std_error`, with a floor of a few ulps so that
    /// exact results compare equal to exact targets.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        let floor = 4.0 * f64::EPSILON * target.abs().max(1.0);
        (self.value - target).abs() <= k * self.std_error + floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Deterministic quadrature where the geometry allows it, Monte Carlo otherwise.
    Auto,
    MonteCarlo,
    Quadrature,
}

/// Sample count, root seed and evaluation mode for an integrating operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub samples: u64,
    pub seed: u64,
    pub mode: Mode,
}

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

impl Budget {
    pub fn auto(samples: u64, seed: u64) -> Self {
        Self { samples, seed, mode: Mode::Auto }
    }

    pub fn monte_carlo(samples: u64, seed: u64) -> Self {
        Self { samples, seed, mode: Mode::MonteCarlo }
    }

    pub fn quadrature() -> Self {
        Self { samples: 0, seed: DEFAULT_SEED, mode: Mode::Quadrature }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub(crate) fn require_samples(&self) -> Result<u64> {
        if self.samples == 0 {
            Err(Error::EmptyBudget)
        } else {
            Ok(self.samples)
        }
    }
}
