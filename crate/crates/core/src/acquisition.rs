//! Expected improvement and upper confidence bound scores, and candidate-set
//! maximization. Everything here maximizes; minimization problems are handled
//! by negating observations before the surrogate is fitted.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::space::{Configuration, LevelFilter, SearchSpace, SpaceError};
use crate::surrogate::{GpError, GpModel};

pub const DEFAULT_KAPPA: f64 = 2.0;
pub const DEFAULT_CANDIDATES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcquisitionError {
    #[error("acquisition inputs must be finite")]
    NonFinite,
    #[error("standard deviation must be non-negative")]
    NegativeStd,
    #[error("kappa must be positive (got {0})")]
    NonPositiveKappa(f64),
    #[error("candidate count must be positive")]
    NoCandidates,
    #[error("unknown acquisition `{0}` (expected `ei`, `ucb` or `ucb:<kappa>`)")]
    Unknown(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Surrogate(#[from] GpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    Ucb {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl AcquisitionKind {
    pub fn ucb(kappa: f64) -> Self {
        AcquisitionKind::Ucb { kappa }
    }

    pub fn validate(&self) -> Result<(), AcquisitionError> {
        match *self {
            AcquisitionKind::Ucb { kappa } if !(kappa > 0.0) || !kappa.is_finite() => {
                Err(AcquisitionError::NonPositiveKappa(kappa))
            }
            _ => Ok(()),
        }
    }

    pub fn score<T: Scalar>(&self, mean: T, std: T, incumbent: Incumbent) -> Result<T, AcquisitionError> {
        match *self {
            AcquisitionKind::Ei => ei_score(mean, std, incumbent),
            AcquisitionKind::Ucb { kappa } => ucb_score(mean, std, T::of(kappa)),
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcquisitionKind::Ei => f.write_str("EI"),
            AcquisitionKind::Ucb { .. } => f.write_str("UCB"),
        }
    }
}

impl FromStr for AcquisitionKind {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.split_once(':') {
            None if lower == "ei" => AcquisitionKind::Ei,
            None if lower == "ucb" => AcquisitionKind::ucb(DEFAULT_KAPPA),
            Some(("ucb", k)) => AcquisitionKind::ucb(k.parse().map_err(|_| AcquisitionError::Unknown(s.to_owned()))?),
            _ => return Err(AcquisitionError::Unknown(s.to_owned())),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Best observed objective so far, in the maximize convention.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Incumbent(pub f64);

impl Incumbent {
    /// Maximum over finite values; `None` when there are none.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().filter(|v| v.is_finite()).reduce(f64::max).map(Incumbent)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected positive excess of a Gaussian `N(mean, std²)` over the incumbent.
pub fn ei_score<T: Scalar>(mean: T, std: T, incumbent: Incumbent) -> Result<T, AcquisitionError> {
    let (m, s, best) = (mean.as_f64(), std.as_f64(), incumbent.0);
    if !m.is_finite() || !s.is_finite() || !best.is_finite() {
        return Err(AcquisitionError::NonFinite);
    }
    if s < 0.0 {
        return Err(AcquisitionError::NegativeStd);
    }
    let improvement = m - best;
    if s == 0.0 {
        return Ok(T::of(improvement.max(0.0)));
    }
    let z = improvement / s;
    let ei = improvement * normal_cdf(z) + s * normal_pdf(z);
    Ok(T::of(ei.max(0.0)))
}

/// `mean + kappa * std`.
pub fn ucb_score<T: Scalar>(mean: T, std: T, kappa: T) -> Result<T, AcquisitionError> {
    if !mean.is_finite() || !std.is_finite() || !kappa.is_finite() {
        return Err(AcquisitionError::NonFinite);
    }
    if std < T::zero() {
        return Err(AcquisitionError::NegativeStd);
    }
    if !(kappa > T::zero()) {
        return Err(AcquisitionError::NonPositiveKappa(kappa.as_f64()));
    }
    Ok(mean + kappa * std)
}

/// Scores `candidates` random configurations at `filter` and returns the
/// argmax. Ties go to the lowest candidate index.
pub fn propose<T: Scalar, R: Rng + ?Sized>(
    model: &GpModel<T>,
    space: &SearchSpace,
    filter: LevelFilter,
    acq: AcquisitionKind,
    incumbent: Incumbent,
    candidates: usize,
    rng: &mut R,
) -> Result<Configuration, AcquisitionError> {
    if candidates == 0 {
        return Err(AcquisitionError::NoCandidates);
    }
    acq.validate()?;
    let mut best: Option<(Configuration, T)> = None;
    for _ in 0..candidates {
        let config = space.sample(filter, rng);
        let x: Vec<T> = space.encode(&config, filter)?.into_iter().map(T::of).collect();
        let (mean, std) = model.predict(&x)?;
        let score = acq.score(mean, std, incumbent)?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((config, score));
        }
    }
    Ok(best.expect("candidates > 0").0)
}
