//! Search spaces split into inner and outer levels, with a unit-cube encoding
//! used as Gaussian-process input.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Inner,
    Outer,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Inner => f.write_str("inner"),
            Level::Outer => f.write_str("outer"),
        }
    }
}

/// Which parameters an encode/decode/sample call covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelFilter {
    Only(Level),
    All,
}

impl LevelFilter {
    pub fn admits(self, level: Level) -> bool {
        match self {
            LevelFilter::Only(l) => l == level,
            LevelFilter::All => true,
        }
    }
}

impl From<Level> for LevelFilter {
    fn from(level: Level) -> Self {
        LevelFilter::Only(level)
    }
}

/// A parameter value: a real for continuous params, an atom for categoricals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Real(v) => Some(v),
            ParamValue::Text(_) => None,
        }
    }

    /// Atom equality used for categorical lookup; `8` and `8.0` are the same choice.
    pub fn same_atom(&self, other: &ParamValue) -> bool {
        match (self, other) {
            (ParamValue::Text(a), ParamValue::Text(b)) => a == b,
            (ParamValue::Text(_), _) | (_, ParamValue::Text(_)) => false,
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Real(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamKind {
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    Categorical { choices: Vec<ParamValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub level: Level,
}

impl ParamSpec {
    pub fn uniform(name: &str, low: f64, high: f64, level: Level) -> Self {
        Self { name: name.to_owned(), kind: ParamKind::Uniform { low, high }, level }
    }

    pub fn log_uniform(name: &str, low: f64, high: f64, level: Level) -> Self {
        Self { name: name.to_owned(), kind: ParamKind::LogUniform { low, high }, level }
    }

    pub fn categorical<V: Into<ParamValue>>(name: &str, choices: impl IntoIterator<Item = V>, level: Level) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::Categorical { choices: choices.into_iter().map(Into::into).collect() },
            level,
        }
    }

    /// Maps a domain value to `[0, 1]`.
    pub fn encode_value(&self, value: &ParamValue) -> Result<f64, SpaceError> {
        let out_of_domain = || SpaceError::OutOfDomain { name: self.name.clone(), value: value.to_string() };
        match &self.kind {
            ParamKind::Uniform { low, high } => {
                let v = value.as_f64().ok_or_else(out_of_domain)?;
                if !(v >= *low && v <= *high) {
                    return Err(out_of_domain());
                }
                Ok(((v - low) / (high - low)).clamp(0.0, 1.0))
            }
            ParamKind::LogUniform { low, high } => {
                let v = value.as_f64().ok_or_else(out_of_domain)?;
                if !(v >= *low && v <= *high) {
                    return Err(out_of_domain());
                }
                let (ll, lh) = (low.ln(), high.ln());
                Ok(((v.ln() - ll) / (lh - ll)).clamp(0.0, 1.0))
            }
            ParamKind::Categorical { choices } => {
                let idx = choices.iter().position(|c| c.same_atom(value)).ok_or_else(out_of_domain)?;
                Ok((idx as f64 + 0.5) / choices.len() as f64)
            }
        }
    }

    /// Inverse of [`ParamSpec::encode_value`]; `u` must lie in `[0, 1]`.
    pub fn decode_value(&self, u: f64) -> ParamValue {
        match &self.kind {
            ParamKind::Uniform { low, high } => ParamValue::Real((low + u * (high - low)).clamp(*low, *high)),
            ParamKind::LogUniform { low, high } => {
                let (ll, lh) = (low.ln(), high.ln());
                ParamValue::Real((ll + u * (lh - ll)).exp().clamp(*low, *high))
            }
            ParamKind::Categorical { choices } => {
                let k = choices.len();
                let idx = ((u * k as f64).floor() as usize).min(k - 1);
                choices[idx].clone()
            }
        }
    }

    /// Parses a value rendered with `Display`, as found in a CSV cell.
    pub fn parse_value(&self, text: &str) -> Result<ParamValue, SpaceError> {
        let bad = || SpaceError::OutOfDomain { name: self.name.clone(), value: text.to_owned() };
        match &self.kind {
            ParamKind::Uniform { .. } | ParamKind::LogUniform { .. } => {
                text.parse::<f64>().map(ParamValue::Real).map_err(|_| bad())
            }
            ParamKind::Categorical { choices } => {
                choices.iter().find(|c| c.to_string() == text).cloned().ok_or_else(bad)
            }
        }
    }

    fn check(&self, errors: &mut Vec<SpaceError>) {
        let name = &self.name;
        if name.trim().is_empty() {
            errors.push(SpaceError::EmptyName);
        }
        match &self.kind {
            ParamKind::Uniform { low, high } | ParamKind::LogUniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    errors.push(SpaceError::InvalidBounds { name: name.clone(), low: *low, high: *high });
                }
                if matches!(self.kind, ParamKind::LogUniform { .. }) && !(*low > 0.0) {
                    errors.push(SpaceError::NonPositiveLogLower { name: name.clone() });
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    errors.push(SpaceError::NoChoices { name: name.clone() });
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].iter().any(|p| p.same_atom(c)) {
                        errors.push(SpaceError::DuplicateChoice { name: name.clone(), choice: c.to_string() });
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("parameter name must be non-empty")]
    EmptyName,
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: bounds must be finite with low < high (got [{low}, {high}])")]
    InvalidBounds { name: String, low: f64, high: f64 },
    #[error("parameter `{name}`: log-uniform requires positive lower bound")]
    NonPositiveLogLower { name: String },
    #[error("parameter `{name}`: categorical needs at least one choice")]
    NoChoices { name: String },
    #[error("parameter `{name}`: duplicate choice `{choice}`")]
    DuplicateChoice { name: String, choice: String },
    #[error("search space has no {0}-level parameter")]
    MissingLevel(Level),
    #[error("configuration is missing parameter `{0}`")]
    Missing(String),
    #[error("parameter `{name}`: value `{value}` is outside its domain")]
    OutOfDomain { name: String, value: String },
    #[error("expected an encoded vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("encoded component {index} = {value} is outside [0, 1]")]
    ComponentOutOfRange { index: usize, value: f64 },
}

/// Concrete parameter assignments; may cover one level or the whole space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    assignments: BTreeMap<String, ParamValue>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.assignments.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<ParamValue>) {
        self.assignments.insert(name.into(), value.into());
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        self.set(name, value);
        self
    }

    /// Union of two configurations; entries in `other` win on conflict.
    pub fn merged(&self, other: &Configuration) -> Configuration {
        let mut out = self.clone();
        out.assignments.extend(other.assignments.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.assignments.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl<K: Into<String>, V: Into<ParamValue>> FromIterator<(K, V)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self { assignments: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    /// Builds a space without checking it; see [`SearchSpace::validate`].
    pub fn new(params: Vec<ParamSpec>) -> Self {
        Self { params }
    }

    pub fn validated(params: Vec<ParamSpec>) -> Result<Self, Vec<SpaceError>> {
        let space = Self::new(params);
        space.validate().map(|()| space)
    }

    /// Collects every invariant violation.
    pub fn validate(&self) -> Result<(), Vec<SpaceError>> {
        let mut errors = Vec::new();
        for (i, p) in self.params.iter().enumerate() {
            p.check(&mut errors);
            if self.params[..i].iter().any(|q| q.name == p.name) {
                errors.push(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        if errors.is_empty() { Ok(()) } else { Err(errors) }
    }

    /// Bilevel studies need both an inner and an outer parameter.
    pub fn require_both_levels(&self) -> Result<(), SpaceError> {
        for level in [Level::Inner, Level::Outer] {
            if self.dim(level.into()) == 0 {
                return Err(SpaceError::MissingLevel(level));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn params_at(&self, filter: LevelFilter) -> impl Iterator<Item = &ParamSpec> + '_ {
        self.params.iter().filter(move |p| filter.admits(p.level))
    }

    pub fn dim(&self, filter: LevelFilter) -> usize {
        self.params_at(filter).count()
    }

    pub fn encode(&self, config: &Configuration, filter: LevelFilter) -> Result<Vec<f64>, SpaceError> {
        self.params_at(filter)
            .map(|p| {
                let value = config.get(&p.name).ok_or_else(|| SpaceError::Missing(p.name.clone()))?;
                p.encode_value(value)
            })
            .collect()
    }

    pub fn decode(&self, vector: &[f64], filter: LevelFilter) -> Result<Configuration, SpaceError> {
        let expected = self.dim(filter);
        if vector.len() != expected {
            return Err(SpaceError::DimensionMismatch { expected, got: vector.len() });
        }
        if let Some((index, &value)) = vector.iter().enumerate().find(|(_, u)| !(0.0..=1.0).contains(*u)) {
            return Err(SpaceError::ComponentOutOfRange { index, value });
        }
        Ok(self.params_at(filter).zip(vector).map(|(p, &u)| (p.name.clone(), p.decode_value(u))).collect())
    }

    /// Draws each parameter uniformly in its encoded coordinate, then decodes.
    pub fn sample<R: Rng + ?Sized>(&self, filter: LevelFilter, rng: &mut R) -> Configuration {
        self.params_at(filter).map(|p| (p.name.clone(), p.decode_value(rng.gen_range(0.0..1.0)))).collect()
    }

    /// Keeps only the assignments at the given level.
    pub fn restrict(&self, config: &Configuration, filter: LevelFilter) -> Configuration {
        self.params_at(filter).filter_map(|p| config.get(&p.name).map(|v| (p.name.clone(), v.clone()))).collect()
    }

    /// Learning rate log-uniform in [1e-6, 1e-5], batch size in {8, 32} and
    /// weight decay uniform in [0, 0.1]. Learning rate and weight decay are
    /// inner-level; batch size is outer-level.
    pub fn fine_tuning_default() -> Self {
        Self::new(vec![
            ParamSpec::log_uniform("learning_rate", 1e-6, 1e-5, Level::Inner),
            ParamSpec::categorical("batch_size", [8i64, 32], Level::Outer),
            ParamSpec::uniform("weight_decay", 0.0, 0.1, Level::Inner),
        ])
    }
}
