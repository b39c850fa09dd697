//! Black-box objectives returning a training loss (lower is better) and a
//! validation metric (higher is better) for one full configuration.

mod builtin;
mod external;

use std::collections::BTreeMap;
use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, SearchSpace, SpaceError};

pub use builtin::{Builtin, BuiltinObjective, branin};
pub use external::{ExternalObjective, HANDSHAKE_PROTOCOL, format_request};

pub const DEFAULT_TIMEOUT_SECS: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub train_loss: f64,
    pub val_metric: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, f64>,
}

impl Evaluation {
    pub fn new(train_loss: f64, val_metric: f64) -> Self {
        Self { train_loss, val_metric, aux: BTreeMap::new() }
    }

    pub fn is_finite(&self) -> bool {
        self.train_loss.is_finite() && self.val_metric.is_finite()
    }
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("unknown builtin objective `{0}`")]
    UnknownBuiltin(String),
    #[error("builtin `{name}` needs {expected}")]
    UnsupportedSpace { name: &'static str, expected: &'static str },
    #[error("objective timed out after {0:?}")]
    Timeout(Duration),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("objective process exited: {0}")]
    ChildExit(String),
    #[error("failed to start objective process: {0}")]
    Spawn(#[source] io::Error),
    #[error("i/o error talking to objective process: {0}")]
    Io(#[from] io::Error),
    #[error("objective reported an error: {0}")]
    Reported(String),
    #[error("objective returned non-finite values")]
    NonFinite,
    #[error("invalid objective spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Anything that can score a full configuration.
pub trait Objective {
    fn evaluate(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError>;

    /// Whether measured call duration is meaningful for this objective. Pure
    /// in-process objectives return `false` and get a recorded wall time of 0.
    fn reports_wall_time(&self) -> bool {
        true
    }
}

impl<O: Objective + ?Sized> Objective for Box<O> {
    fn evaluate(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError> {
        (**self).evaluate(config)
    }

    fn reports_wall_time(&self) -> bool {
        (**self).reports_wall_time()
    }
}

/// Declarative description of an objective, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ObjectiveSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        noise_std: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout: f64,
    },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

impl ObjectiveSpec {
    pub fn builtin(name: &str) -> Self {
        ObjectiveSpec::Builtin { builtin: name.to_owned(), noise_std: 0.0 }
    }

    pub fn label(&self) -> String {
        match self {
            ObjectiveSpec::Builtin { builtin, noise_std } if *noise_std > 0.0 => format!("{builtin}+noise"),
            ObjectiveSpec::Builtin { builtin, .. } => builtin.clone(),
            ObjectiveSpec::External { command, .. } => command.first().cloned().unwrap_or_default(),
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        match self {
            ObjectiveSpec::Builtin { builtin, noise_std } => {
                builtin.parse::<Builtin>()?;
                if !(*noise_std >= 0.0) || !noise_std.is_finite() {
                    return Err(ObjectiveError::InvalidSpec("noise_std must be non-negative".into()));
                }
                Ok(())
            }
            ObjectiveSpec::External { command, timeout } => {
                if command.is_empty() || command[0].is_empty() {
                    return Err(ObjectiveError::InvalidSpec("command must name an executable".into()));
                }
                if !(*timeout > 0.0) || !timeout.is_finite() {
                    return Err(ObjectiveError::InvalidSpec("timeout must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// The builtin's native space, if this is a builtin.
    pub fn default_space(&self) -> Option<SearchSpace> {
        match self {
            ObjectiveSpec::Builtin { builtin, .. } => builtin.parse::<Builtin>().ok().map(|b| b.default_space()),
            ObjectiveSpec::External { .. } => None,
        }
    }

    /// Binds the spec to a space. `seed` feeds the noise of noisy builtins.
    pub fn instantiate(&self, space: &SearchSpace, seed: u64) -> Result<Box<dyn Objective + Send>, ObjectiveError> {
        self.validate()?;
        match self {
            ObjectiveSpec::Builtin { builtin, noise_std } => {
                let problem: Builtin = builtin.parse()?;
                Ok(Box::new(BuiltinObjective::new(problem, space.clone())?.with_noise(*noise_std, seed)))
            }
            ObjectiveSpec::External { command, timeout } => {
                Ok(Box::new(ExternalObjective::new(command.clone(), space.clone(), Duration::from_secs_f64(*timeout))))
            }
        }
    }
}

/// Evaluates one configuration against a spec, spawning and tearing down the
/// objective as needed.
pub fn evaluate(
    spec: &ObjectiveSpec,
    space: &SearchSpace,
    config: &Configuration,
    seed: u64,
) -> Result<Evaluation, ObjectiveError> {
    spec.instantiate(space, seed)?.evaluate(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parses_from_toml() {
        let b: ObjectiveSpec = toml::from_str("builtin = \"branin\"").unwrap();
        assert_eq!(b, ObjectiveSpec::builtin("branin"));
        let e: ObjectiveSpec = toml::from_str("command = [\"python3\", \"adapter.py\"]\ntimeout = 5.0").unwrap();
        assert_eq!(e, ObjectiveSpec::External { command: vec!["python3".into(), "adapter.py".into()], timeout: 5.0 });
        let d: ObjectiveSpec = toml::from_str("command = [\"x\"]").unwrap();
        assert!(matches!(d, ObjectiveSpec::External { timeout, .. } if timeout == DEFAULT_TIMEOUT_SECS));
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(ObjectiveSpec::builtin("nope").validate(), Err(ObjectiveError::UnknownBuiltin(_))));
        let bad = ObjectiveSpec::External { command: vec![], timeout: 1.0 };
        assert!(bad.validate().is_err());
        let bad = ObjectiveSpec::External { command: vec!["x".into()], timeout: 0.0 };
        assert!(bad.validate().is_err());
    }
}
