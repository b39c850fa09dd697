//! Nested Bayesian optimization: an outer GP loop over outer-level parameters
//! maximizing the validation metric, and for every outer candidate a fresh
//! inner GP loop over inner-level parameters minimizing the training loss.
//! The outer observation for a candidate is the validation metric of the
//! inner record with the lowest training loss.
//!
//! Single-level and random-search baselines share the same record format.

mod compare;

use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{self, AcquisitionKind, Incumbent};
use crate::objective::Objective;
use crate::space::{Configuration, Level, LevelFilter, SearchSpace, SpaceError};
use crate::surrogate::GpModel;

pub use compare::{
    CellOutcome, ComparisonCell, ComparisonRow, ComparisonTable, ObjectiveColumn, RowSpec, ZeroBaseline,
    compare_configs, improvement_rate, median, round_half_up,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Bilevel,
    SingleLevel,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: Mode,
    pub outer_budget: usize,
    pub inner_budget: usize,
    pub init_outer: usize,
    pub init_inner: usize,
    pub acq_inner: AcquisitionKind,
    pub acq_outer: AcquisitionKind,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Bilevel,
            outer_budget: 50,
            inner_budget: 8,
            init_outer: 5,
            init_inner: 3,
            acq_inner: AcquisitionKind::Ei,
            acq_outer: AcquisitionKind::ucb(acquisition::DEFAULT_KAPPA),
            candidates: acquisition::DEFAULT_CANDIDATES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("{init} ({init_value}) must not exceed {budget} ({budget_value})")]
    InitExceedsBudget { init: &'static str, init_value: usize, budget: &'static str, budget_value: usize },
    #[error("{level} acquisition: {source}")]
    Acquisition { level: Level, source: acquisition::AcquisitionError },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("outer_budget", self.outer_budget),
            ("inner_budget", self.inner_budget),
            ("init_outer", self.init_outer),
            ("init_inner", self.init_inner),
            ("candidates", self.candidates),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::NotPositive(name));
        }
        if self.init_outer > self.outer_budget {
            return Err(ConfigError::InitExceedsBudget {
                init: "init_outer",
                init_value: self.init_outer,
                budget: "outer_budget",
                budget_value: self.outer_budget,
            });
        }
        if self.mode == Mode::Bilevel && self.init_inner > self.inner_budget {
            return Err(ConfigError::InitExceedsBudget {
                init: "init_inner",
                init_value: self.init_inner,
                budget: "inner_budget",
                budget_value: self.inner_budget,
            });
        }
        self.acq_inner.validate().map_err(|source| ConfigError::Acquisition { level: Level::Inner, source })?;
        self.acq_outer.validate().map_err(|source| ConfigError::Acquisition { level: Level::Outer, source })?;
        Ok(())
    }

    /// Objective calls a study with this config makes.
    pub fn total_evaluations(&self) -> usize {
        match self.mode {
            Mode::Bilevel => self.outer_budget * self.inner_budget,
            Mode::SingleLevel | Mode::Random => self.outer_budget,
        }
    }

    /// `EI-UCB` style label: inner acquisition first, then outer.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Bilevel => format!("{}-{}", self.acq_inner, self.acq_outer),
            Mode::SingleLevel => format!("single-level({})", self.acq_outer),
            Mode::Random => "random".to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// Non-finite floats are written as JSON `null` and read back as NaN.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Like `nan_as_null`, but `null` reads back as -inf (no ok evaluation yet).
mod series_nulls {
    use serde::{Deserialize, Deserializer, Serializer, ser::SerializeSeq};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&x.is_finite().then_some(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub outer_index: usize,
    /// -1 outside bilevel mode.
    pub inner_index: i64,
    pub config: Configuration,
    #[serde(with = "nan_as_null")]
    pub train_loss: f64,
    #[serde(with = "nan_as_null")]
    pub val_metric: f64,
    pub status: TrialStatus,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

/// Per-outer-candidate summary in bilevel mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterTrial {
    pub outer_index: usize,
    pub theta: Configuration,
    /// Index into `trials` of the inner record with minimal training loss.
    pub inner_argmin: Option<usize>,
    /// Validation metric fed to the outer GP (that record's `val_metric`).
    #[serde(with = "nan_as_null")]
    pub observation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub space: SearchSpace,
    pub trials: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outer_trials: Vec<OuterTrial>,
    pub best_config: Configuration,
    pub best_val: f64,
    /// Train loss of the trial that achieved `best_val`.
    pub best_train_loss: f64,
    #[serde(with = "series_nulls")]
    pub cumulative_best: Vec<f64>,
}

impl StudyResult {
    pub fn best_trial(&self) -> Option<&TrialRecord> {
        best_index(&self.trials).map(|i| &self.trials[i])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("study results serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid search space: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Space(Vec<SpaceError>),
    #[error("no evaluation succeeded ({} trials, all failed)", .trials.len())]
    NoSuccessfulTrials { trials: Vec<TrialRecord> },
}

/// Running maximum of `val_metric` over ok trials, one entry per trial.
/// Entries before the first ok trial are -inf.
pub fn cumulative_best(trials: &[TrialRecord]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    trials
        .iter()
        .map(|t| {
            if t.is_ok() && t.val_metric > best {
                best = t.val_metric;
            }
            best
        })
        .collect()
}

fn best_index(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if t.is_ok() && best.is_none_or(|b| t.val_metric > trials[b].val_metric) {
            best = Some(i);
        }
    }
    best
}

/// Study-scoped state: objective handle, generator and the growing log.
struct Runner<'a, O: ?Sized> {
    objective: &'a mut O,
    space: &'a SearchSpace,
    cfg: &'a StudyConfig,
    rng: ChaCha8Rng,
    trials: Vec<TrialRecord>,
}

impl<O: Objective + ?Sized> Runner<'_, O> {
    fn evaluate(&mut self, config: Configuration, outer_index: usize, inner_index: i64) -> usize {
        let started = Instant::now();
        let result = self.objective.evaluate(&config);
        let elapsed = started.elapsed().as_secs_f64();
        let wall_time = if self.objective.reports_wall_time() { elapsed } else { 0.0 };
        let record = match result {
            Ok(e) if e.is_finite() => TrialRecord {
                outer_index,
                inner_index,
                config,
                train_loss: e.train_loss,
                val_metric: e.val_metric,
                status: TrialStatus::Ok,
                wall_time,
                message: None,
            },
            other => {
                let message = match other {
                    Ok(_) => "objective returned non-finite values".to_owned(),
                    Err(e) => e.to_string(),
                };
                warn!("trial {outer_index}/{inner_index} failed: {message}");
                TrialRecord {
                    outer_index,
                    inner_index,
                    config,
                    train_loss: f64::NAN,
                    val_metric: f64::NAN,
                    status: TrialStatus::Failed,
                    wall_time,
                    message: Some(message),
                }
            }
        };
        self.trials.push(record);
        self.trials.len() - 1
    }

    /// Proposes the next point at `filter` from `(encoded, value)` data, or
    /// samples uniformly while fewer than `init` points were requested or no
    /// data is usable.
    fn suggest(
        &mut self,
        filter: LevelFilter,
        step: usize,
        init: usize,
        data: &[(Vec<f64>, f64)],
        acq: AcquisitionKind,
    ) -> Configuration {
        if step < init || data.is_empty() {
            return self.space.sample(filter, &mut self.rng);
        }
        let inputs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
        let outputs: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
        let incumbent = Incumbent::from_values(outputs.iter().copied()).expect("finite data");
        let fit_seed: u64 = self.rng.r#gen();
        let proposal =
            GpModel::fit(inputs, outputs, fit_seed).map_err(acquisition::AcquisitionError::from).and_then(|gp| {
                acquisition::propose(&gp, self.space, filter, acq, incumbent, self.cfg.candidates, &mut self.rng)
            });
        match proposal {
            Ok(config) => config,
            Err(e) => {
                warn!("surrogate proposal failed ({e}); sampling uniformly");
                self.space.sample(filter, &mut self.rng)
            }
        }
    }

    fn run_inner(&mut self, theta: &Configuration, outer_index: usize) -> Option<usize> {
        let filter = LevelFilter::Only(Level::Inner);
        let mut data: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut argmin: Option<usize> = None;
        for step in 0..self.cfg.inner_budget {
            let phi = self.suggest(filter, step, self.cfg.init_inner, &data, self.cfg.acq_inner);
            let encoded = self.space.encode(&phi, filter).expect("suggested configs are in-domain");
            let idx = self.evaluate(theta.merged(&phi), outer_index, step as i64);
            let record = &self.trials[idx];
            if record.is_ok() {
                // The inner GP maximizes the negated training loss.
                data.push((encoded, -record.train_loss));
                if argmin.is_none_or(|a| record.train_loss < self.trials[a].train_loss) {
                    argmin = Some(idx);
                }
            }
        }
        argmin
    }

    fn run_bilevel(&mut self) -> Vec<OuterTrial> {
        let filter = LevelFilter::Only(Level::Outer);
        let mut data: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut outer = Vec::with_capacity(self.cfg.outer_budget);
        for outer_index in 0..self.cfg.outer_budget {
            let theta = self.suggest(filter, outer_index, self.cfg.init_outer, &data, self.cfg.acq_outer);
            let inner_argmin = self.run_inner(&theta, outer_index);
            let observation = inner_argmin.map_or(f64::NAN, |i| self.trials[i].val_metric);
            if inner_argmin.is_some() {
                data.push((self.space.encode(&theta, filter).expect("in-domain"), observation));
            }
            debug!("outer {outer_index}: observation {observation}");
            outer.push(OuterTrial { outer_index, theta, inner_argmin, observation });
        }
        outer
    }

    fn run_single_level(&mut self) {
        let filter = LevelFilter::All;
        let mut data: Vec<(Vec<f64>, f64)> = Vec::new();
        for step in 0..self.cfg.outer_budget {
            let config = self.suggest(filter, step, self.cfg.init_outer, &data, self.cfg.acq_outer);
            let encoded = self.space.encode(&config, filter).expect("in-domain");
            let idx = self.evaluate(config, step, -1);
            if self.trials[idx].is_ok() {
                data.push((encoded, self.trials[idx].val_metric));
            }
        }
    }

    fn run_random(&mut self) {
        for step in 0..self.cfg.outer_budget {
            let config = self.space.sample(LevelFilter::All, &mut self.rng);
            self.evaluate(config, step, -1);
        }
    }
}

/// Runs one study. Failed evaluations consume budget but never enter GP data
/// or the cumulative best.
pub fn run_study<O: Objective + ?Sized>(
    objective: &mut O,
    space: &SearchSpace,
    cfg: &StudyConfig,
) -> Result<StudyResult, StudyError> {
    space.validate().map_err(StudyError::Space)?;
    cfg.validate()?;
    if cfg.mode == Mode::Bilevel {
        space.require_both_levels().map_err(ConfigError::from)?;
    }
    let mut runner = Runner { objective, space, cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), trials: Vec::new() };
    let outer_trials = match cfg.mode {
        Mode::Bilevel => runner.run_bilevel(),
        Mode::SingleLevel => {
            runner.run_single_level();
            Vec::new()
        }
        Mode::Random => {
            runner.run_random();
            Vec::new()
        }
    };
    let trials = runner.trials;
    let Some(best) = best_index(&trials) else {
        return Err(StudyError::NoSuccessfulTrials { trials });
    };
    Ok(StudyResult {
        config: cfg.clone(),
        space: space.clone(),
        best_config: trials[best].config.clone(),
        best_val: trials[best].val_metric,
        best_train_loss: trials[best].train_loss,
        cumulative_best: cumulative_best(&trials),
        outer_trials,
        trials,
    })
}

/// Inner loop alone for a fixed outer configuration: returns the inner
/// configuration with minimal training loss (if any evaluation succeeded)
/// and the records produced.
pub fn run_inner<O: Objective + ?Sized, R: Rng>(
    theta: &Configuration,
    objective: &mut O,
    space: &SearchSpace,
    cfg: &StudyConfig,
    rng: &mut R,
) -> Result<(Option<Configuration>, Vec<TrialRecord>), StudyError> {
    space.validate().map_err(StudyError::Space)?;
    cfg.validate()?;
    space.require_both_levels().map_err(ConfigError::from)?;
    for p in space.params_at(Level::Outer.into()) {
        if theta.get(&p.name).is_none() {
            return Err(ConfigError::Space(SpaceError::Missing(p.name.clone())).into());
        }
    }
    let mut runner = Runner { objective, space, cfg, rng: ChaCha8Rng::seed_from_u64(rng.r#gen()), trials: Vec::new() };
    let argmin = runner.run_inner(theta, 0);
    let phi = argmin.map(|i| space.restrict(&runner.trials[i].config, Level::Inner.into()));
    Ok((phi, runner.trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Builtin, BuiltinObjective, Evaluation, ObjectiveError};

    fn quadratic() -> (BuiltinObjective, SearchSpace) {
        let space = Builtin::QuadraticBilevel.default_space();
        (BuiltinObjective::new(Builtin::QuadraticBilevel, space.clone()).unwrap(), space)
    }

    fn small(mode: Mode, seed: u64) -> StudyConfig {
        StudyConfig {
            mode,
            outer_budget: 6,
            inner_budget: 4,
            init_outer: 2,
            init_inner: 2,
            candidates: 64,
            seed,
            ..Default::default()
        }
    }

    fn record(val: f64, ok: bool) -> TrialRecord {
        TrialRecord {
            outer_index: 0,
            inner_index: -1,
            config: Configuration::new(),
            train_loss: 0.0,
            val_metric: val,
            status: if ok { TrialStatus::Ok } else { TrialStatus::Failed },
            wall_time: 0.0,
            message: None,
        }
    }

    #[test]
    fn cumulative_best_is_running_max() {
        let trials: Vec<_> = [1.0, 3.0, 2.0].into_iter().map(|v| record(v, true)).collect();
        assert_eq!(cumulative_best(&trials), vec![1.0, 3.0, 3.0]);
        let with_failure = vec![record(f64::NAN, false), record(2.0, true), record(9.0, false)];
        assert_eq!(cumulative_best(&with_failure), vec![f64::NEG_INFINITY, 2.0, 2.0]);
    }

    #[test]
    fn bilevel_budget_and_observations() {
        let (mut obj, space) = quadratic();
        let cfg = small(Mode::Bilevel, 1);
        let result = run_study(&mut obj, &space, &cfg).unwrap();
        assert_eq!(result.trials.len(), cfg.outer_budget * cfg.inner_budget);
        assert_eq!(result.outer_trials.len(), cfg.outer_budget);
        for outer in &result.outer_trials {
            let idx = outer.inner_argmin.unwrap();
            let rec = &result.trials[idx];
            assert_eq!(rec.val_metric, outer.observation);
            let group: Vec<_> = result.trials.iter().filter(|t| t.outer_index == outer.outer_index).collect();
            assert_eq!(group.len(), cfg.inner_budget);
            assert!(group.iter().all(|t| t.train_loss >= rec.train_loss));
            assert!(group.iter().all(|t| t.config.get("theta") == outer.theta.get("theta")));
        }
        assert_eq!(result.best_val, *result.cumulative_best.last().unwrap());
        assert!(result.cumulative_best.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(result.best_trial().unwrap().config, result.best_config);
    }

    #[test]
    fn baselines_use_outer_budget() {
        let (mut obj, space) = quadratic();
        for mode in [Mode::SingleLevel, Mode::Random] {
            let cfg = small(mode, 2);
            let result = run_study(&mut obj, &space, &cfg).unwrap();
            assert_eq!(result.trials.len(), cfg.outer_budget);
            assert!(result.trials.iter().all(|t| t.inner_index == -1));
            assert!(result.outer_trials.is_empty());
        }
    }

    #[test]
    fn studies_are_deterministic() {
        for mode in [Mode::Bilevel, Mode::SingleLevel, Mode::Random] {
            let (mut a, space) = quadratic();
            let (mut b, _) = quadratic();
            let ra = run_study(&mut a, &space, &small(mode, 5)).unwrap();
            let rb = run_study(&mut b, &space, &small(mode, 5)).unwrap();
            assert_eq!(ra.to_json(), rb.to_json());
        }
    }

    #[test]
    fn json_round_trip() {
        let (mut obj, space) = quadratic();
        let result = run_study(&mut obj, &space, &small(Mode::Bilevel, 3)).unwrap();
        let back = StudyResult::from_json(&result.to_json()).unwrap();
        assert_eq!(back, result);
    }

    struct Flaky {
        calls: usize,
        fail_every: usize,
    }

    impl Objective for Flaky {
        fn evaluate(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError> {
            self.calls += 1;
            if self.calls.is_multiple_of(self.fail_every) {
                return Err(ObjectiveError::Reported("boom".into()));
            }
            let x = config.get("phi").unwrap().as_f64().unwrap();
            Ok(Evaluation::new(x, -x))
        }
    }

    #[test]
    fn failures_consume_budget_but_not_data() {
        let space = Builtin::QuadraticBilevel.default_space();
        let mut obj = Flaky { calls: 0, fail_every: 3 };
        let cfg = small(Mode::Bilevel, 4);
        let result = run_study(&mut obj, &space, &cfg).unwrap();
        assert_eq!(result.trials.len(), cfg.total_evaluations());
        let failed: Vec<_> = result.trials.iter().filter(|t| !t.is_ok()).collect();
        assert_eq!(failed.len(), cfg.total_evaluations() / 3);
        assert!(failed.iter().all(|t| t.message.as_deref() == Some("objective reported an error: boom")));
        assert!(result.trials[result.outer_trials[0].inner_argmin.unwrap()].is_ok());
        let json = result.to_json();
        assert!(json.contains("\"val_metric\": null"));
        assert_eq!(StudyResult::from_json(&json).unwrap().trials.len(), result.trials.len());
    }

    #[test]
    fn all_failures_is_a_study_error() {
        let space = Builtin::QuadraticBilevel.default_space();
        let mut obj = Flaky { calls: 0, fail_every: 1 };
        match run_study(&mut obj, &space, &small(Mode::Random, 0)) {
            Err(StudyError::NoSuccessfulTrials { trials }) => assert_eq!(trials.len(), 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = StudyConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.init_outer = 51;
        assert!(matches!(cfg.validate(), Err(ConfigError::InitExceedsBudget { .. })));
        cfg = StudyConfig { candidates: 0, ..Default::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::NotPositive("candidates")));
        cfg = StudyConfig { acq_outer: AcquisitionKind::ucb(-1.0), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Acquisition { level: Level::Outer, .. })));
        let (mut obj, _) = quadratic();
        let one_level = SearchSpace::new(vec![crate::space::ParamSpec::uniform("phi", 0.0, 1.0, Level::Inner)]);
        assert!(run_study(&mut obj, &one_level, &StudyConfig::default()).is_err());
    }

    #[test]
    fn labels_follow_inner_outer_order() {
        let cfg =
            StudyConfig { acq_inner: AcquisitionKind::Ei, acq_outer: AcquisitionKind::ucb(2.0), ..Default::default() };
        assert_eq!(cfg.label(), "EI-UCB");
        assert_eq!(StudyConfig { mode: Mode::Random, ..cfg.clone() }.label(), "random");
        assert_eq!(StudyConfig { mode: Mode::SingleLevel, ..cfg }.label(), "single-level(UCB)");
    }

    #[test]
    fn degenerate_inner_budget_returns_the_random_config() {
        let (mut obj, space) = quadratic();
        let cfg = StudyConfig { inner_budget: 1, init_inner: 1, ..small(Mode::Bilevel, 0) };
        let theta = Configuration::new().with("theta", 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (phi, records) = run_inner(&theta, &mut obj, &space, &cfg, &mut rng).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(phi.unwrap().get("phi"), records[0].config.get("phi"));
    }

    #[test]
    fn run_inner_requires_theta() {
        let (mut obj, space) = quadratic();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(run_inner(&Configuration::new(), &mut obj, &space, &small(Mode::Bilevel, 0), &mut rng).is_err());
    }
}
