//! Experiment config files (TOML). See `configs/` and the README for the schema.
//!
//! Errors carry the file path and, where the offending value can be located,
//! its line number, so a bad config points at the line to fix.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::acquisition::AcquisitionKind;
use crate::bilevel::{ConfigError, Mode, RowSpec, StudyConfig};
use crate::objective::ObjectiveSpec;
use crate::report::ReferenceRow;
use crate::space::{ParamKind, ParamSpec, ParamValue, SearchSpace, SpaceError};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFileError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigFileError {}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SeedList {
    Count(u64),
    List(Vec<u64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    kind: String,
    low: Option<f64>,
    high: Option<f64>,
    choices: Option<Vec<ParamValue>>,
    level: crate::space::Level,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    objectives: Option<Vec<Spanned<ObjectiveSpec>>>,
    #[serde(default)]
    pairings: Vec<Spanned<String>>,
    #[serde(default)]
    baselines: Vec<Spanned<String>>,
    baseline: Option<Spanned<String>>,
    single_level_budget: Option<Spanned<usize>>,
    reference_baseline: Option<String>,
    #[serde(default)]
    reference: Vec<ReferenceRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    mode: Option<Mode>,
    outer_budget: Option<Spanned<usize>>,
    inner_budget: Option<Spanned<usize>>,
    init_outer: Option<Spanned<usize>>,
    init_inner: Option<Spanned<usize>>,
    acq_inner: Option<Spanned<String>>,
    acq_outer: Option<Spanned<String>>,
    candidates: Option<Spanned<usize>>,
    seed: Option<u64>,
    seeds: Option<Spanned<SeedList>>,
    output_dir: Option<String>,
    objective: Option<Spanned<ObjectiveSpec>>,
    #[serde(default)]
    param: Vec<Spanned<RawParam>>,
    compare: Option<Spanned<RawCompare>>,
}

/// One objective column of a comparison, bound to its space.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareColumn {
    pub objective: ObjectiveSpec,
    pub space: SearchSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSection {
    pub columns: Vec<CompareColumn>,
    pub rows: Vec<RowSpec>,
    /// Index into `rows`.
    pub baseline: usize,
    pub references: Vec<ReferenceRow>,
    pub reference_baseline: Option<String>,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub study: StudyConfig,
    pub objective: Option<ObjectiveSpec>,
    pub space: Option<SearchSpace>,
    pub seeds: Vec<u64>,
    /// Already resolved against the config file's directory.
    pub output_dir: Option<PathBuf>,
    pub compare: Option<CompareSection>,
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigFileError {
        ConfigFileError {
            path: self.path.to_owned(),
            line: span.map(|s| self.line_of(s.start)),
            message: message.into(),
        }
    }
}

fn parse_param(src: &Source<'_>, raw: &Spanned<RawParam>) -> Result<ParamSpec, ConfigFileError> {
    let p = raw.get_ref();
    let at = |msg: String| src.err(Some(raw.span()), format!("parameter `{}`: {msg}", p.name));
    let bounds = || match (p.low, p.high) {
        (Some(low), Some(high)) => Ok((low, high)),
        _ => Err(at(format!("`{}` needs both `low` and `high`", p.kind))),
    };
    let kind = match p.kind.as_str() {
        "uniform" => {
            let (low, high) = bounds()?;
            ParamKind::Uniform { low, high }
        }
        "log-uniform" => {
            let (low, high) = bounds()?;
            ParamKind::LogUniform { low, high }
        }
        "categorical" => ParamKind::Categorical {
            choices: p.choices.clone().ok_or_else(|| at("`categorical` needs `choices`".into()))?,
        },
        other => return Err(at(format!("unknown kind `{other}` (expected uniform, log-uniform or categorical)"))),
    };
    let numeric = matches!(kind, ParamKind::Uniform { .. } | ParamKind::LogUniform { .. });
    if numeric && p.choices.is_some() {
        return Err(at("`choices` only applies to categorical parameters".into()));
    }
    if !numeric && (p.low.is_some() || p.high.is_some()) {
        return Err(at("`low`/`high` do not apply to categorical parameters".into()));
    }
    Ok(ParamSpec { name: p.name.clone(), kind, level: p.level })
}

fn parse_space(src: &Source<'_>, params: &[Spanned<RawParam>]) -> Result<Option<SearchSpace>, ConfigFileError> {
    if params.is_empty() {
        return Ok(None);
    }
    let specs = params.iter().map(|p| parse_param(src, p)).collect::<Result<Vec<_>, _>>()?;
    let space = SearchSpace::new(specs);
    if let Err(errors) = space.validate() {
        let first = &errors[0];
        let span = space_error_param(first)
            .and_then(|name| params.iter().find(|p| p.get_ref().name == name).map(|p| p.span()));
        let mut message = first.to_string();
        if errors.len() > 1 {
            message.push_str(&format!(" (and {} more problem(s))", errors.len() - 1));
        }
        return Err(src.err(span, message));
    }
    Ok(Some(space))
}

fn space_error_param(e: &SpaceError) -> Option<&str> {
    match e {
        SpaceError::DuplicateName(name)
        | SpaceError::InvalidBounds { name, .. }
        | SpaceError::NonPositiveLogLower { name }
        | SpaceError::NoChoices { name }
        | SpaceError::DuplicateChoice { name, .. } => Some(name),
        _ => None,
    }
}

fn parse_acq(src: &Source<'_>, raw: &Spanned<String>) -> Result<AcquisitionKind, ConfigFileError> {
    raw.get_ref().parse().map_err(|e| src.err(Some(raw.span()), format!("{e}")))
}

/// `EI-UCB` style: inner acquisition, a dash, then outer acquisition.
fn parse_pairing(
    src: &Source<'_>,
    raw: &Spanned<String>,
) -> Result<(AcquisitionKind, AcquisitionKind), ConfigFileError> {
    let bad = |msg: String| src.err(Some(raw.span()), msg);
    let (inner, outer) = raw
        .get_ref()
        .split_once('-')
        .ok_or_else(|| bad(format!("pairing `{}` must look like `EI-UCB` (inner-outer)", raw.get_ref())))?;
    let inner = inner.parse().map_err(|e| bad(format!("pairing `{}`: {e}", raw.get_ref())))?;
    let outer = outer.parse().map_err(|e| bad(format!("pairing `{}`: {e}", raw.get_ref())))?;
    Ok((inner, outer))
}

fn column_space(
    src: &Source<'_>,
    spec: &Spanned<ObjectiveSpec>,
    declared: Option<&SearchSpace>,
) -> Result<SearchSpace, ConfigFileError> {
    spec.get_ref().validate().map_err(|e| src.err(Some(spec.span()), e.to_string()))?;
    let space = match declared {
        Some(space) => space.clone(),
        None => spec.get_ref().default_space().ok_or_else(|| {
            src.err(Some(spec.span()), "external objectives need the search space declared with [[param]]")
        })?,
    };
    // Catches builtins that cannot run on the declared space, e.g. branin on three params.
    spec.get_ref().instantiate(&space, 0).map_err(|e| src.err(Some(spec.span()), e.to_string()))?;
    Ok(space)
}

fn study_error(src: &Source<'_>, raw: &RawExperiment, err: ConfigError) -> ConfigFileError {
    let key = match &err {
        ConfigError::NotPositive(name) => Some(*name),
        ConfigError::InitExceedsBudget { init, .. } => Some(*init),
        ConfigError::Acquisition { level: crate::space::Level::Inner, .. } => Some("acq_inner"),
        ConfigError::Acquisition { level: crate::space::Level::Outer, .. } => Some("acq_outer"),
        ConfigError::Space(_) => None,
    };
    let span = match key {
        Some("outer_budget") => raw.outer_budget.as_ref().map(Spanned::span),
        Some("inner_budget") => raw.inner_budget.as_ref().map(Spanned::span),
        Some("init_outer") => raw.init_outer.as_ref().map(Spanned::span),
        Some("init_inner") => raw.init_inner.as_ref().map(Spanned::span),
        Some("candidates") => raw.candidates.as_ref().map(Spanned::span),
        Some("acq_inner") => raw.acq_inner.as_ref().map(Spanned::span),
        Some("acq_outer") => raw.acq_outer.as_ref().map(Spanned::span),
        _ => None,
    };
    src.err(span, err.to_string())
}

/// Parses and validates config text. `path` is used for messages and to
/// resolve a relative `output_dir`.
pub fn parse_experiment(path: &Path, text: &str) -> Result<Experiment, ConfigFileError> {
    let src = Source { path, text };
    let raw: RawExperiment = toml::from_str(text).map_err(|e| src.err(e.span(), e.message().trim().to_owned()))?;

    let defaults = StudyConfig::default();
    let get = |v: &Option<Spanned<usize>>, d: usize| v.as_ref().map_or(d, |s| *s.get_ref());
    let mut study = StudyConfig {
        mode: raw.mode.unwrap_or(defaults.mode),
        outer_budget: get(&raw.outer_budget, defaults.outer_budget),
        inner_budget: get(&raw.inner_budget, defaults.inner_budget),
        init_outer: get(&raw.init_outer, defaults.init_outer),
        init_inner: get(&raw.init_inner, defaults.init_inner),
        acq_inner: raw.acq_inner.as_ref().map(|a| parse_acq(&src, a)).transpose()?.unwrap_or(defaults.acq_inner),
        acq_outer: raw.acq_outer.as_ref().map(|a| parse_acq(&src, a)).transpose()?.unwrap_or(defaults.acq_outer),
        candidates: get(&raw.candidates, defaults.candidates),
        seed: raw.seed.unwrap_or(defaults.seed),
    };
    study.validate().map_err(|e| study_error(&src, &raw, e))?;

    let seeds = match raw.seeds.as_ref().map(Spanned::get_ref) {
        None => vec![study.seed],
        Some(SeedList::Count(0)) => {
            return Err(src.err(raw.seeds.as_ref().map(Spanned::span), "`seeds` must be positive"));
        }
        Some(SeedList::Count(n)) => (0..*n).collect(),
        Some(SeedList::List(list)) if list.is_empty() => {
            return Err(src.err(raw.seeds.as_ref().map(Spanned::span), "`seeds` must not be empty"));
        }
        Some(SeedList::List(list)) => list.clone(),
    };
    if raw.seed.is_none() {
        study.seed = seeds[0];
    }

    let declared = parse_space(&src, &raw.param)?;
    let mut space = declared.clone();
    if let Some(objective) = &raw.objective {
        let s = column_space(&src, objective, declared.as_ref())?;
        if study.mode == Mode::Bilevel {
            s.require_both_levels().map_err(|e| src.err(Some(objective.span()), e.to_string()))?;
        }
        space = Some(s);
    }

    let compare = match &raw.compare {
        None => None,
        Some(section) => Some(parse_compare(&src, section, &raw, &study, declared.as_ref())?),
    };

    let output_dir = raw.output_dir.as_ref().map(|d| {
        let d = Path::new(d);
        if d.is_absolute() { d.to_owned() } else { path.parent().unwrap_or(Path::new("")).join(d) }
    });

    Ok(Experiment {
        study,
        objective: raw.objective.as_ref().map(|o| o.get_ref().clone()),
        space,
        seeds,
        output_dir,
        compare,
    })
}

fn parse_compare(
    src: &Source<'_>,
    section: &Spanned<RawCompare>,
    raw: &RawExperiment,
    study: &StudyConfig,
    declared: Option<&SearchSpace>,
) -> Result<CompareSection, ConfigFileError> {
    let c = section.get_ref();
    let specs: Vec<&Spanned<ObjectiveSpec>> = match &c.objectives {
        Some(list) => list.iter().collect(),
        None => raw.objective.iter().collect(),
    };
    if specs.is_empty() {
        return Err(src.err(Some(section.span()), "compare needs `objectives` or a top-level [objective]"));
    }
    let mut columns = Vec::new();
    for spec in specs {
        let space = column_space(src, spec, declared)?;
        space.require_both_levels().map_err(|e| src.err(Some(spec.span()), e.to_string()))?;
        columns.push(CompareColumn { objective: spec.get_ref().clone(), space });
    }

    let mut rows = Vec::new();
    for p in &c.pairings {
        let (inner, outer) = parse_pairing(src, p)?;
        rows.push(RowSpec::pairing(study, inner, outer));
    }
    let total = StudyConfig { mode: Mode::Bilevel, ..study.clone() }.total_evaluations();
    for b in &c.baselines {
        let name = b.get_ref().trim().to_ascii_lowercase();
        let row = match name.split_once(':') {
            None if name == "random" => RowSpec::random(&StudyConfig { mode: Mode::Bilevel, ..study.clone() }),
            None if name == "single-level" => {
                let budget = c.single_level_budget.as_ref().map_or(total, |b| *b.get_ref());
                RowSpec::single_level(study, study.acq_outer, budget)
            }
            Some(("single-level", acq)) => {
                let acq =
                    acq.parse().map_err(|e| src.err(Some(b.span()), format!("baseline `{}`: {e}", b.get_ref())))?;
                let budget = c.single_level_budget.as_ref().map_or(total, |b| *b.get_ref());
                RowSpec::single_level(study, acq, budget)
            }
            _ => {
                return Err(src.err(
                    Some(b.span()),
                    format!("unknown baseline `{}` (expected random, single-level or single-level:<acq>)", b.get_ref()),
                ));
            }
        };
        row.config.validate().map_err(|e| src.err(Some(b.span()), e.to_string()))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(src.err(Some(section.span()), "compare needs at least one entry in `pairings` or `baselines`"));
    }

    let baseline = match &c.baseline {
        None if !c.baselines.is_empty() => c.pairings.len(),
        None => 0,
        Some(label) => rows.iter().position(|r| r.label.eq_ignore_ascii_case(label.get_ref())).ok_or_else(|| {
            let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
            src.err(
                Some(label.span()),
                format!("baseline `{}` is not one of the rows ({})", label.get_ref(), labels.join(", ")),
            )
        })?,
    };

    if let Some(name) = &c.reference_baseline
        && !c.reference.iter().any(|r| &r.label == name)
    {
        return Err(src.err(Some(section.span()), format!("reference_baseline `{name}` is not a reference row")));
    }

    Ok(CompareSection {
        columns,
        rows,
        baseline,
        references: c.reference.clone(),
        reference_baseline: c.reference_baseline.clone(),
    })
}
