//! `bilevel-bo` command line: `run`, `compare` and `report`.
//!
//! Exit codes: 0 success, 2 config or input error, 3 study failure (including
//! failure to write outputs).

mod config;

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};

pub use config::{CompareColumn, CompareSection, ConfigFileError, Experiment, parse_experiment};

use crate::bilevel::{
    self, CellOutcome, ComparisonTable, ObjectiveColumn, StudyConfig, StudyError, StudyResult, compare_configs,
};
use crate::objective::Objective;
use crate::report::{self, ReportError};
use crate::space::SearchSpace;

/// Overrides the output directory (below `--out`, above the config file).
pub const OUT_ENV: &str = "BILEVEL_BO_OUT";
/// Log filter, e.g. `info` or `bilevel_bo=debug`. Defaults to `warn`.
pub const LOG_ENV: &str = "BILEVEL_BO_LOG";
const DEFAULT_OUT: &str = "bilevel-bo-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STUDY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bilevel-bo", version, about = "Bilevel Bayesian optimization with per-level EI/UCB acquisition")]
pub struct Cli {
    /// Output directory (overrides $BILEVEL_BO_OUT and the config's `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Maximum number of studies `compare` runs concurrently.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed override; for `compare` this replaces the seed list with this one seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one study and write study.json, trials.csv and cumulative_best.csv.
    Run { config: PathBuf },
    /// Run every (row, objective, seed) cell of a comparison and write the tables.
    Compare { config: PathBuf },
    /// Write plot-ready series for a finished study.json.
    Report { study: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Study(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Study(_) => EXIT_STUDY,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Study(m) => m,
        }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Study(format!("writing {}: {e}", path.display()))
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path)).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        output_error(path, e)
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), ReportError>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| output_error(path, e))?;
    write_atomic(path, &buf)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| output_error(dir, e))
}

fn resolve_out(flag: Option<&Path>, from_config: Option<&Path>, fallback: &Path) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_owned();
    }
    if let Some(dir) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    from_config.unwrap_or(fallback).to_owned()
}

fn load(path: &Path) -> Result<Experiment, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(parse_experiment(path, &text)?)
}

fn write_study(dir: &Path, space: &SearchSpace, study: &StudyResult) -> Result<(), CliError> {
    create_dir(dir)?;
    write_atomic(&dir.join("study.json"), study.to_json().as_bytes())?;
    write_with(&dir.join("trials.csv"), |w| report::write_trials_csv(w, space, &study.trials))?;
    write_with(&dir.join("cumulative_best.csv"), |w| report::write_series_csv(w, &study.cumulative_best))
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<PathBuf, CliError> {
    let exp = load(path)?;
    let (Some(spec), Some(space)) = (&exp.objective, &exp.space) else {
        return Err(CliError::Input(format!("{}: `run` needs an [objective] section", path.display())));
    };
    let cfg = StudyConfig { seed: cli.seed.unwrap_or(exp.study.seed), ..exp.study.clone() };
    let out = resolve_out(cli.out.as_deref(), exp.output_dir.as_deref(), Path::new(DEFAULT_OUT));
    let mut objective = spec.instantiate(space, cfg.seed).map_err(|e| CliError::Input(e.to_string()))?;
    info!("running {} study on {} ({} evaluations)", cfg.label(), spec.label(), cfg.total_evaluations());
    match bilevel::run_study(&mut objective, space, &cfg) {
        Ok(study) => {
            write_study(&out, space, &study)?;
            println!(
                "{}: best val_metric {} (train_loss {}) after {} evaluations",
                cfg.label(),
                study.best_val,
                study.best_train_loss,
                study.trials.len()
            );
            Ok(out)
        }
        Err(StudyError::NoSuccessfulTrials { trials }) => {
            // Keep the record log so the failures can be inspected.
            create_dir(&out)?;
            write_with(&out.join("trials.csv"), |w| report::write_trials_csv(w, space, &trials))?;
            let first = trials.iter().find_map(|t| t.message.clone()).unwrap_or_default();
            Err(CliError::Study(format!("all {} evaluations failed; first error: {first}", trials.len())))
        }
        Err(e @ (StudyError::Config(_) | StudyError::Space(_))) => Err(CliError::Input(e.to_string())),
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_owned()
}

/// Directory of one compare cell, relative to the output directory.
pub fn cell_dir(row: usize, row_label: &str, objective: usize, objective_label: &str, seed: u64) -> PathBuf {
    Path::new("cells")
        .join(format!("{row:02}-{}", slug(row_label)))
        .join(format!("{objective:02}-{}", slug(objective_label)))
        .join(format!("seed-{seed}"))
}

fn cmd_compare(cli: &Cli, path: &Path) -> Result<PathBuf, CliError> {
    let exp = load(path)?;
    let Some(section) = &exp.compare else {
        return Err(CliError::Input(format!("{}: `compare` needs a [compare] section", path.display())));
    };
    let seeds = cli.seed.map_or_else(|| exp.seeds.clone(), |s| vec![s]);
    let out = resolve_out(cli.out.as_deref(), exp.output_dir.as_deref(), Path::new(DEFAULT_OUT));
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);

    let columns: Vec<ObjectiveColumn> = section
        .columns
        .iter()
        .map(|c| ObjectiveColumn { label: c.objective.label(), space: c.space.clone() })
        .collect();
    info!(
        "comparing {} row(s) x {} objective(s) x {} seed(s) on {jobs} thread(s)",
        section.rows.len(),
        columns.len(),
        seeds.len()
    );
    let table = compare_configs(&columns, &section.rows, &seeds, section.baseline, jobs, |_, o, seed| {
        section.columns[o].objective.instantiate(&section.columns[o].space, seed).map(|b| b as Box<dyn Objective>)
    });

    create_dir(&out)?;
    write_cells(&out, &table, &section.columns)?;
    let references = match &section.reference_baseline {
        Some(base) => report::check_reference_rows(&section.references, base),
        None => match section.references.first() {
            Some(first) => report::check_reference_rows(&section.references, &first.label),
            None => Vec::new(),
        },
    };
    let text = table.render_text(&references);
    write_atomic(&out.join("comparison.txt"), text.as_bytes())?;
    write_with(&out.join("comparison.csv"), |w| table.write_metric_csv(w))?;
    write_with(&out.join("losses.csv"), |w| table.write_loss_csv(w))?;
    write_with(&out.join("median_series.csv"), |w| table.write_median_series_csv(w))?;
    print!("{text}");

    let failed = table.cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Failed(_))).count();
    if failed == table.cells.len() {
        return Err(CliError::Study(format!("all {failed} study cell(s) failed")));
    }
    if failed > 0 {
        warn!("{failed} of {} study cell(s) failed", table.cells.len());
    }
    Ok(out)
}

fn write_cells(out: &Path, table: &ComparisonTable, columns: &[CompareColumn]) -> Result<(), CliError> {
    for cell in &table.cells {
        let dir = out.join(cell_dir(
            cell.row,
            &table.rows[cell.row].label,
            cell.objective,
            &table.objectives[cell.objective],
            cell.seed,
        ));
        match &cell.outcome {
            CellOutcome::Ok(study) => write_study(&dir, &columns[cell.objective].space, study)?,
            CellOutcome::Failed(message) => {
                create_dir(&dir)?;
                write_atomic(&dir.join("error.txt"), format!("{message}\n").as_bytes())?;
            }
        }
    }
    Ok(())
}

fn cmd_report(cli: &Cli, path: &Path) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let study = StudyResult::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}:{}: malformed study: {e}", path.display(), e.line())))?;
    if study.trials.is_empty() {
        return Err(CliError::Input(format!("{}: study has no trials", path.display())));
    }
    let fallback = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let out = resolve_out(cli.out.as_deref(), None, fallback);
    create_dir(&out)?;
    // Recomputed rather than copied, so a hand-edited study stays consistent.
    let series = bilevel::cumulative_best(&study.trials);
    write_with(&out.join("cumulative_best.csv"), |w| report::write_series_csv(w, &series))?;
    write_with(&out.join("trials_scatter.csv"), |w| report::write_scatter_csv(w, &study.trials))?;
    println!("{} trials, best val_metric {}", study.trials.len(), series.last().copied().unwrap_or(f64::NEG_INFINITY));
    Ok(out)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Compare { config } => cmd_compare(&cli, config),
        Command::Report { study } => cmd_report(&cli, study),
    };
    match result {
        Ok(out) => {
            info!("outputs in {}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn main() -> ! {
    let code = main_with_args(std::env::args_os());
    let _ = io::Write::flush(&mut io::stdout());
    std::process::exit(code)
}
