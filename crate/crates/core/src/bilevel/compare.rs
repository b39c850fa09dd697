use std::sync::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Mode, StudyConfig, StudyResult, run_study};
use crate::acquisition::AcquisitionKind;
use crate::objective::{Objective, ObjectiveError};
use crate::space::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("improvement rate is undefined for a zero baseline")]
pub struct ZeroBaseline;

/// Percent gain of `avg_method` over `avg_baseline`, unrounded.
pub fn improvement_rate(avg_method: f64, avg_baseline: f64) -> Result<f64, ZeroBaseline> {
    if avg_baseline == 0.0 {
        return Err(ZeroBaseline);
    }
    Ok(100.0 * (avg_method - avg_baseline) / avg_baseline)
}

/// Rounds half toward +inf at `decimals` places.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    // The 1e-9 nudge absorbs representation error such as 2.675 -> 2.67499999.
    ((x * f + 0.5 + 1e-9).floor()) / f
}

/// Median of the finite values; `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// One table row: a study configuration (seed is replaced per cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub label: String,
    pub config: StudyConfig,
}

impl RowSpec {
    pub fn pairing(base: &StudyConfig, inner: AcquisitionKind, outer: AcquisitionKind) -> Self {
        let config = StudyConfig { mode: Mode::Bilevel, acq_inner: inner, acq_outer: outer, ..base.clone() };
        Self { label: config.label(), config }
    }

    /// Uniform search with the same number of evaluations as `base`.
    pub fn random(base: &StudyConfig) -> Self {
        let budget = base.total_evaluations();
        let config = StudyConfig { mode: Mode::Random, outer_budget: budget, init_outer: 1, ..base.clone() };
        Self { label: config.label(), config }
    }

    /// Joint BO over every parameter with `budget` evaluations.
    pub fn single_level(base: &StudyConfig, acq: AcquisitionKind, budget: usize) -> Self {
        let config = StudyConfig {
            mode: Mode::SingleLevel,
            acq_outer: acq,
            outer_budget: budget,
            init_outer: base.init_outer.min(budget),
            ..base.clone()
        };
        Self { label: config.label(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOutcome {
    Ok(Box<StudyResult>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub row: usize,
    pub objective: usize,
    pub seed: u64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    /// Median over seeds of best validation metric, per objective.
    pub median_best_val: Vec<Option<f64>>,
    /// Median over seeds of the training loss at the best trial, per objective.
    pub median_final_loss: Vec<Option<f64>>,
    /// Elementwise median cumulative-best series, per objective.
    pub median_series: Vec<Vec<f64>>,
    pub avg: Option<f64>,
    pub avg_loss: Option<f64>,
    /// Unrounded improvement rate of `avg` over the baseline row's `avg`.
    pub imp_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub objectives: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub baseline: usize,
    pub seeds: Vec<u64>,
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn cell(&self, row: usize, objective: usize, seed: u64) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.row == row && c.objective == objective && c.seed == seed)
    }

    /// Aggregates finished cells; cells are matched to rows and objectives by index.
    pub fn from_cells(
        row_labels: Vec<String>,
        objectives: Vec<String>,
        seeds: Vec<u64>,
        baseline: usize,
        cells: Vec<ComparisonCell>,
    ) -> Self {
        let mut rows: Vec<ComparisonRow> = row_labels
            .into_iter()
            .enumerate()
            .map(|(r, label)| {
                let mut median_best_val = Vec::new();
                let mut median_final_loss = Vec::new();
                let mut median_series = Vec::new();
                for o in 0..objectives.len() {
                    let ok: Vec<&StudyResult> = cells
                        .iter()
                        .filter(|c| c.row == r && c.objective == o)
                        .filter_map(|c| match &c.outcome {
                            CellOutcome::Ok(s) => Some(s.as_ref()),
                            CellOutcome::Failed(_) => None,
                        })
                        .collect();
                    median_best_val.push(median(ok.iter().map(|s| s.best_val)));
                    median_final_loss.push(median(ok.iter().map(|s| s.best_train_loss)));
                    let len = ok.iter().map(|s| s.cumulative_best.len()).min().unwrap_or(0);
                    median_series.push(
                        (0..len)
                            .map(|i| median(ok.iter().map(|s| s.cumulative_best[i])).unwrap_or(f64::NEG_INFINITY))
                            .collect(),
                    );
                }
                let mean = |xs: &[Option<f64>]| -> Option<f64> {
                    let vals: Option<Vec<f64>> = xs.iter().copied().collect();
                    vals.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
                };
                ComparisonRow {
                    label,
                    avg: mean(&median_best_val),
                    avg_loss: mean(&median_final_loss),
                    median_best_val,
                    median_final_loss,
                    median_series,
                    imp_rate: None,
                }
            })
            .collect();
        let base_avg = rows.get(baseline).and_then(|r| r.avg);
        for row in &mut rows {
            row.imp_rate = match (row.avg, base_avg) {
                (Some(m), Some(b)) => improvement_rate(m, b).ok(),
                _ => None,
            };
        }
        Self { objectives, rows, baseline, seeds, cells }
    }
}

/// An objective column: label plus the space its studies search.
#[derive(Debug, Clone)]
pub struct ObjectiveColumn {
    pub label: String,
    pub space: SearchSpace,
}

/// Runs every (row, objective, seed) study, up to `jobs` at a time, and
/// aggregates them. `make_objective(row, objective_index, seed)` builds a
/// fresh objective for each cell. Results are merged in (row, objective,
/// seed) order regardless of completion order.
pub fn compare_configs<F>(
    columns: &[ObjectiveColumn],
    rows: &[RowSpec],
    seeds: &[u64],
    baseline: usize,
    jobs: usize,
    make_objective: F,
) -> ComparisonTable
where
    F: Fn(&RowSpec, usize, u64) -> Result<Box<dyn Objective>, ObjectiveError> + Sync,
{
    let tasks: Vec<(usize, usize, u64)> = (0..rows.len())
        .flat_map(|r| (0..columns.len()).flat_map(move |o| seeds.iter().map(move |&s| (r, o, s))))
        .collect();
    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);

    let work = || {
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(&(r, o, seed)) = tasks.get(i) else { break };
            let row = &rows[r];
            let cfg = StudyConfig { seed, ..row.config.clone() };
            let outcome = match make_objective(row, o, seed) {
                Ok(mut objective) => match run_study(&mut objective, &columns[o].space, &cfg) {
                    Ok(study) => CellOutcome::Ok(Box::new(study)),
                    Err(e) => CellOutcome::Failed(e.to_string()),
                },
                Err(e) => CellOutcome::Failed(e.to_string()),
            };
            results.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
        }
    };
    let jobs = jobs.max(1).min(tasks.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(work);
            }
        });
    }

    let cells = tasks
        .iter()
        .zip(results.into_inner().expect("workers finished"))
        .map(|(&(row, objective, seed), outcome)| ComparisonCell {
            row,
            objective,
            seed,
            outcome: outcome.expect("every task ran"),
        })
        .collect();
    ComparisonTable::from_cells(
        rows.iter().map(|r| r.label.clone()).collect(),
        columns.iter().map(|c| c.label.clone()).collect(),
        seeds.to_vec(),
        baseline,
        cells,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_rate_examples() {
        assert_eq!(round_half_up(improvement_rate(76.82, 74.80).unwrap(), 2), 2.70);
        assert_eq!(round_half_up(improvement_rate(75.98, 74.80).unwrap(), 2), 1.58);
        assert_eq!(improvement_rate(74.80, 74.80).unwrap(), 0.0);
        assert_eq!(improvement_rate(1.0, 0.0), Err(ZeroBaseline));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(2.675, 2), 2.68);
        assert_eq!(round_half_up(-0.125, 2), -0.12);
        assert_eq!(round_half_up(1.004, 2), 1.0);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median([f64::NAN]), None);
        assert_eq!(median(std::iter::empty()), None);
    }

    #[test]
    fn random_row_matches_total_budget() {
        let base = StudyConfig { outer_budget: 15, inner_budget: 8, ..Default::default() };
        let row = RowSpec::random(&base);
        assert_eq!(row.config.total_evaluations(), 120);
        assert_eq!(row.label, "random");
        let pairing = RowSpec::pairing(&base, AcquisitionKind::ucb(2.0), AcquisitionKind::Ei);
        assert_eq!(pairing.label, "UCB-EI");
        assert_eq!(pairing.config.total_evaluations(), 120);
    }
}
