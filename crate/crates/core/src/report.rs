//! CSV and aligned-text output for studies and comparisons.
//!
//! `trials.csv` columns: `outer_index,inner_index,<params in space order>,
//! train_loss,val_metric,status,wall_time`. Floats use Rust's shortest
//! round-trip formatting, so parsing a written file reproduces the records.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilevel::{ComparisonTable, TrialRecord, TrialStatus, improvement_rate, round_half_up};
use crate::space::{Configuration, SearchSpace};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
}

pub fn trials_header(space: &SearchSpace) -> Vec<String> {
    let mut header = vec!["outer_index".to_owned(), "inner_index".to_owned()];
    header.extend(space.params().iter().map(|p| p.name.clone()));
    header.extend(["train_loss", "val_metric", "status", "wall_time"].map(str::to_owned));
    header
}

fn status_str(status: TrialStatus) -> &'static str {
    match status {
        TrialStatus::Ok => "ok",
        TrialStatus::Failed => "failed",
    }
}

pub fn write_trials_csv<W: Write>(out: W, space: &SearchSpace, trials: &[TrialRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trials_header(space))?;
    for t in trials {
        let mut row = vec![t.outer_index.to_string(), t.inner_index.to_string()];
        row.extend(space.params().iter().map(|p| t.config.get(&p.name).map(ToString::to_string).unwrap_or_default()));
        row.extend([
            t.train_loss.to_string(),
            t.val_metric.to_string(),
            status_str(t.status).to_owned(),
            t.wall_time.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `trials.csv`. The free-text failure message is not part of the
/// CSV and comes back as `None`.
pub fn read_trials_csv<R: Read>(input: R, space: &SearchSpace) -> Result<Vec<TrialRecord>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != trials_header(space) {
        return Err(ReportError::Malformed { row: 0, message: format!("unexpected header {header:?}") });
    }
    let n_params = space.params().len();
    let mut trials = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| ReportError::Malformed { row: i + 1, message };
        let field = |j: usize| rec.get(j).ok_or_else(|| bad(format!("missing column {j}")));
        let float = |j: usize| -> Result<f64, ReportError> {
            let s = field(j)?;
            s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")))
        };
        let mut config = Configuration::new();
        for (k, p) in space.params().iter().enumerate() {
            let cell = field(2 + k)?;
            if !cell.is_empty() {
                config.set(p.name.clone(), p.parse_value(cell).map_err(|e| bad(e.to_string()))?);
            }
        }
        let base = 2 + n_params;
        let status = match field(base + 2)? {
            "ok" => TrialStatus::Ok,
            "failed" => TrialStatus::Failed,
            other => return Err(bad(format!("unknown status `{other}`"))),
        };
        trials.push(TrialRecord {
            outer_index: field(0)?.parse().map_err(|_| bad("bad outer_index".into()))?,
            inner_index: field(1)?.parse().map_err(|_| bad("bad inner_index".into()))?,
            config,
            train_loss: float(base)?,
            val_metric: float(base + 1)?,
            status,
            wall_time: float(base + 3)?,
            message: None,
        });
    }
    Ok(trials)
}

pub fn write_series_csv<W: Write>(out: W, series: &[f64]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["evaluation_index", "value"])?;
    for (i, v) in series.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-evaluation scatter points for plotting.
pub fn write_scatter_csv<W: Write>(out: W, trials: &[TrialRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["evaluation_index", "outer_index", "inner_index", "train_loss", "val_metric", "status"])?;
    for (i, t) in trials.iter().enumerate() {
        w.write_record([
            i.to_string(),
            t.outer_index.to_string(),
            t.inner_index.to_string(),
            t.train_loss.to_string(),
            t.val_metric.to_string(),
            status_str(t.status).to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A row whose AVG and printed improvement rate come from elsewhere (e.g. a
/// published table) and are checked against the formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub avg: f64,
    #[serde(default)]
    pub printed_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCheck {
    pub label: String,
    pub avg: f64,
    /// Rounded half-up to two decimals.
    pub computed_rate: Option<f64>,
    pub printed_rate: Option<f64>,
}

impl ReferenceCheck {
    pub fn mismatch(&self) -> bool {
        match (self.computed_rate, self.printed_rate) {
            (Some(c), Some(p)) => (c - p).abs() > 0.005,
            _ => false,
        }
    }
}

pub fn check_reference_rows(rows: &[ReferenceRow], baseline: &str) -> Vec<ReferenceCheck> {
    let base_avg = rows.iter().find(|r| r.label == baseline).map(|r| r.avg);
    rows.iter()
        .map(|r| ReferenceCheck {
            label: r.label.clone(),
            avg: r.avg,
            computed_rate: if r.label == baseline {
                None
            } else {
                base_avg.and_then(|b| improvement_rate(r.avg, b).ok()).map(|x| round_half_up(x, 2))
            },
            printed_rate: r.printed_rate,
        })
        .collect()
}

fn render_grid(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).chain([header[j].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        parts.join("  ").trim_end().to_owned()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Better {
    Higher,
    Lower,
}

/// Index of the best present value; ties go to the first.
fn best_of(values: &[Option<f64>], better: Better) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            let wins = match (best, better) {
                (None, _) => true,
                (Some((_, b)), Better::Higher) => v > b,
                (Some((_, b)), Better::Lower) => v < b,
            };
            if wins {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn fmt_value(v: Option<f64>, marked: bool) -> String {
    match v {
        Some(x) if x != 0.0 && x.abs() < 1e-2 => format!("{x:.2e}{}", if marked { "*" } else { "" }),
        Some(x) => format!("{x:.4}{}", if marked { "*" } else { "" }),
        None => "failed".to_owned(),
    }
}

fn fmt_rate(v: Option<f64>, marked: bool) -> String {
    match v {
        Some(x) => format!("{:.2}{}", round_half_up(x, 2), if marked { "*" } else { "" }),
        None => "--".to_owned(),
    }
}

impl ComparisonTable {
    fn metric_grid(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["Method (In-Out)".to_owned()];
        header.extend(self.objectives.iter().cloned());
        header.extend(["AVG".to_owned(), "Imp. Rate (%)".to_owned()]);
        let col = |f: &dyn Fn(&crate::bilevel::ComparisonRow) -> Option<f64>| -> Vec<Option<f64>> {
            self.rows.iter().map(f).collect()
        };
        let best_cols: Vec<Option<usize>> =
            (0..self.objectives.len()).map(|o| best_of(&col(&|r| r.median_best_val[o]), Better::Higher)).collect();
        let best_avg = best_of(&col(&|r| r.avg), Better::Higher);
        let rates: Vec<Option<f64>> =
            self.rows.iter().enumerate().map(|(i, r)| if i == self.baseline { None } else { r.imp_rate }).collect();
        // With a negative baseline AVG the rate falls as AVG rises, so the
        // best rate is the one belonging to the best AVG.
        let rated_avgs: Vec<Option<f64>> = rates.iter().zip(&self.rows).map(|(rate, r)| rate.and(r.avg)).collect();
        let best_rate = best_of(&rated_avgs, Better::Higher);
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut cells = vec![r.label.clone()];
                cells.extend(r.median_best_val.iter().enumerate().map(|(o, v)| fmt_value(*v, best_cols[o] == Some(i))));
                cells.push(fmt_value(r.avg, best_avg == Some(i)));
                cells.push(fmt_rate(rates[i], best_rate == Some(i)));
                cells
            })
            .collect();
        (header, rows)
    }

    fn loss_grid(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["Method (In-Out)".to_owned()];
        header.extend(self.objectives.iter().cloned());
        header.push("AVG".to_owned());
        let best_cols: Vec<Option<usize>> = (0..self.objectives.len())
            .map(|o| best_of(&self.rows.iter().map(|r| r.median_final_loss[o]).collect::<Vec<_>>(), Better::Lower))
            .collect();
        let best_avg = best_of(&self.rows.iter().map(|r| r.avg_loss).collect::<Vec<_>>(), Better::Lower);
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut cells = vec![r.label.clone()];
                cells.extend(
                    r.median_final_loss.iter().enumerate().map(|(o, v)| fmt_value(*v, best_cols[o] == Some(i))),
                );
                cells.push(fmt_value(r.avg_loss, best_avg == Some(i)));
                cells
            })
            .collect();
        (header, rows)
    }

    /// Both tables as aligned text with footnotes. `*` marks the best cell of each column.
    pub fn render_text(&self, references: &[ReferenceCheck]) -> String {
        let mut out = String::new();
        let baseline = self.rows.get(self.baseline).map_or("?", |r| r.label.as_str());
        let _ = writeln!(out, "Median best validation metric over {} seed(s)", self.seeds.len());
        let (h, r) = self.metric_grid();
        out.push_str(&render_grid(&h, &r));
        out.push('\n');
        let _ = writeln!(out, "Median training loss at the best trial over {} seed(s)", self.seeds.len());
        let (h, r) = self.loss_grid();
        out.push_str(&render_grid(&h, &r));

        let mut notes = vec![format!(
            "Imp. Rate (%) = 100 * (AVG - AVG[{baseline}]) / AVG[{baseline}], from unrounded AVGs, rounded half-up to 2 decimals."
        )];
        if self.rows.get(self.baseline).and_then(|r| r.avg).is_some_and(|b| b < 0.0) {
            notes.push(format!("AVG[{baseline}] is negative, so a row that beats the baseline shows a negative rate."));
        }
        let failed = self.cells.iter().filter(|c| matches!(c.outcome, crate::bilevel::CellOutcome::Failed(_))).count();
        if failed > 0 {
            notes.push(format!("{failed} study cell(s) failed and are excluded from the medians."));
        }

        if !references.is_empty() {
            out.push('\n');
            out.push_str("Reference rows (supplied AVG, rate recomputed)\n");
            let header: Vec<String> =
                ["Method", "AVG", "Imp. Rate (%)", "Printed (%)"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = references
                .iter()
                .map(|c| {
                    vec![
                        c.label.clone(),
                        format!("{:.2}", c.avg),
                        c.computed_rate.map_or("--".into(), |v| format!("{v:.2}")),
                        c.printed_rate.map_or("--".into(), |v| format!("{v:.2}")),
                    ]
                })
                .collect();
            out.push_str(&render_grid(&header, &rows));
            for c in references.iter().filter(|c| c.mismatch()) {
                notes.push(format!(
                    "`{}`: printed rate {:.2} disagrees with the formula, which gives {:.2}.",
                    c.label,
                    c.printed_rate.unwrap_or_default(),
                    c.computed_rate.unwrap_or_default()
                ));
            }
        }

        out.push('\n');
        for (i, note) in notes.iter().enumerate() {
            let _ = writeln!(out, "[{}] {note}", i + 1);
        }
        out
    }

    pub fn write_metric_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_owned()];
        header.extend(self.objectives.iter().cloned());
        header.extend(["AVG".to_owned(), "imp_rate_pct".to_owned()]);
        w.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut row = vec![r.label.clone()];
            row.extend(r.median_best_val.iter().map(|v| v.map_or("failed".into(), |x| x.to_string())));
            row.push(r.avg.map_or("failed".into(), |x| x.to_string()));
            row.push(if i == self.baseline {
                String::new()
            } else {
                r.imp_rate.map_or(String::new(), |x| format!("{:.2}", round_half_up(x, 2)))
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_owned()];
        header.extend(self.objectives.iter().cloned());
        header.push("AVG".to_owned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.label.clone()];
            row.extend(r.median_final_loss.iter().map(|v| v.map_or("failed".into(), |x| x.to_string())));
            row.push(r.avg_loss.map_or("failed".into(), |x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format: `objective,method,evaluation_index,value`.
    pub fn write_median_series_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["objective", "method", "evaluation_index", "value"])?;
        for (o, objective) in self.objectives.iter().enumerate() {
            for r in &self.rows {
                for (i, v) in r.median_series[o].iter().enumerate() {
                    w.write_record([objective.clone(), r.label.clone(), i.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
