//! Result tables: one row per training-set size, one column per sweep.
//!
//! Text cells read `mean±std` in percent with one decimal. When several
//! sweeps are compared, `*` marks the best entry for a task in a row and `_`
//! the best entry among sweeps sharing a backend for that task.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use pairshot_core::metrics::{MeanStd, Metric};

use crate::error::{HarnessError, Result};
use crate::sweep::{SizeSummary, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            _ => Err(format!("unknown format `{s}` (expected text, csv or json)")),
        }
    }
}

pub fn parse_metric(name: &str) -> Result<Metric> {
    name.parse().map_err(|_| HarnessError::UnknownMetric(name.into()))
}

/// `90.7±1.4` for mean 0.9066, std 0.0138.
pub fn format_mean_std(m: MeanStd) -> String {
    m.percent()
}

/// Machine-readable column: the per-size summaries of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub task_id: String,
    pub method: String,
    pub backend: String,
    pub metric: String,
    pub summaries: Vec<SizeSummary>,
}

fn column(r: &SweepResult, metric: Metric) -> TableColumn {
    TableColumn {
        task_id: r.config.task_id.clone(),
        method: r.config.method.to_string(),
        backend: r.backend.clone(),
        metric: metric.name().into(),
        summaries: r.summaries.clone(),
    }
}

pub fn emit_table(result: &SweepResult, metric: &str, format: TableFormat) -> Result<String> {
    emit_comparison(std::slice::from_ref(result), metric, format)
}

pub fn emit_comparison(results: &[SweepResult], metric: &str, format: TableFormat) -> Result<String> {
    let metric = parse_metric(metric)?;
    let cols: Vec<TableColumn> = results.iter().map(|r| column(r, metric)).collect();
    match format {
        TableFormat::Json => Ok(serde_json::to_string_pretty(&cols)? + "\n"),
        TableFormat::Csv => Ok(csv(&cols, metric)),
        TableFormat::Text => Ok(text(&cols, metric)),
    }
}

fn csv(cols: &[TableColumn], metric: Metric) -> String {
    let m = metric.name();
    let mut out = format!("task_id,method,backend,size,completed,failed,{m}_mean,{m}_std\n");
    for c in cols {
        for s in &c.summaries {
            let (mean, std) = match &s.summary {
                Some(sum) => {
                    let v = sum.get(metric);
                    (v.mean.to_string(), v.std.to_string())
                }
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{mean},{std}",
                c.task_id, c.method, c.backend, s.size, s.completed, s.failed
            );
        }
    }
    out
}

fn mean_at(c: &TableColumn, size: usize, metric: Metric) -> Option<f64> {
    c.summaries
        .iter()
        .find(|s| s.size == size)
        .and_then(|s| s.summary.as_ref())
        .map(|s| s.get(metric).mean)
}

/// Best mean among `members` at `size`; only meaningful with 2+ entries.
fn best(cols: &[TableColumn], members: &[usize], size: usize, metric: Metric) -> Option<f64> {
    let vals: Vec<f64> = members
        .iter()
        .filter_map(|&i| mean_at(&cols[i], size, metric))
        .collect();
    if vals.len() < 2 {
        return None;
    }
    vals.into_iter().reduce(f64::max)
}

fn text(cols: &[TableColumn], metric: Metric) -> String {
    let sizes: BTreeSet<usize> = cols.iter().flat_map(|c| c.summaries.iter().map(|s| s.size)).collect();
    let mut header = vec!["size".to_string()];
    header.extend(cols.iter().map(|c| format!("{}/{}/{}", c.task_id, c.method, c.backend)));
    let mut rows = vec![header];
    let (mut starred, mut underlined) = (false, false);
    for &size in &sizes {
        let mut row = vec![size.to_string()];
        for c in cols {
            let Some(s) = c.summaries.iter().find(|s| s.size == size) else {
                row.push("-".into());
                continue;
            };
            let Some(sum) = &s.summary else {
                row.push("failed".into());
                continue;
            };
            let v = sum.get(metric);
            let mut cell = format_mean_std(v);
            let same_task: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].task_id == c.task_id).collect();
            let same_backend: Vec<usize> = same_task
                .iter()
                .copied()
                .filter(|&j| cols[j].backend == c.backend)
                .collect();
            if best(cols, &same_task, size, metric) == Some(v.mean) {
                cell.push('*');
                starred = true;
            }
            if same_backend.len() < same_task.len() && best(cols, &same_backend, size, metric) == Some(v.mean) {
                cell.push('_');
                underlined = true;
            }
            if s.failed > 0 {
                let _ = write!(cell, " ({}/{})", s.completed, s.completed + s.failed);
            }
            row.push(cell);
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{} (mean±std over replicates, percent)\n", metric.name());
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    if starred {
        out.push_str("* best for the task\n");
    }
    if underlined {
        out.push_str("_ best for the task on this backend\n");
    }
    out
}
