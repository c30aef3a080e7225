use std::fmt::Write as _;

use super::{HarnessError, Result};

/// Per-task accuracies (percent) of one experiment. `None` marks a task the
/// model cannot be scored on.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub regime: String,
    pub seed: u64,
    pub rows: Vec<(String, Option<f64>)>,
    /// Seconds spent training and evaluating. Never written to report files.
    pub wall_time: f64,
}

impl EvalReport {
    pub fn new(model: &str, regime: &str, seed: u64) -> Self {
        EvalReport {
            model: model.into(),
            regime: regime.into(),
            seed,
            rows: Vec::new(),
            wall_time: 0.0,
        }
    }

    pub fn accuracy(&self, task: &str) -> Option<f64> {
        self.rows.iter().find(|(t, _)| t == task).and_then(|(_, a)| *a)
    }

    /// Mean of the present accuracies.
    pub fn mean(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|(_, a)| *a))
    }

    /// `task,accuracy` header, one row per task, then `mean,<value>`; one
    /// decimal place, `N/A` for missing cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("task,accuracy\n");
        for (task, acc) in &self.rows {
            let _ = writeln!(s, "{task},{}", cell(*acc));
        }
        let _ = writeln!(s, "mean,{}", cell(printed_mean(self.rows.iter().map(|(_, a)| *a))));
        s
    }

    /// Parses [`EvalReport::to_csv`] output. The mean row is checked against
    /// the cells.
    pub fn from_csv(text: &str, model: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("task,accuracy") {
            return Err(HarnessError::Report("missing `task,accuracy` header".into()));
        }
        let mut report = EvalReport::new(model, "", 0);
        let mut mean_cell = None;
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if mean_cell.is_some() {
                return Err(HarnessError::Report(format!("line {}: rows after the mean row", i + 2)));
            }
            let (task, value) = line
                .rsplit_once(',')
                .ok_or_else(|| HarnessError::Report(format!("line {}: expected `task,accuracy`", i + 2)))?;
            let acc = if value == "N/A" {
                None
            } else {
                let v: f64 = value
                    .parse()
                    .map_err(|_| HarnessError::Report(format!("line {}: bad accuracy {value:?}", i + 2)))?;
                if !(0.0..=100.0).contains(&v) {
                    return Err(HarnessError::Report(format!("line {}: accuracy {v} out of range", i + 2)));
                }
                Some(v)
            };
            if task == "mean" {
                mean_cell = Some(acc);
            } else {
                report.rows.push((task.to_string(), acc));
            }
        }
        let Some(stated) = mean_cell else {
            return Err(HarnessError::Report("missing mean row".into()));
        };
        let consistent = match (stated, printed_mean(report.rows.iter().map(|(_, a)| *a))) {
            (Some(a), Some(b)) => cell(Some(a)) == cell(Some(b)),
            (None, None) => true,
            _ => false,
        };
        if !consistent {
            return Err(HarnessError::Report("mean row disagrees with the task rows".into()));
        }
        Ok(report)
    }
}

pub fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean of the cells as printed (one decimal), so that re-averaging a
/// rendered column reproduces its mean row.
fn printed_mean(cells: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    mean(cells.flatten().map(|v| cell(Some(v)).parse::<f64>().expect("formatted number")))
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "N/A".into(),
    }
}

/// A rendered comparison table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub text: String,
    pub csv: String,
}

/// One column per named report, one row per task (union, in order of first
/// appearance), then a mean row that skips missing cells.
pub fn emit_table(columns: &[(String, EvalReport)]) -> Result<Table> {
    if columns.is_empty() {
        return Err(HarnessError::Report("no reports given".into()));
    }
    let mut tasks: Vec<String> = Vec::new();
    for (_, r) in columns {
        for (t, _) in &r.rows {
            if !tasks.contains(t) {
                tasks.push(t.clone());
            }
        }
    }
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["task".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    grid.push(header);
    for t in &tasks {
        let mut row = vec![t.clone()];
        for (_, r) in columns {
            row.push(cell(r.accuracy(t)));
        }
        grid.push(row);
    }
    let mut means = vec!["mean".to_string()];
    for (_, r) in columns {
        means.push(cell(printed_mean(tasks.iter().map(|t| r.accuracy(t)))));
    }
    grid.push(means);

    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    let mut csv = String::new();
    for (i, row) in grid.iter().enumerate() {
        let mut line = format!("{:<w$}", row[0], w = widths[0]);
        for (c, v) in row.iter().enumerate().skip(1) {
            let _ = write!(line, "  {:>w$}", v, w = widths[c]);
        }
        text.push_str(line.trim_end());
        text.push('\n');
        if i == 0 {
            let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            text.push_str(&"-".repeat(rule));
            text.push('\n');
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok(Table { text, csv })
}
