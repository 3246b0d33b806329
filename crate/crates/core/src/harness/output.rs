//! Persisted experiment outputs: a long results table, its aggregate and
//! plot series.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{ExperimentResult, Failure, Provenance};
use crate::{Error, Result};

pub const RESULTS_HEADER: &str = "cell,estimator,rep,abs_err_acme,abs_err_acde,abs_err_ate";
pub const PLOT_HEADER: &str = "series,estimator,x,y,yerr";

/// One row of `results.csv`, already in reporting units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: String,
    pub estimator: String,
    pub rep: usize,
    pub abs_err_acme: f64,
    pub abs_err_acde: f64,
    pub abs_err_ate: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single replication.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub estimator: String,
    pub reps: usize,
    pub acme: MeanStd,
    pub acde: MeanStd,
    pub ate: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub provenance: Provenance,
    /// `"raw"` or `"percent"`.
    pub units: String,
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

/// Result rows in cell, estimator, replication order.
pub fn result_rows(result: &ExperimentResult, percent: bool) -> Vec<ResultRow> {
    let k = if percent { 100.0 } else { 1.0 };
    let mut rows = Vec::new();
    for cell in &result.cells {
        for est in &cell.estimators {
            for r in &est.records {
                rows.push(ResultRow {
                    cell: cell.cell.label.clone(),
                    estimator: est.estimator.name().to_string(),
                    rep: r.rep,
                    abs_err_acme: r.errors.acme * k,
                    abs_err_acde: r.errors.acde * k,
                    abs_err_ate: r.errors.ate * k,
                });
            }
        }
    }
    rows
}

/// Groups rows by (cell, estimator) in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, String, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|g| g.0 == row.cell && g.1 == row.estimator) {
            Some(g) => g.2.push(row),
            None => groups.push((row.cell.clone(), row.estimator.clone(), vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(cell, estimator, rs)| {
            let col = |f: fn(&ResultRow) -> f64| MeanStd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                cell,
                estimator,
                reps: rs.len(),
                acme: col(|r| r.abs_err_acme),
                acde: col(|r| r.abs_err_acde),
                ate: col(|r| r.abs_err_ate),
            }
        })
        .collect()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            quote(&r.cell),
            r.estimator,
            r.rep,
            r.abs_err_acme,
            r.abs_err_acde,
            r.abs_err_ate
        ));
    }
    s
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

fn quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The x axis of a plot panel and the series label of the remaining grid
/// parameters.
fn plot_axis(cell: &super::run::Cell) -> (f64, String) {
    let axis = if cell.params.contains_key("p_c") { "p_c" } else { "n" };
    let x = cell.params[axis];
    let rest: Vec<String> = cell
        .label
        .split(',')
        .filter(|kv| !kv.starts_with(&format!("{axis}=")))
        .map(str::to_string)
        .collect();
    let series = if rest.is_empty() { "all".to_string() } else { rest.join(";") };
    (x, series)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.json` and `plotdata/{acme,acde,ate}.csv`.
pub fn emit_outputs(result: &ExperimentResult, dir: impl AsRef<Path>, percent: bool) -> Result<OutputPaths> {
    let dir = dir.as_ref();
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|source| Error::Output {
        path: plot_dir.clone(),
        source,
    })?;
    let rows = result_rows(result, percent);
    if rows.is_empty() {
        log::warn!("experiment produced no result rows");
    }
    let results = dir.join("results.csv");
    write_file(&results, &results_csv(&rows))?;

    let summary_rows = summarize(&rows);
    let summary = Summary {
        provenance: result.provenance.clone(),
        units: if percent { "percent" } else { "raw" }.to_string(),
        rows: summary_rows.clone(),
        failures: result.failures.clone(),
    };
    let summary_path = dir.join("summary.json");
    write_file(&summary_path, &serde_json::to_string_pretty(&summary)?)?;

    let mut plots = Vec::new();
    let effects: [(&str, fn(&SummaryRow) -> MeanStd); 3] =
        [("acme", |r| r.acme), ("acde", |r| r.acde), ("ate", |r| r.ate)];
    for (name, pick) in effects {
        let mut text = String::from(PLOT_HEADER);
        text.push('\n');
        for row in &summary_rows {
            let cell = result
                .cells
                .iter()
                .find(|c| c.cell.label == row.cell)
                .expect("summary cells come from the result");
            let (x, series) = plot_axis(&cell.cell);
            let v = pick(row);
            text.push_str(&format!("{},{},{},{},{}\n", quote(&series), row.estimator, x, v.mean, v.std));
        }
        let path = plot_dir.join(format!("{name}.csv"));
        write_file(&path, &text)?;
        plots.push(path);
    }
    Ok(OutputPaths {
        results,
        summary: summary_path,
        plots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cell: &str, est: &str, rep: usize, e: f64) -> ResultRow {
        ResultRow {
            cell: cell.into(),
            estimator: est.into(),
            rep,
            abs_err_acme: e,
            abs_err_acde: 2.0 * e,
            abs_err_ate: 3.0 * e,
        }
    }

    #[test]
    fn summary_by_hand() {
        let rows = vec![row("n=1", "lsem", 0, 0.1), row("n=1", "lsem", 1, 0.3), row("n=2", "lsem", 0, 0.5)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].acme.mean - 0.2).abs() < 1e-15);
        assert!((s[0].acme.std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((s[0].ate.mean - 0.6).abs() < 1e-15);
        assert_eq!(s[1].reps, 1);
        assert_eq!(s[1].acme.std, 0.0);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let rows = vec![row("n=500,eta=1", "cmavae", 0, 0.1 + 0.2), row("n=500,eta=1", "lsem_i", 3, 1e-17)];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, results_csv(&rows)).unwrap();
        assert_eq!(read_results_csv(&p).unwrap(), rows);
    }
}
