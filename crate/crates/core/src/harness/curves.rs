use std::path::{Path, PathBuf};

use super::eval::mean_std;
use super::train::{read_metrics, MetricsRow};
use crate::error::{Error, Result};

/// Evaluation returns of several runs on a shared step grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveTable {
    pub labels: Vec<String>,
    pub steps: Vec<u64>,
    /// `returns[i][k]`: run `k` at `steps[i]`.
    pub returns: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Population standard deviation across runs.
    pub std: Vec<f64>,
}

impl CurveTable {
    pub fn from_runs(labels: Vec<String>, runs: &[Vec<MetricsRow>]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Contract("curves need at least one metrics file".into()))?;
        let steps: Vec<u64> = first.iter().map(|r| r.step).collect();
        for (label, run) in labels.iter().zip(runs) {
            let s: Vec<u64> = run.iter().map(|r| r.step).collect();
            if s != steps {
                return Err(Error::Alignment(format!(
                    "`{label}` has steps {s:?}, `{}` has {steps:?}",
                    labels[0]
                )));
            }
        }
        let returns: Vec<Vec<f64>> = (0..steps.len())
            .map(|i| runs.iter().map(|run| run[i].avg_test_return).collect())
            .collect();
        let (mean, std) = returns.iter().map(|row| mean_std(row)).unzip();
        Ok(Self {
            labels,
            steps,
            returns,
            mean,
            std,
        })
    }

    /// Maximum over evaluation points of the cross-run mean, with its step
    /// and the cross-run std at that point.
    pub fn max_average_return(&self) -> Option<(u64, f64, f64)> {
        (0..self.steps.len())
            .max_by(|&a, &b| self.mean[a].total_cmp(&self.mean[b]))
            .map(|i| (self.steps[i], self.mean[i], self.std[i]))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["step".to_string()];
        header.extend(self.labels.iter().cloned());
        header.extend(["mean".to_string(), "std".to_string()]);
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (i, step) in self.steps.iter().enumerate() {
            let mut rec = vec![step.to_string()];
            rec.extend(self.returns[i].iter().map(|v| v.to_string()));
            rec.push(self.mean[i].to_string());
            rec.push(self.std[i].to_string());
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Column label for a metrics file: its directory name (e.g. `seed-3`),
/// falling back to the position when names are missing or repeated.
fn labels_for(files: &[PathBuf]) -> Vec<String> {
    let names: Vec<Option<String>> = files
        .iter()
        .map(|f| {
            f.parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        })
        .collect();
    names
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            Some(n) if names.iter().filter(|m| m.as_ref() == Some(n)).count() == 1 => n.clone(),
            _ => format!("run{i}"),
        })
        .collect()
}

/// Reads metrics files and writes `step, <one column per run>, mean, std`.
pub fn emit_curves(files: &[PathBuf], out: &Path) -> Result<CurveTable> {
    let runs = files
        .iter()
        .map(|f| read_metrics(f))
        .collect::<Result<Vec<_>>>()?;
    let table = CurveTable::from_runs(labels_for(files), &runs)?;
    table.write_csv(out)?;
    Ok(table)
}
