use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run_dir::{self, Method, PartitionMetrics};
use super::train::partition_metrics;
use crate::clustering::Partition;
use crate::datasets::DatasetBundle;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run: String,
    pub method: Method,
    pub n: usize,
    pub k: usize,
    #[serde(flatten)]
    pub metrics: PartitionMetrics,
}

pub(crate) fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Recomputes metrics from a run's persisted assignments.
pub fn evaluate(dir: &Path, bundle: &DatasetBundle) -> Result<EvalRow> {
    let manifest = run_dir::read_manifest(dir)?;
    let labels = run_dir::read_assignments(dir)?;
    let path = dir.join(run_dir::ASSIGNMENTS_FILE);
    if labels.len() != bundle.n() {
        return Err(Error::format(
            &path,
            format!(
                "{} assignments for a dataset of {} samples",
                labels.len(),
                bundle.n()
            ),
        ));
    }
    let k = labels
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(manifest.data.k_clusters);
    let partition = Partition::new(labels.into_iter().map(|l| l as usize).collect(), k);
    Ok(EvalRow {
        run: run_name(dir),
        method: manifest.method,
        n: bundle.n(),
        k,
        metrics: partition_metrics(bundle, &partition)?,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table, one row per run.
pub(crate) fn format_table(rows: &[EvalRow]) -> String {
    let header = [
        "run", "method", "n", "k", "acc", "nmi", "ari", "leakage", "balance",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.run.clone(),
                r.method.name().to_string(),
                r.n.to_string(),
                r.k.to_string(),
                cell(r.metrics.acc),
                cell(r.metrics.nmi),
                cell(r.metrics.ari),
                cell(r.metrics.leakage),
                cell(r.metrics.balance),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    for row in body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
