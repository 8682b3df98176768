use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::binio;
use crate::datasets::BundleMeta;
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MODEL_FILE: &str = "model.bin";
pub const CENTROIDS_FILE: &str = "centroids.bin";
pub const ASSIGNMENTS_FILE: &str = "assignments.bin";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Scab,
    Kmeans,
    RuvX,
    RuvZ,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scab" => Ok(Method::Scab),
            "kmeans" => Ok(Method::Kmeans),
            "ruv_x" => Ok(Method::RuvX),
            "ruv_z" => Ok(Method::RuvZ),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Scab => "scab",
            Method::Kmeans => "kmeans",
            Method::RuvX => "ruv_x",
            Method::RuvZ => "ruv_z",
        }
    }
}

/// Contents of `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub config: TrainConfig,
    pub data: BundleMeta,
}

/// Metrics of a final partition; confound columns are `None` for a
/// continuous confound, interest columns when labels are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leakage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub balance: Option<f64>,
}

/// One line of `metrics.jsonl`. Loss terms are sample-weighted means over
/// the epoch's minibatches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub kl_prior: f64,
    pub pairwise_kl: f64,
    pub cluster: f64,
    pub total: f64,
    #[serde(flatten)]
    pub metrics: PartitionMetrics,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub empty_clusters: Vec<usize>,
    pub elapsed_seconds: f64,
    #[serde(flatten)]
    pub metrics: PartitionMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub propagation_accuracy: Option<f64>,
}

pub(crate) fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::invalid(e.to_string()))?;
        out.write_all(b"\n").expect("write to memory");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(dir: &Path) -> Result<Vec<EpochRecord>> {
    let path = dir.join(METRICS_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(&path, e.to_string())))
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    read_json(&dir.join(CONFIG_FILE))
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    read_json(&dir.join(SUMMARY_FILE))
}

pub fn read_assignments(dir: &Path) -> Result<Vec<u32>> {
    binio::read_u32_file_any(&dir.join(ASSIGNMENTS_FILE))
}

pub fn read_embeddings(dir: &Path) -> Result<Array2<f32>> {
    binio::read_matrix(&dir.join(EMBEDDINGS_FILE))
}

pub fn read_centroids(dir: &Path) -> Result<Array2<f32>> {
    binio::read_matrix(&dir.join(CENTROIDS_FILE))
}
