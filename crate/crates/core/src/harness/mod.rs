//! Configuration, the training loop, baseline orchestration, evaluation
//! and reporting. Every run lives in its own directory:
//!
//! | file              | content                                         |
//! |-------------------|-------------------------------------------------|
//! | `config.json`     | method, full config, dataset shape              |
//! | `metrics.jsonl`   | one record per logged epoch                     |
//! | `model.bin`       | network checkpoint (trained methods only)       |
//! | `centroids.bin`   | `u32 K, u32 d`, then `K*d` f32le                |
//! | `assignments.bin` | `N` u32le cluster indices                       |
//! | `embeddings.bin`  | `u32 N, u32 d`, then `N*d` f32le posterior means |
//! | `summary.json`    | final metrics and wall time                     |

mod baseline;
mod config;
mod evaluate;
mod pca;
mod report;
mod run_dir;
mod train;

pub use baseline::run_baseline;
pub use config::{Ablation, ReconChoice, TrainConfig};
pub use evaluate::{evaluate, EvalRow};
pub use pca::{pca, Pca};
pub use report::{render_scatter_svg, report, Panel, Report};
pub use run_dir::{
    read_assignments, read_centroids, read_embeddings, read_manifest, read_metrics, read_summary,
    EpochRecord, Method, PartitionMetrics, RunManifest, RunSummary, ASSIGNMENTS_FILE,
    CENTROIDS_FILE, CONFIG_FILE, EMBEDDINGS_FILE, METRICS_FILE, MODEL_FILE, SUMMARY_FILE,
};
pub use train::{train_scab, RunRecord};
