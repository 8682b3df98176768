use std::path::Path;
use std::time::Instant;

use super::config::TrainConfig;
use super::run_dir::{self, Method};
use super::train::{self, RunRecord, Variant};
use crate::baselines::{estimate_confound_effect, kmeans, ruv_purify, KMeansOptions};
use crate::datasets::DatasetBundle;
use crate::error::{Error, Result};
use crate::networks::save_checkpoint;

/// Runs a comparison method and persists it like a training run.
pub fn run_baseline(
    method: Method,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    out: &Path,
) -> Result<RunRecord> {
    let started = Instant::now();
    cfg.validate()?;
    bundle.validate()?;
    let one_hot =
        match method {
            Method::Scab => return Err(Error::invalid("scab is not a baseline; use train")),
            Method::Kmeans => None,
            Method::RuvX | Method::RuvZ => {
                if !bundle.confound.is_fully_observed() {
                    return Err(Error::invalid(
                        "RUV requires fully observed confound labels",
                    ));
                }
                Some(bundle.confound.one_hot().ok_or_else(|| {
                    Error::invalid("RUV cannot be applied to a continuous confound")
                })?)
            }
        };
    if method == Method::RuvZ && cfg.epochs == 0 {
        return Err(Error::invalid("ruv_z needs at least one training epoch"));
    }
    train::write_manifest(out, method, bundle, cfg)?;
    let k = bundle.meta.k_clusters;
    let options = KMeansOptions {
        max_iters: 300,
        n_init: cfg.kmeans_restarts,
    };
    let mut log = Vec::new();
    let features = match method {
        Method::Kmeans => bundle.x.mapv(f64::from),
        Method::RuvX => {
            let x = bundle.x.mapv(f64::from);
            let c = one_hot.as_ref().expect("discrete confound");
            let effect = estimate_confound_effect(&x.view(), &c.view())?;
            ruv_purify(&x.view(), &c.view(), &effect)?
        }
        Method::RuvZ => {
            let trained = train::fit(bundle, cfg, Variant::plain())?.expect("epochs checked above");
            save_checkpoint(&trained.model, &out.join(run_dir::MODEL_FILE))?;
            let c = one_hot.as_ref().expect("discrete confound");
            let effect = estimate_confound_effect(&trained.embeddings.view(), &c.view())?;
            let z = ruv_purify(&trained.embeddings.view(), &c.view(), &effect)?;
            train::write_matrix_f64(&out.join(run_dir::EMBEDDINGS_FILE), &z)?;
            log = trained.log;
            z
        }
        Method::Scab => unreachable!(),
    };
    let fit = kmeans(&features.view(), k, options, cfg.seed)?;
    train::write_matrix_f64(&out.join(run_dir::CENTROIDS_FILE), &fit.centroids)?;
    train::finish(out, bundle, method, fit.partition, log, started)
}
