use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::TrainConfig;
use super::run_dir::{self, EpochRecord, Method, PartitionMetrics, RunManifest, RunSummary};
use crate::baselines::{kmeans, KMeansOptions};
use crate::binio;
use crate::clustering::{ema_update, extract_partition, init_centroids, CentroidBank, Partition};
use crate::datasets::{ConfoundValues, DatasetBundle};
use crate::error::{Error, Result};
use crate::metrics::{ari, balance, clustering_accuracy, confound_leakage, nmi};
use crate::networks::{save_checkpoint, Conditioning, ModelShape, ModelState, OutputHead};
use crate::objective::{objective_with_gradient, LatentRouting, ObjectiveWeights, ReconKind};
use crate::optim::Adam;

/// Outcome of a run; the same content is persisted in the run directory.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub method: Method,
    pub epochs: Vec<EpochRecord>,
    /// `None` only for a zero-epoch run.
    pub partition: Option<Partition>,
    pub metrics: PartitionMetrics,
    pub elapsed_seconds: f64,
}

pub(crate) struct Trained {
    pub model: ModelState<f32>,
    pub bank: Option<CentroidBank>,
    /// Posterior means of every sample under the final model.
    pub embeddings: Array2<f64>,
    pub log: Vec<EpochRecord>,
}

/// What the network is trained for.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Variant {
    pub conditional: bool,
    pub eta1: f64,
    pub eta2: f64,
    pub clustered: bool,
}

impl Variant {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Variant {
            conditional: cfg.ablation.disentangling(),
            eta1: cfg.effective_eta1(),
            eta2: cfg.effective_eta2(),
            clustered: cfg.ablation.clustering(),
        }
    }

    /// Plain unconditional VAE.
    pub fn plain() -> Self {
        Variant {
            conditional: false,
            eta1: 0.0,
            eta2: 0.0,
            clustered: false,
        }
    }
}

pub(crate) fn partition_metrics(
    bundle: &DatasetBundle,
    partition: &Partition,
) -> Result<PartitionMetrics> {
    let mut m = PartitionMetrics::default();
    if let Some(y) = &bundle.y {
        let truth: Vec<usize> = y.iter().map(|&v| v as usize).collect();
        m.acc = Some(clustering_accuracy(&partition.labels, &truth)?);
        m.nmi = Some(nmi(&partition.labels, &truth)?);
        m.ari = Some(ari(&partition.labels, &truth)?);
    }
    if let ConfoundValues::Discrete { values, categories } = &bundle.confound.values {
        m.leakage = Some(confound_leakage(&partition.labels, values)?);
        m.balance = Some(balance(partition, values, *categories)?.overall);
    }
    Ok(m)
}

fn posterior_means(model: &ModelState<f32>, x: &ArrayView2<f32>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), model.latent_dim()));
    let chunk = 2048;
    for start in (0..x.nrows()).step_by(chunk) {
        let end = (start + chunk).min(x.nrows());
        let q = model.encode(&x.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..])
            .assign(&q.mean.mapv(f64::from));
    }
    Ok(out)
}

fn post_hoc_kmeans(
    z: &Array2<f64>,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(Partition, Array2<f64>)> {
    let fit = kmeans(
        &z.view(),
        k,
        KMeansOptions {
            max_iters: 300,
            n_init: cfg.kmeans_restarts,
        },
        cfg.seed,
    )?;
    Ok((fit.partition, fit.centroids))
}

fn current_partition(
    z: &Array2<f64>,
    bank: Option<&CentroidBank>,
    k: usize,
    cfg: &TrainConfig,
) -> Result<Partition> {
    match bank {
        Some(b) => Ok(extract_partition(&z.view(), b)),
        None => Ok(post_hoc_kmeans(z, k, cfg)?.0),
    }
}

/// Best of `kmeans_restarts` centroid initializations by inertia.
fn initial_bank(z: &Array2<f64>, k: usize, cfg: &TrainConfig) -> Result<CentroidBank> {
    let mut best: Option<(f64, CentroidBank)> = None;
    for r in 0..cfg.kmeans_restarts as u64 {
        let bank = init_centroids(&z.view(), k, cfg.gamma, cfg.tau, cfg.seed.wrapping_add(r))?;
        let inertia: f64 = z
            .rows()
            .into_iter()
            .map(|row| {
                bank.centroids
                    .rows()
                    .into_iter()
                    .map(|c| (&row - &c).mapv(|v| v * v).sum())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, bank));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn check_trainable(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    bundle.validate()?;
    if !bundle.confound.is_fully_observed() {
        return Err(Error::invalid(
            "confound labels are partially masked; propagate them before training",
        ));
    }
    Ok(())
}

/// Runs the training loop. Returns `None` when `cfg.epochs == 0`.
pub(crate) fn fit(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<Option<Trained>> {
    check_trainable(bundle, cfg)?;
    if cfg.epochs == 0 {
        return Ok(None);
    }
    let n = bundle.n();
    let k = bundle.meta.k_clusters;
    let kind = cfg.recon_kind.resolve(bundle.is_unit_range());
    let shape = ModelShape {
        d_input: bundle.meta.d_input,
        latent_dim: cfg.latent_dim,
        hidden: cfg.hidden.clone(),
        conditioning: if variant.conditional {
            Conditioning::for_labels(&bundle.confound)
        } else {
            Conditioning::None
        },
        output: match kind {
            ReconKind::Bernoulli => OutputHead::Sigmoid,
            ReconKind::Squared => OutputHead::Identity,
        },
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelState::<f32>::init(shape, &mut init_rng)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    let mut adam = Adam::new(cfg.learning_rate);
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.eps = cfg.adam_eps;

    let all: Vec<usize> = (0..n).collect();
    let cond_all = model.condition_rows(&bundle.confound, &all);
    let weights = ObjectiveWeights {
        eta1: variant.eta1,
        eta2: variant.eta2,
        recon: kind,
    };
    let d = cfg.latent_dim;
    let mut bank: Option<CentroidBank> = None;
    let mut log = Vec::new();
    let mut order = all.clone();
    info!(
        "training {} parameters on N={n} for {} epochs",
        model.parameter_count(),
        cfg.epochs
    );

    for epoch in 1..=cfg.epochs {
        if variant.clustered && bank.is_none() && epoch > cfg.warmup_epochs {
            let z = posterior_means(&model, &bundle.x.view())?;
            bank = Some(initial_bank(&z, k, cfg)?);
            debug!("centroids initialized before epoch {epoch}");
        }
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 5];
        for batch in order.chunks(cfg.batch_size) {
            let xb = bundle.x.select(Axis(0), batch);
            let cb = cond_all.select(Axis(0), batch);
            let noise = Array2::<f32>::from_shape_simple_fn((batch.len(), d), || {
                noise_rng.sample(StandardNormal)
            });
            let routing = match (&bank, variant.clustered) {
                (Some(b), true) => LatentRouting::Clustered(b),
                (None, true) => LatentRouting::Warmup,
                (_, false) => LatentRouting::Bypass,
            };
            let out = objective_with_gradient(
                &model,
                &xb.view(),
                &cb.view(),
                &noise.view(),
                routing,
                weights,
            )?;
            if let Some(term) = out.breakdown.non_finite_term() {
                return Err(Error::NonFinite { term, epoch });
            }
            adam.step(&mut model, &out.grads)?;
            if let (Some(b), Some(hard)) = (bank.as_mut(), out.hard.as_ref()) {
                ema_update(b, &out.z.mapv(f64::from).view(), hard)?;
            }
            let w = batch.len() as f64;
            let br = &out.breakdown;
            for (s, v) in
                sums.iter_mut()
                    .zip([br.recon, br.kl_prior, br.pairwise_kl, br.cluster, br.total])
            {
                *s += w * v;
            }
        }
        if epoch % cfg.log_every == 0 || epoch == cfg.epochs {
            let z = posterior_means(&model, &bundle.x.view())?;
            let metrics = if bundle.y.is_some() || bundle.confound.categories().is_some() {
                let p = current_partition(&z, bank.as_ref(), k, cfg)?;
                partition_metrics(bundle, &p)?
            } else {
                PartitionMetrics::default()
            };
            let nf = n as f64;
            let record = EpochRecord {
                epoch,
                recon: sums[0] / nf,
                kl_prior: sums[1] / nf,
                pairwise_kl: sums[2] / nf,
                cluster: sums[3] / nf,
                total: sums[4] / nf,
                metrics,
            };
            info!(
                "epoch {epoch}: total {:.4} recon {:.4} acc {:?} leakage {:?}",
                record.total, record.recon, record.metrics.acc, record.metrics.leakage
            );
            log.push(record);
        }
    }

    let embeddings = posterior_means(&model, &bundle.x.view())?;
    if variant.clustered && bank.is_none() {
        bank = Some(initial_bank(&embeddings, k, cfg)?);
    }
    Ok(Some(Trained {
        model,
        bank,
        embeddings,
        log,
    }))
}

pub(crate) fn write_partition(dir: &Path, partition: &Partition) -> Result<()> {
    let labels = partition.labels.iter().map(|&l| l as u32);
    binio::write_bytes(
        &dir.join(run_dir::ASSIGNMENTS_FILE),
        &binio::encode_u32(labels),
    )
}

pub(crate) fn write_matrix_f64(path: &Path, m: &Array2<f64>) -> Result<()> {
    binio::write_matrix(path, &m.mapv(|v| v as f32))
}

pub(crate) fn finish(
    dir: &Path,
    bundle: &DatasetBundle,
    method: Method,
    partition: Partition,
    log: Vec<EpochRecord>,
    started: Instant,
) -> Result<RunRecord> {
    write_partition(dir, &partition)?;
    run_dir::write_metrics(&dir.join(run_dir::METRICS_FILE), &log)?;
    let metrics = partition_metrics(bundle, &partition)?;
    let elapsed_seconds = started.elapsed().as_secs_f64();
    run_dir::write_json(
        &dir.join(run_dir::SUMMARY_FILE),
        &RunSummary {
            method,
            n: bundle.n(),
            k: partition.k,
            empty_clusters: partition.empty_clusters(),
            elapsed_seconds,
            metrics: metrics.clone(),
            propagation_accuracy: None,
        },
    )?;
    Ok(RunRecord {
        method,
        epochs: log,
        partition: Some(partition),
        metrics,
        elapsed_seconds,
    })
}

pub(crate) fn write_manifest(
    dir: &Path,
    method: Method,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<()> {
    run_dir::create(dir)?;
    run_dir::write_json(
        &dir.join(run_dir::CONFIG_FILE),
        &RunManifest {
            method,
            config: cfg.clone(),
            data: bundle.meta.clone(),
        },
    )
}

/// Trains the confound-aware model and persists the run in `out`.
pub fn train_scab(bundle: &DatasetBundle, cfg: &TrainConfig, out: &Path) -> Result<RunRecord> {
    let started = Instant::now();
    check_trainable(bundle, cfg)?;
    write_manifest(out, Method::Scab, bundle, cfg)?;
    let Some(trained) = fit(bundle, cfg, Variant::from_config(cfg))? else {
        run_dir::write_metrics(&out.join(run_dir::METRICS_FILE), &[])?;
        return Ok(RunRecord {
            method: Method::Scab,
            epochs: Vec::new(),
            partition: None,
            metrics: PartitionMetrics::default(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });
    };
    let k = bundle.meta.k_clusters;
    let (partition, centroids) = match &trained.bank {
        Some(b) => (
            extract_partition(&trained.embeddings.view(), b),
            b.centroids.clone(),
        ),
        None => post_hoc_kmeans(&trained.embeddings, k, cfg)?,
    };
    save_checkpoint(&trained.model, &out.join(run_dir::MODEL_FILE))?;
    write_matrix_f64(&out.join(run_dir::CENTROIDS_FILE), &centroids)?;
    write_matrix_f64(&out.join(run_dir::EMBEDDINGS_FILE), &trained.embeddings)?;
    finish(out, bundle, Method::Scab, partition, trained.log, started)
}
