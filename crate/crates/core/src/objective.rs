//! Loss terms of the confound-sanitizing objective.
//!
//! All terms are per-sample means so the weights do not depend on batch
//! size. The combined objective is
//!
//! ```text
//! total = (1 + eta1) * recon + kl_prior + eta1 * pairwise_kl + eta2 * cluster
//! ```
//!
//! where the reconstruction term is shared by the VAE loss and the
//! mutual-information bound and is evaluated once.

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clustering::{soft_assign, CentroidBank};
use crate::error::{Error, Result};
use crate::networks::{reparameterize, sigmoid, GaussianPosterior, ModelState, OutputHead, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    /// Sum of squared errors per sample.
    Squared,
    /// Sum of per-feature binary cross-entropies per sample.
    Bernoulli,
}

impl ReconKind {
    pub fn default_for(head: OutputHead) -> Self {
        match head {
            OutputHead::Sigmoid => ReconKind::Bernoulli,
            OutputHead::Identity => ReconKind::Squared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl_prior: f64,
    pub pairwise_kl: f64,
    pub cluster: f64,
    pub total: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl LossBreakdown {
    /// Name of the first non-finite component, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("recon", self.recon),
            ("kl_prior", self.kl_prior),
            ("pairwise_kl", self.pairwise_kl),
            ("cluster", self.cluster),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// `KL[N(mean, exp(log_var)) || N(0, I)]`.
pub fn kl_to_standard_normal<F: Real>(mean: ArrayView1<F>, log_var: ArrayView1<F>) -> f64 {
    mean.iter()
        .zip(log_var.iter())
        .map(|(&m, &lv)| {
            let (m, lv) = (m.as_f64(), lv.as_f64());
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum()
}

/// `KL[p || q]` between diagonal Gaussians given as (mean, log-variance).
pub fn kl_between_diag_gaussians<F: Real>(
    p: (ArrayView1<F>, ArrayView1<F>),
    q: (ArrayView1<F>, ArrayView1<F>),
) -> Result<f64> {
    let d = p.0.len();
    if p.1.len() != d || q.0.len() != d || q.1.len() != d {
        return Err(Error::invalid("Gaussian dimensions differ"));
    }
    let mut kl = 0.0;
    for j in 0..d {
        let (mp, lp) = (p.0[j].as_f64(), p.1[j].as_f64());
        let (mq, lq) = (q.0[j].as_f64(), q.1[j].as_f64());
        let diff = mp - mq;
        kl += 0.5 * (lq - lp + (lp.exp() + diff * diff) / lq.exp() - 1.0);
    }
    Ok(kl)
}

/// Mean over samples of the per-sample reconstruction loss.
pub fn reconstruction_loss<F: Real>(
    x: &ArrayView2<F>,
    x_recon: &ArrayView2<F>,
    kind: ReconKind,
) -> Result<f64> {
    if x.dim() != x_recon.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            x.dim(),
            x_recon.dim()
        )));
    }
    let n = x.nrows().max(1) as f64;
    let mut total = 0.0;
    match kind {
        ReconKind::Squared => {
            for (&a, &b) in x.iter().zip(x_recon.iter()) {
                let d = a.as_f64() - b.as_f64();
                total += d * d;
            }
        }
        ReconKind::Bernoulli => {
            for (&a, &b) in x.iter().zip(x_recon.iter()) {
                let (a, b) = (a.as_f64(), b.as_f64());
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::invalid(format!(
                        "bernoulli target {a} outside [0, 1]"
                    )));
                }
                if !(b > 0.0 && b < 1.0) {
                    return Err(Error::invalid(format!(
                        "bernoulli prediction {b} outside (0, 1)"
                    )));
                }
                total -= a * b.ln() + (1.0 - a) * (1.0 - b).ln();
            }
        }
    }
    Ok(total / n)
}

/// Reconstruction and prior-KL terms of the conditional VAE loss for one
/// noise draw per sample. `z_tilde = None` feeds `z` itself to the fusion
/// layer; `bypass_fusion` decodes `z` directly.
pub fn vae_loss<F: Real>(
    state: &ModelState<F>,
    x: &ArrayView2<F>,
    cond: &ArrayView2<F>,
    noise: &ArrayView2<F>,
    z_tilde: Option<&ArrayView2<F>>,
    bypass_fusion: bool,
    kind: ReconKind,
) -> Result<(f64, f64)> {
    let posterior = state.encode(x)?;
    let z = reparameterize(&posterior, noise)?;
    let z_hat = if bypass_fusion {
        z.clone()
    } else {
        match z_tilde {
            Some(zt) => state.fuse(&z.view(), zt)?,
            None => state.fuse(&z.view(), &z.view())?,
        }
    };
    let x_recon = state.decode(&z_hat.view(), cond)?;
    let recon = reconstruction_loss(x, &x_recon.view(), kind)?;
    let b = posterior.batch_size().max(1) as f64;
    let kl: f64 = (0..posterior.batch_size())
        .map(|i| kl_to_standard_normal(posterior.mean.row(i), posterior.log_var.row(i)))
        .sum();
    Ok((recon, kl / b))
}

/// Mean over all `B^2` ordered pairs of `KL[q(z|x_n) || q(z|x_m)]`.
pub fn mi_pairwise_term<F: Real>(posterior: &GaussianPosterior<F>) -> Result<f64> {
    let b = posterior.batch_size();
    if b < 2 {
        return Err(Error::invalid("pairwise term needs a batch of at least 2"));
    }
    let mut total = 0.0;
    for n in 0..b {
        for m in 0..b {
            if n != m {
                total += kl_between_diag_gaussians(
                    (posterior.mean.row(n), posterior.log_var.row(n)),
                    (posterior.mean.row(m), posterior.log_var.row(m)),
                )?;
            }
        }
    }
    Ok(total / (b * b) as f64)
}

/// Mean squared distance of each embedding to its assigned centroid.
pub fn cluster_loss<F: Real>(
    z: &ArrayView2<F>,
    hard: &[usize],
    centroids: &ArrayView2<f64>,
) -> Result<f64> {
    if z.nrows() != hard.len() {
        return Err(Error::invalid("embedding and assignment lengths differ"));
    }
    if z.ncols() != centroids.ncols() {
        return Err(Error::invalid("embedding and centroid dimensions differ"));
    }
    let k = centroids.nrows();
    let mut total = 0.0;
    for (row, &s) in z.rows().into_iter().zip(hard) {
        if s >= k {
            return Err(Error::invalid(format!("assignment {s} outside [0, {k})")));
        }
        total += row
            .iter()
            .zip(centroids.row(s))
            .map(|(&a, &e)| (a.as_f64() - e).powi(2))
            .sum::<f64>();
    }
    Ok(total / hard.len().max(1) as f64)
}

pub fn total_loss(
    recon: f64,
    kl_prior: f64,
    pairwise_kl: f64,
    cluster: f64,
    eta1: f64,
    eta2: f64,
) -> Result<LossBreakdown> {
    if !(eta1 >= 0.0 && eta2 >= 0.0) {
        return Err(Error::invalid("loss weights must be nonnegative"));
    }
    Ok(LossBreakdown {
        recon,
        kl_prior,
        pairwise_kl,
        cluster,
        total: (1.0 + eta1) * recon + kl_prior + eta1 * pairwise_kl + eta2 * cluster,
        eta1,
        eta2,
    })
}

/// Mean over samples of `log lambda[n, s_n]`, the cluster term of the
/// mutual-information lower bound between embeddings and assignments.
/// Always `<= 0`; diagnostic only.
pub fn cluster_mi_lower_bound<F: Real>(
    z: &ArrayView2<F>,
    hard: &[usize],
    centroids: &ArrayView2<f64>,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    if z.nrows() != hard.len() || z.ncols() != centroids.ncols() {
        return Err(Error::invalid("shape mismatch"));
    }
    let mut total = 0.0;
    let mut logits = vec![0.0; centroids.nrows()];
    for (row, &s) in z.rows().into_iter().zip(hard) {
        for (k, c) in centroids.rows().into_iter().enumerate() {
            let d: f64 = row
                .iter()
                .zip(c)
                .map(|(&a, &e)| (a.as_f64() - e).powi(2))
                .sum();
            logits[k] = -tau * d;
        }
        let top = (0..logits.len()).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
        let rest: f64 = (0..logits.len())
            .filter(|&k| k != top)
            .map(|k| (logits[k] - logits[top]).exp())
            .sum();
        let lse = logits[top] + rest.ln_1p();
        total += (logits[s] - lse).min(0.0);
    }
    Ok(total / hard.len().max(1) as f64)
}

/// Weights of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub eta1: f64,
    pub eta2: f64,
    pub recon: ReconKind,
}

/// What the fusion layer sees for a batch.
#[derive(Clone, Copy, Debug)]
pub enum LatentRouting<'a> {
    /// Before centroids exist: `z_tilde = z` and no cluster term.
    Warmup,
    /// `z_tilde` is the assigned centroid, cluster term active.
    Clustered(&'a CentroidBank),
    /// Fusion skipped, `z_hat = z`, no cluster term.
    Bypass,
}

/// Loss, parameter gradients and the sampled embeddings of one batch.
pub struct BatchGradient<F> {
    pub breakdown: LossBreakdown,
    pub grads: ModelState<F>,
    pub z: Array2<F>,
    /// Hard assignments under [`LatentRouting::Clustered`].
    pub hard: Option<Vec<usize>>,
}

/// Closed-form mean pairwise KL over `B^2` ordered pairs with gradients
/// with respect to the means and log-variances. The log-variance ratio
/// terms cancel in the full pair sum, leaving `O(B d)` work.
pub(crate) fn pairwise_kl_with_grad<F: Real>(
    mean: &ArrayView2<F>,
    log_var: &ArrayView2<F>,
) -> (f64, Array2<f64>, Array2<f64>) {
    let (b, d) = mean.dim();
    let bf = b as f64;
    let c = 0.5 / (bf * bf);
    let mut value = 0.0;
    let mut d_mean = Array2::zeros((b, d));
    let mut d_lv = Array2::zeros((b, d));
    for j in 0..d {
        let col_mean = mean.column(j).iter().map(|v| v.as_f64()).sum::<f64>() / bf;
        let a: Vec<f64> = mean
            .column(j)
            .iter()
            .map(|v| v.as_f64() - col_mean)
            .collect();
        let v: Vec<f64> = log_var.column(j).iter().map(|l| l.as_f64().exp()).collect();
        let w: Vec<f64> = log_var
            .column(j)
            .iter()
            .map(|l| (-l.as_f64()).exp())
            .collect();
        let s_v: f64 = v.iter().sum();
        let s_w: f64 = w.iter().sum();
        let s_a: f64 = a.iter().sum();
        let s_a2: f64 = a.iter().map(|x| x * x).sum();
        let s_wa: f64 = w.iter().zip(&a).map(|(w, a)| w * a).sum();
        let spread = |n: usize| s_a2 - 2.0 * a[n] * s_a + bf * a[n] * a[n];
        let t: f64 = (0..b).map(|m| w[m] * spread(m)).sum();
        value += s_v * s_w + t - bf * bf;
        for n in 0..b {
            d_mean[[n, j]] = c * (2.0 * a[n] * s_w - 2.0 * s_wa + 2.0 * w[n] * (bf * a[n] - s_a));
            d_lv[[n, j]] = c * (v[n] * s_w - w[n] * s_v - w[n] * spread(n));
        }
    }
    (c * value, d_mean, d_lv)
}

fn to_f64_matrix<F: Real>(m: &ArrayView2<F>) -> Array2<f64> {
    m.mapv(|v| v.as_f64())
}

/// Forward and backward pass of the combined objective on one batch.
///
/// Centroids are treated as constants (stop-gradient); the fusion layer's
/// second input is never differentiated.
pub fn objective_with_gradient<F: Real>(
    state: &ModelState<F>,
    x: &ArrayView2<F>,
    cond: &ArrayView2<F>,
    noise: &ArrayView2<F>,
    routing: LatentRouting<'_>,
    weights: ObjectiveWeights,
) -> Result<BatchGradient<F>> {
    let ObjectiveWeights {
        eta1,
        eta2,
        recon: kind,
    } = weights;
    if !(eta1 >= 0.0 && eta2 >= 0.0) {
        return Err(Error::invalid("loss weights must be nonnegative"));
    }
    if kind == ReconKind::Bernoulli && state.shape.output != OutputHead::Sigmoid {
        return Err(Error::invalid(
            "bernoulli reconstruction requires a sigmoid output head",
        ));
    }
    let (b, d) = (x.nrows(), state.latent_dim());
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let bf = b as f64;
    let fcast = F::from_f64;

    let enc = state.encode_pass(x)?;
    let GaussianPosterior { mean, log_var } = &enc.posterior;
    let z = reparameterize(&enc.posterior, noise)?;

    let mut hard = None;
    let mut assigned: Option<Array2<F>> = None;
    let (z_hat, fusion_input) = match routing {
        LatentRouting::Warmup => {
            let joint = concatenate![Axis(1), z, z];
            (state.fusion.forward(&joint.view()), Some(joint))
        }
        LatentRouting::Clustered(bank) => {
            if bank.dim() != d {
                return Err(Error::invalid(
                    "centroid dimension does not match latent dimension",
                ));
            }
            let a = soft_assign(&to_f64_matrix(&z.view()).view(), bank);
            let e = Array2::from_shape_fn((b, d), |(n, j)| fcast(bank.centroids[[a.hard[n], j]]));
            let joint = concatenate![Axis(1), z, e];
            hard = Some(a.hard);
            assigned = Some(e);
            (state.fusion.forward(&joint.view()), Some(joint))
        }
        LatentRouting::Bypass => (z.clone(), None),
    };

    let dec_in = state.decoder_input(&z_hat.view(), cond)?;
    let (logits, dec_cache) = state.decoder.forward_cached(dec_in);
    if logits.dim() != x.dim() {
        return Err(Error::invalid("decoder output shape does not match input"));
    }

    // reconstruction, computed once and weighted (1 + eta1)
    let recon_weight = 1.0 + eta1;
    let g_scale = fcast(recon_weight / bf);
    let mut recon_sum = 0.0;
    let mut d_logits = Array2::<F>::zeros(logits.dim());
    for ((&l, &t), g) in logits.iter().zip(x.iter()).zip(d_logits.iter_mut()) {
        match (kind, state.shape.output) {
            (ReconKind::Bernoulli, _) => {
                let (lf, tf) = (l.as_f64(), t.as_f64());
                recon_sum += lf.max(0.0) + (-lf.abs()).exp().ln_1p() - tf * lf;
                *g = (sigmoid(l) - t) * g_scale;
            }
            (ReconKind::Squared, OutputHead::Identity) => {
                let diff = l - t;
                recon_sum += diff.as_f64().powi(2);
                *g = fcast(2.0) * diff * g_scale;
            }
            (ReconKind::Squared, OutputHead::Sigmoid) => {
                let p = sigmoid(l);
                let diff = p - t;
                recon_sum += diff.as_f64().powi(2);
                *g = fcast(2.0) * diff * p * (F::one() - p) * g_scale;
            }
        }
    }
    let recon = recon_sum / bf;

    let kl_prior = (0..b)
        .map(|i| kl_to_standard_normal(mean.row(i), log_var.row(i)))
        .sum::<f64>()
        / bf;
    let (pairwise_kl, d_pair_mean, d_pair_lv) = if b >= 2 {
        pairwise_kl_with_grad(&mean.view(), &log_var.view())
    } else {
        (0.0, Array2::zeros((b, d)), Array2::zeros((b, d)))
    };
    let (cluster, cluster_weight) = match (&assigned, &hard, routing) {
        (Some(_), Some(h), LatentRouting::Clustered(bank)) => {
            (cluster_loss(&z.view(), h, &bank.centroids.view())?, eta2)
        }
        _ => {
            let _ = &assigned;
            (0.0, 0.0)
        }
    };
    let breakdown = total_loss(recon, kl_prior, pairwise_kl, cluster, eta1, eta2)?;

    let mut grads = state.zeros_like();
    let d_dec_in = state
        .decoder
        .backward(&dec_cache, d_logits, &mut grads.decoder);
    let d_z_hat = d_dec_in.slice(s![.., ..d]).to_owned();
    let mut d_z = match &fusion_input {
        Some(joint) => {
            let d_joint = state
                .fusion
                .backward(&joint.view(), &d_z_hat.view(), &mut grads.fusion);
            d_joint.slice(s![.., ..d]).to_owned()
        }
        None => d_z_hat,
    };
    if let Some(e) = &assigned {
        let scale = fcast(2.0 * cluster_weight / bf);
        d_z.zip_mut_with(&(&z - e), |g, &diff| *g += scale * diff);
    }

    let half = fcast(0.5);
    let inv_b = fcast(1.0 / bf);
    let mut d_enc = Array2::<F>::zeros((b, 2 * d));
    let (lo, hi) = (
        fcast(crate::networks::LOG_VAR_MIN),
        fcast(crate::networks::LOG_VAR_MAX),
    );
    for n in 0..b {
        for j in 0..d {
            let (m, lv) = (mean[[n, j]], log_var[[n, j]]);
            let std = (lv * half).exp();
            let gz = d_z[[n, j]];
            d_enc[[n, j]] = gz + m * inv_b + fcast(eta1 * d_pair_mean[[n, j]]);
            let raw = enc.raw_log_var[[n, j]];
            d_enc[[n, d + j]] = if raw < lo || raw > hi {
                F::zero()
            } else {
                gz * half * std * noise[[n, j]]
                    + half * (lv.exp() - F::one()) * inv_b
                    + fcast(eta1 * d_pair_lv[[n, j]])
            };
        }
    }
    state
        .encoder
        .backward(&enc.cache, d_enc, &mut grads.encoder);

    Ok(BatchGradient {
        breakdown,
        grads,
        z,
        hard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{Conditioning, ModelShape};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kl_to_prior_cases() {
        assert_eq!(
            kl_to_standard_normal(array![0.0].view(), array![0.0].view()),
            0.0
        );
        assert!(
            (kl_to_standard_normal(array![1.0].view(), array![0.0].view()) - 0.5).abs() < 1e-15
        );
        let v = kl_to_standard_normal(array![0.0].view(), array![1.0].view());
        assert!((v - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!((v - 0.3591).abs() < 1e-4);
    }

    #[test]
    fn kl_between_cases() {
        let z = array![0.0];
        let one = array![1.0];
        assert_eq!(
            kl_between_diag_gaussians((z.view(), z.view()), (z.view(), z.view())).unwrap(),
            0.0
        );
        let v = kl_between_diag_gaussians((z.view(), z.view()), (one.view(), z.view())).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let four = array![4.0f64.ln()];
        let v = kl_between_diag_gaussians((z.view(), z.view()), (z.view(), four.view())).unwrap();
        assert!((v - 0.5 * (4.0f64.ln() - 0.75)).abs() < 1e-12);
        assert!((v - 0.3181).abs() < 1e-4);
        assert!(kl_between_diag_gaussians(
            (z.view(), z.view()),
            (array![0.0, 1.0].view(), z.view())
        )
        .is_err());
    }

    #[test]
    fn reconstruction_cases() {
        let x = array![[0.2, 0.7]];
        assert_eq!(
            reconstruction_loss(&x.view(), &x.view(), ReconKind::Squared).unwrap(),
            0.0
        );
        let v = reconstruction_loss(
            &array![[1.0]].view(),
            &array![[0.5]].view(),
            ReconKind::Bernoulli,
        )
        .unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let v = reconstruction_loss(
            &array![[1.0, 0.0]].view(),
            &array![[0.8, 0.6]].view(),
            ReconKind::Bernoulli,
        )
        .unwrap();
        assert!((v - 1.1394).abs() < 1e-4);
        assert!((v + 0.8f64.ln() + 0.4f64.ln()).abs() < 1e-12);
        assert!(reconstruction_loss(
            &array![[1.2]].view(),
            &array![[0.5]].view(),
            ReconKind::Bernoulli
        )
        .is_err());
        assert!(reconstruction_loss(
            &array![[1.0]].view(),
            &array![[1.0]].view(),
            ReconKind::Bernoulli
        )
        .is_err());
        assert!(reconstruction_loss(
            &array![[1.0]].view(),
            &array![[1.0, 2.0]].view(),
            ReconKind::Squared
        )
        .is_err());
    }

    #[test]
    fn pairwise_cases() {
        let same = GaussianPosterior {
            mean: array![[0.3, -0.1], [0.3, -0.1], [0.3, -0.1]],
            log_var: array![[0.2, 0.0], [0.2, 0.0], [0.2, 0.0]],
        };
        assert_eq!(mi_pairwise_term(&same).unwrap(), 0.0);
        // N(0,1) and N(1,1): both directed KLs are 0.5, mean over 4 pairs
        let two = GaussianPosterior {
            mean: array![[0.0], [1.0]],
            log_var: array![[0.0], [0.0]],
        };
        assert!((mi_pairwise_term(&two).unwrap() - 0.25).abs() < 1e-15);
        let one = GaussianPosterior {
            mean: array![[0.0]],
            log_var: array![[0.0]],
        };
        assert!(mi_pairwise_term(&one).is_err());
    }

    #[test]
    fn pairwise_shrinks_with_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-2.0..2.0));
        let lv = Array2::from_elem((6, 3), 0.3);
        let avg = mean.mean_axis(Axis(0)).unwrap();
        let mut prev = f64::INFINITY;
        for alpha in [1.0, 0.8, 0.5, 0.2, 0.05] {
            let m = &avg + &((&mean - &avg) * alpha);
            let v = mi_pairwise_term(&GaussianPosterior {
                mean: m,
                log_var: lv.clone(),
            })
            .unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn closed_form_pairwise_matches_enumeration_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for b in [2, 3, 7, 16] {
            let mean = Array2::from_shape_simple_fn((b, 4), || rng.random_range(-3.0..3.0) + 5.0);
            let lv = Array2::from_shape_simple_fn((b, 4), || rng.random_range(-2.0..2.0));
            let q = GaussianPosterior { mean, log_var: lv };
            let direct = mi_pairwise_term(&q).unwrap();
            let (fast, _, _) = pairwise_kl_with_grad(&q.mean.view(), &q.log_var.view());
            assert!((direct - fast).abs() <= 1e-10 * direct.max(1.0));

            let perm: Vec<usize> = (0..b).rev().collect();
            let shuffled = GaussianPosterior {
                mean: q.mean.select(Axis(0), &perm),
                log_var: q.log_var.select(Axis(0), &perm),
            };
            assert!(
                (mi_pairwise_term(&shuffled).unwrap() - direct).abs() < 1e-10 * direct.max(1.0)
            );
        }
    }

    #[test]
    fn closed_form_pairwise_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mean = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0));
        let lv = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0));
        let (_, gm, gl) = pairwise_kl_with_grad(&mean.view(), &lv.view());
        let h = 1e-6;
        let f = |m: &Array2<f64>, l: &Array2<f64>| {
            mi_pairwise_term(&GaussianPosterior {
                mean: m.clone(),
                log_var: l.clone(),
            })
            .unwrap()
        };
        for n in 0..5 {
            for j in 0..2 {
                let (mut mp, mut mm) = (mean.clone(), mean.clone());
                mp[[n, j]] += h;
                mm[[n, j]] -= h;
                let fd = (f(&mp, &lv) - f(&mm, &lv)) / (2.0 * h);
                assert!((fd - gm[[n, j]]).abs() < 1e-7, "mean grad {n},{j}");
                let (mut lp, mut lm) = (lv.clone(), lv.clone());
                lp[[n, j]] += h;
                lm[[n, j]] -= h;
                let fd = (f(&mean, &lp) - f(&mean, &lm)) / (2.0 * h);
                assert!((fd - gl[[n, j]]).abs() < 1e-7, "log-var grad {n},{j}");
            }
        }
    }

    #[test]
    fn cluster_loss_cases() {
        let e = array![[0.0, 0.0]];
        assert_eq!(
            cluster_loss(&array![[0.0, 0.0]].view(), &[0], &e.view()).unwrap(),
            0.0
        );
        assert_eq!(
            cluster_loss(&array![[1.0, 0.0]].view(), &[0], &e.view()).unwrap(),
            1.0
        );
        let v = cluster_loss(&array![[0.0], [1.0]].view(), &[0, 0], &array![[0.5]].view()).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!(cluster_loss(&array![[1.0, 0.0]].view(), &[1], &e.view()).is_err());
    }

    #[test]
    fn total_loss_cases() {
        let t = total_loss(2.0, 1.0, 3.0, 4.0, 0.0, 0.0).unwrap();
        assert_eq!(t.total, 3.0);
        let t = total_loss(2.0, 1.0, 3.0, 4.0, 1.0, 0.1).unwrap();
        assert!((t.total - 8.4).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, 1.0, 0.1).unwrap().total, 0.0);
        assert!(total_loss(1.0, 1.0, 1.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn mi_lower_bound_cases() {
        let e = array![[-1.0], [1.0]];
        let v = cluster_mi_lower_bound(&array![[0.0]].view(), &[0], &e.view(), 5.0).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
        // d^2 = (0.25, 2.25) at tau = 5
        let v = cluster_mi_lower_bound(
            &array![[0.5]].view(),
            &[0],
            &array![[0.0], [2.0]].view(),
            5.0,
        )
        .unwrap();
        let expected = (1.0 / (1.0 + (-10.0f64).exp())).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v + 4.54e-5).abs() < 0.01e-5);
        let far = array![[0.0], [3.0]];
        let mut prev = f64::NEG_INFINITY;
        for tau in [0.5, 1.0, 5.0, 50.0] {
            let v = cluster_mi_lower_bound(&array![[0.0]].view(), &[0], &far.view(), tau).unwrap();
            assert!(v <= 0.0 && v > prev);
            prev = v;
        }
        assert!(prev > -1e-12);
    }

    #[test]
    fn vae_loss_limits() {
        // zero network with identity head reconstructs 0 and has a standard posterior
        let shape = ModelShape {
            d_input: 3,
            latent_dim: 2,
            hidden: vec![4],
            conditioning: Conditioning::None,
            output: OutputHead::Identity,
        };
        let m = ModelState::<f64>::zeros(shape).unwrap();
        let x = Array2::zeros((5, 3));
        let cond = Array2::zeros((5, 0));
        let noise = Array2::zeros((5, 2));
        let (r, k) = vae_loss(
            &m,
            &x.view(),
            &cond.view(),
            &noise.view(),
            None,
            false,
            ReconKind::Squared,
        )
        .unwrap();
        assert_eq!((r, k), (0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = ModelState::<f64>::init(m.shape.clone(), &mut rng).unwrap();
        let row = array![[0.4, -1.0, 2.0]];
        let x = ndarray::concatenate![Axis(0), row, row];
        let single_noise = array![[0.3, -0.2]];
        let noise = ndarray::concatenate![Axis(0), single_noise, single_noise];
        let (r2, k2) = vae_loss(
            &m,
            &x.view(),
            &Array2::zeros((2, 0)).view(),
            &noise.view(),
            None,
            false,
            ReconKind::Squared,
        )
        .unwrap();
        let (r1, k1) = vae_loss(
            &m,
            &row.view(),
            &Array2::zeros((1, 0)).view(),
            &single_noise.view(),
            None,
            false,
            ReconKind::Squared,
        )
        .unwrap();
        assert!((r1 - r2).abs() < 1e-12 && (k1 - k2).abs() < 1e-12);
        assert!(r1 >= 0.0 && k1 >= 0.0);
    }

    #[test]
    fn batch_gradient_breakdown_matches_public_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shape = ModelShape {
            d_input: 5,
            latent_dim: 2,
            hidden: vec![6],
            conditioning: Conditioning::Discrete { categories: 2 },
            output: OutputHead::Sigmoid,
        };
        let m = ModelState::<f64>::init(shape, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 5), || rng.random_range(0.0..1.0));
        let cond = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let noise = Array2::from_shape_simple_fn((4, 2), || rng.sample(StandardNormal));
        let w = ObjectiveWeights {
            eta1: 0.7,
            eta2: 0.3,
            recon: ReconKind::Bernoulli,
        };
        let out = objective_with_gradient(
            &m,
            &x.view(),
            &cond.view(),
            &noise.view(),
            LatentRouting::Warmup,
            w,
        )
        .unwrap();
        let (r, k) = vae_loss(
            &m,
            &x.view(),
            &cond.view(),
            &noise.view(),
            None,
            false,
            ReconKind::Bernoulli,
        )
        .unwrap();
        let q = m.encode(&x.view()).unwrap();
        let p = mi_pairwise_term(&q).unwrap();
        assert!((out.breakdown.recon - r).abs() < 1e-10);
        assert!((out.breakdown.kl_prior - k).abs() < 1e-12);
        assert!((out.breakdown.pairwise_kl - p).abs() < 1e-10);
        assert_eq!(out.breakdown.cluster, 0.0);
        let expected = total_loss(r, k, p, 0.0, 0.7, 0.3).unwrap().total;
        assert!((out.breakdown.total - expected).abs() < 1e-10);
    }
}
