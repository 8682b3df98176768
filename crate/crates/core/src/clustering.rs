//! Soft k-means head: centroid bank, temperature softmax assignment, EMA
//! centroid updates, initialization and partition extraction.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmeans;

pub const DEFAULT_GAMMA: f64 = 0.995;
pub const DEFAULT_TAU: f64 = 5.0;

/// Lloyd iterations run after k-means++ seeding in [`init_centroids`].
const INIT_LLOYD_ITERS: usize = 10;

/// `K` centroids with their EMA accumulators.
///
/// Invariant: `centroids[k] == mu[k] / mass[k]` and `mass[k] > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidBank {
    pub centroids: Array2<f64>,
    pub mu: Array2<f64>,
    pub mass: Array1<f64>,
    pub gamma: f64,
    pub tau: f64,
}

impl CentroidBank {
    /// A bank with `mu = centroids` and unit mass.
    pub fn from_centroids(centroids: Array2<f64>, gamma: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1], got {gamma}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centroids must be finite"));
        }
        let k = centroids.nrows();
        Ok(CentroidBank {
            mu: centroids.clone(),
            centroids,
            mass: Array1::ones(k),
            gamma,
            tau,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }
}

/// Soft responsibilities and hard labels for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `B x K`, rows sum to one.
    pub lambda: Array2<f64>,
    pub hard: Vec<usize>,
}

/// `lambda[n, k] ∝ exp(-tau * |z_n - e_k|^2)`; hard labels are the argmax,
/// i.e. the nearest centroid, lowest index on ties.
pub fn soft_assign(z: &ArrayView2<f64>, bank: &CentroidBank) -> Assignment {
    let (b, k) = (z.nrows(), bank.k());
    let mut lambda = Array2::zeros((b, k));
    let mut hard = Vec::with_capacity(b);
    let mut dist = vec![0.0; k];
    for (n, row) in z.rows().into_iter().enumerate() {
        let mut best = 0;
        for (j, c) in bank.centroids.rows().into_iter().enumerate() {
            dist[j] = kmeans::sq_dist(row, c);
            if dist[j] < dist[best] {
                best = j;
            }
        }
        // max-subtraction: the largest logit is -tau * dist[best]
        let mut total = 0.0;
        for j in 0..k {
            let w = (-bank.tau * (dist[j] - dist[best])).exp();
            lambda[[n, j]] = w;
            total += w;
        }
        lambda.row_mut(n).mapv_inplace(|w| w / total);
        hard.push(best);
    }
    Assignment { lambda, hard }
}

/// One EMA step from a batch and its hard labels.
///
/// `mu_k <- gamma mu_k + (1 - gamma) sum_b s_bk z_b`,
/// `B_k <- gamma B_k + (1 - gamma) sum_b s_bk`, `e_k <- mu_k / B_k`.
pub fn ema_update(bank: &mut CentroidBank, z: &ArrayView2<f64>, hard: &[usize]) -> Result<()> {
    if z.nrows() != hard.len() {
        return Err(Error::invalid("batch and assignment lengths differ"));
    }
    if z.ncols() != bank.dim() {
        return Err(Error::invalid(
            "embedding dimension does not match centroids",
        ));
    }
    let k = bank.k();
    if let Some(&bad) = hard.iter().find(|&&s| s >= k) {
        return Err(Error::invalid(format!("assignment {bad} outside [0, {k})")));
    }
    let mut sums = Array2::<f64>::zeros(bank.centroids.dim());
    let mut counts = vec![0.0; k];
    for (row, &s) in z.rows().into_iter().zip(hard) {
        let mut acc = sums.row_mut(s);
        acc += &row;
        counts[s] += 1.0;
    }
    let g = bank.gamma;
    if g == 1.0 {
        return Ok(());
    }
    for j in 0..k {
        for (m, &s) in bank.mu.row_mut(j).iter_mut().zip(sums.row(j)) {
            *m = g * *m + (1.0 - g) * s;
        }
        bank.mass[j] = g * bank.mass[j] + (1.0 - g) * counts[j];
        let mass = bank.mass[j];
        // a cluster with no accumulated mass at all keeps its centroid
        if mass > 0.0 {
            for (e, &m) in bank.centroids.row_mut(j).iter_mut().zip(bank.mu.row(j)) {
                *e = m / mass;
            }
        }
    }
    Ok(())
}

/// k-means++ seeding on `z` followed by a few Lloyd iterations.
pub fn init_centroids(
    z: &ArrayView2<f64>,
    k: usize,
    gamma: f64,
    tau: f64,
    seed: u64,
) -> Result<CentroidBank> {
    if k == 0 || z.nrows() < k {
        return Err(Error::invalid(format!(
            "need N >= K >= 1, got N={}, K={k}",
            z.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans::plus_plus(z, k, &mut rng);
    let run = kmeans::lloyd(z, seeds, INIT_LLOYD_ITERS);
    CentroidBank::from_centroids(run.centroids, gamma, tau)
}

/// Hard partition of a dataset into `K` index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Self {
        Partition { labels, k }
    }

    pub fn sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            sets[l].push(i);
        }
        sets
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.k).filter(|&k| !seen[k]).collect()
    }
}

/// `S_k = {n : s_n = k}` from the hard assignment. Empty clusters are
/// logged, not repaired.
pub fn extract_partition(z: &ArrayView2<f64>, bank: &CentroidBank) -> Partition {
    let partition = Partition::new(soft_assign(z, bank).hard, bank.k());
    let empty = partition.empty_clusters();
    if !empty.is_empty() {
        log::warn!("partition has empty clusters: {empty:?}");
    }
    partition
}
