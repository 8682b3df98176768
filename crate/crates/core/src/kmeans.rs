//! Lloyd iterations and k-means++ seeding shared by the clustering head and
//! the k-means baseline.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (lowest index on ties) and the squared
/// distance to it. Candidates are ranked with the expanded form
/// `|x|^2 - 2 x.c + |c|^2`; the reported distance is recomputed exactly.
pub(crate) fn assign(x: &ArrayView2<f64>, centroids: &ArrayView2<f64>) -> (Vec<usize>, Vec<f64>) {
    let cross = x.dot(&centroids.t());
    let c_norm: Vec<f64> = centroids.rows().into_iter().map(|c| c.dot(&c)).collect();
    let mut labels = Vec::with_capacity(x.nrows());
    let mut dists = Vec::with_capacity(x.nrows());
    for (row, cr) in x.rows().into_iter().zip(cross.rows()) {
        let mut best = (0, f64::INFINITY);
        for (k, (&xc, &cn)) in cr.iter().zip(&c_norm).enumerate() {
            let score = cn - 2.0 * xc;
            if score < best.1 {
                best = (k, score);
            }
        }
        labels.push(best.0);
        dists.push(sq_dist(row, centroids.row(best.0)));
    }
    (labels, dists)
}

/// Greedy k-means++: the first center is uniform; each later center is the
/// best of `2 + ln k` candidates drawn proportionally to the squared
/// distance to the nearest chosen center.
pub(crate) fn plus_plus<R: Rng>(x: &ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let (n, d) = x.dim();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut nearest: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, x.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random_range(0.0..total);
                let mut chosen = n - 1;
                for (i, &w) in nearest.iter().enumerate() {
                    if target < w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let updated: Vec<f64> = x
                .rows()
                .into_iter()
                .zip(&nearest)
                .map(|(r, &cur)| cur.min(sq_dist(r, x.row(pick))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least one trial");
        centroids.row_mut(c).assign(&x.row(pick));
        nearest = updated;
    }
    centroids
}

/// Recomputes centroids as member means. An empty cluster is moved onto
/// the point currently farthest from its centroid.
pub(crate) fn update(
    x: &ArrayView2<f64>,
    labels: &[usize],
    dists: &[f64],
    centroids: &mut Array2<f64>,
) {
    let (k, d) = centroids.dim();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    let mut taken = vec![false; x.nrows()];
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        } else {
            let far = (0..x.nrows())
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                taken[i] = true;
                centroids.row_mut(c).assign(&x.row(i));
            }
        }
    }
}

pub(crate) struct LloydRun {
    pub centroids: Array2<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia of each assignment step, in order.
    pub history: Vec<f64>,
}

/// Runs at most `max_iters` Lloyd iterations, stopping once assignments
/// no longer change.
pub(crate) fn lloyd(x: &ArrayView2<f64>, mut centroids: Array2<f64>, max_iters: usize) -> LloydRun {
    let mut history = Vec::new();
    let (mut labels, mut dists) = assign(x, &centroids.view());
    history.push(dists.iter().sum());
    for _ in 0..max_iters {
        update(x, &labels, &dists, &mut centroids);
        let (new_labels, new_dists) = assign(x, &centroids.view());
        history.push(new_dists.iter().sum());
        let converged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if converged {
            break;
        }
    }
    LloydRun {
        inertia: dists.iter().sum(),
        centroids,
        labels,
        history,
    }
}

/// Hartigan refinement from a Lloyd fixed point: single points move to
/// another cluster while that strictly lowers the inertia. Stops after
/// `max_passes` sweeps or when a sweep moves nothing.
pub(crate) fn hartigan(x: &ArrayView2<f64>, mut run: LloydRun, max_passes: usize) -> LloydRun {
    let (k, d) = run.centroids.dim();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(&run.labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    let mean =
        |sums: &Array2<f64>, counts: &[usize], c: usize| sums.row(c).mapv(|v| v / counts[c] as f64);
    let mut means: Vec<_> = (0..k)
        .map(|c| {
            if counts[c] > 0 {
                mean(&sums, &counts, c)
            } else {
                run.centroids.row(c).to_owned()
            }
        })
        .collect();
    for _ in 0..max_passes {
        let mut moved = false;
        for (i, row) in x.rows().into_iter().enumerate() {
            let a = run.labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let gain = na / (na - 1.0) * sq_dist(row, means[a].view());
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let cost = nb / (nb + 1.0) * sq_dist(row, means[b].view());
                if cost < gain * (1.0 - 1e-12) && best.is_none_or(|(_, c)| cost < c) {
                    best = Some((b, cost));
                }
            }
            if let Some((b, _)) = best {
                let mut sa = sums.row_mut(a);
                sa -= &row;
                let mut sb = sums.row_mut(b);
                sb += &row;
                counts[a] -= 1;
                counts[b] += 1;
                means[a] = mean(&sums, &counts, a);
                means[b] = mean(&sums, &counts, b);
                run.labels[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    for (c, m) in means.iter().enumerate() {
        run.centroids.row_mut(c).assign(m);
    }
    run.inertia = x
        .rows()
        .into_iter()
        .zip(&run.labels)
        .map(|(r, &l)| sq_dist(r, run.centroids.row(l)))
        .sum();
    run.history.push(run.inertia);
    run
}
