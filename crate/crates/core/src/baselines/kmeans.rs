use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::Partition;
use crate::error::{Error, Result};
use crate::kmeans::{hartigan, lloyd, plus_plus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iters: 300,
            n_init: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm from k-means++ seeds, refined by Hartigan moves,
/// keeping the restart with the lowest inertia (earliest restart on ties).
pub fn kmeans(
    x: &ArrayView2<f64>,
    k: usize,
    options: KMeansOptions,
    seed: u64,
) -> Result<KMeansFit> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "kmeans needs N >= K >= 1, got N={n}, K={k}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kmeans input contains non-finite values"));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..options.n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = plus_plus(x, k, &mut rng);
        let run = hartigan(x, lloyd(x, init, options.max_iters), options.max_iters);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(KMeansFit {
                partition: Partition::new(run.labels, k),
                centroids: run.centroids,
                inertia: run.inertia,
                history: run.history,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn exhaustive_inertia(x: &Array2<f64>, k: usize) -> f64 {
        let n = x.nrows();
        let total = k.pow(n as u32);
        let mut best = f64::INFINITY;
        for code in 0..total {
            let mut labels = vec![0; n];
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut cost = 0.0;
            for cluster in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == cluster).collect();
                if members.is_empty() {
                    continue;
                }
                for j in 0..x.ncols() {
                    let mean =
                        members.iter().map(|&i| x[[i, j]]).sum::<f64>() / members.len() as f64;
                    cost += members
                        .iter()
                        .map(|&i| (x[[i, j]] - mean).powi(2))
                        .sum::<f64>();
                }
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn one_dimensional_example() {
        let x = array![[0.0], [1.0], [10.0], [11.0]];
        let fit = kmeans(&x.view(), 2, KMeansOptions::default(), 0).unwrap();
        assert!((fit.inertia - 1.0).abs() < 1e-12);
        let mut c: Vec<f64> = fit.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert!((exhaustive_inertia(&x, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_points_give_zero_inertia() {
        let x = array![[0.0, 1.0], [4.0, 2.0], [-3.0, 7.0]];
        assert_eq!(
            kmeans(&x.view(), 3, KMeansOptions::default(), 1)
                .unwrap()
                .inertia,
            0.0
        );
        assert!(kmeans(&x.view(), 4, KMeansOptions::default(), 1).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((200, 3), || rng.random_range(-4.0..4.0));
        let fit = kmeans(&x.view(), 5, KMeansOptions::default(), 3).unwrap();
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn matches_exhaustive_optimum_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for case in 0..40 {
            let n = rng.random_range(3..=10);
            let k = rng.random_range(1..=3usize).min(n);
            let d = rng.random_range(1..=2);
            let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-5.0..5.0));
            let fit = kmeans(&x.view(), k, KMeansOptions::default(), case).unwrap();
            let best = exhaustive_inertia(&x, k);
            assert!(
                (fit.inertia - best).abs() <= 1e-9 * best.max(1.0),
                "case {case}: {} vs {best}",
                fit.inertia
            );
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_simple_fn((80, 2), || rng.random_range(-4.0..4.0));
        let a = kmeans(&x.view(), 4, KMeansOptions::default(), 9).unwrap();
        let b = kmeans(&x.view(), 4, KMeansOptions::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
