//! External clustering metrics and confound-independence audits.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::error::{Error, Result};

/// Counts of (predicted, true) label pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `K_pred x K_true`.
    pub counts: Array2<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::invalid(format!(
                "label lengths differ: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        let rows = pred.iter().max().map_or(0, |m| m + 1);
        let cols = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = Array2::zeros((rows, cols));
        for (&p, &t) in pred.iter().zip(truth) {
            counts[[p, t]] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len() as u64,
        })
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        self.counts.columns().into_iter().map(|c| c.sum()).collect()
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the
/// column assigned to each row.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(Error::invalid(format!(
            "cost matrix must be square, got {n}x{m}"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // shortest augmenting paths with potentials; 1-based with a dummy column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if reduced < min_v[j] {
                        min_v[j] = reduced;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Fraction of samples correctly labeled under the best one-to-one
/// matching of predicted to true labels.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Ok(0.0);
    }
    let (r, c) = table.counts.dim();
    let m = r.max(c);
    let cost = Array2::from_shape_fn((m, m), |(i, j)| {
        if i < r && j < c {
            -(table.counts[[i, j]] as f64)
        } else {
            0.0
        }
    });
    let perm = hungarian(&cost)?;
    let matched: u64 = perm
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < r && j < c)
        .map(|(i, &j)| table.counts[[i, j]])
        .sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Ok(0.0);
    }
    let n = table.n as f64;
    let (rows, cols) = (table.row_sums(), table.col_sums());
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    if hp <= 0.0 || ht <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((i, j), &c) in table.counts.indexed_iter() {
        if c > 0 {
            let c = c as f64;
            mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn pairs(v: u64) -> f64 {
    let v = v as f64;
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let total = pairs(table.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let index: f64 = table.counts.iter().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_sums().into_iter().map(pairs).sum();
    let b: f64 = table.col_sums().into_iter().map(pairs).sum();
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if (max - expected).abs() < 1e-12 {
        // both partitions trivial in the same way
        return Ok(if (index - expected).abs() < 1e-12 {
            0.0
        } else {
            1.0
        });
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub per_cluster: Vec<f64>,
    pub overall: f64,
}

/// Per cluster, the smallest ratio between the counts of two confound
/// classes (0 if a class is absent or the cluster is empty); overall is
/// the minimum over clusters.
pub fn balance(partition: &Partition, confound: &[u32], categories: usize) -> Result<Balance> {
    if partition.labels.len() != confound.len() {
        return Err(Error::invalid("partition and confound lengths differ"));
    }
    let mut counts = Array2::<u64>::zeros((partition.k, categories));
    let mut global = vec![0u64; categories];
    for (&s, &c) in partition.labels.iter().zip(confound) {
        let c = c as usize;
        if s >= partition.k || c >= categories {
            return Err(Error::invalid("label outside declared range"));
        }
        counts[[s, c]] += 1;
        global[c] += 1;
    }
    if let Some(g) = global.iter().position(|&v| v == 0) {
        return Err(Error::invalid(format!("confound class {g} has no samples")));
    }
    let per_cluster: Vec<f64> = counts
        .rows()
        .into_iter()
        .map(|row| {
            let min = *row.iter().min().unwrap_or(&0);
            let max = *row.iter().max().unwrap_or(&0);
            if min == 0 {
                0.0
            } else {
                min as f64 / max as f64
            }
        })
        .collect();
    let overall = per_cluster.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Balance {
        overall: if overall.is_finite() { overall } else { 0.0 },
        per_cluster,
    })
}

/// NMI between predicted clusters and confound classes.
pub fn confound_leakage(pred: &[usize], confound: &[u32]) -> Result<f64> {
    let c: Vec<usize> = confound.iter().map(|&v| v as usize).collect();
    nmi(pred, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn cost_of(cost: &Array2<f64>, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
    }

    fn brute_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
        let m = pred.iter().chain(truth).max().map_or(0, |v| v + 1);
        permutations(m)
            .iter()
            .map(|p| pred.iter().zip(truth).filter(|&(&a, &b)| p[a] == b).count())
            .max()
            .unwrap() as f64
            / pred.len() as f64
    }

    #[test]
    fn hungarian_examples() {
        let c = array![[1.0, 2.0], [2.0, 1.0]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p, vec![0, 1]);
        assert_eq!(cost_of(&c, &p), 2.0);
        let c = array![[4.0, 1.0], [2.0, 3.0]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p, vec![1, 0]);
        assert_eq!(cost_of(&c, &p), 3.0);
        assert_eq!(
            cost_of(
                &Array2::zeros((3, 3)),
                &hungarian(&Array2::zeros((3, 3))).unwrap()
            ),
            0.0
        );
        assert!(hungarian(&Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn hungarian_matches_brute_force_up_to_seven() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 1..=7 {
            let all = permutations(m);
            for _ in 0..20 {
                let c =
                    Array2::from_shape_simple_fn((m, m), || rng.random_range(-5.0..5.0f64).round());
                let best = all
                    .iter()
                    .map(|p| cost_of(&c, p))
                    .fold(f64::INFINITY, f64::min);
                let got = hungarian(&c).unwrap();
                let mut sorted = got.clone();
                sorted.sort();
                assert_eq!(sorted, (0..m).collect::<Vec<_>>());
                assert!((cost_of(&c, &got) - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            clustering_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(),
            1.0
        );
        assert_eq!(
            clustering_accuracy(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap(),
            0.75
        );
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn random_predictions_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 4;
        let truth: Vec<usize> = (0..40000).map(|i| i % k).collect();
        let pred: Vec<usize> = (0..40000).map(|_| rng.random_range(0..k)).collect();
        let acc = clustering_accuracy(&pred, &truth).unwrap();
        assert!((acc - 0.25).abs() < 0.01);
        let c: Vec<u32> = truth.iter().map(|&v| v as u32).collect();
        assert!(confound_leakage(&pred, &c).unwrap() < 0.01);
    }

    #[test]
    fn nmi_ari_examples() {
        let a = [0, 1, 2, 2, 1];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ari(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0, 0, 0], &a).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 0, 0, 0], &a).unwrap(), 0.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        // hand contingency [[1,1],[1,1]]: index 0, expected 2*2/6
        let v = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v - (-0.5)).abs() < 1e-12);
        assert!(nmi(&[0], &[0, 1]).is_err());
        assert!(ari(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn expected_ari_of_independent_partitions_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut total = 0.0;
        for _ in 0..1000 {
            let a: Vec<usize> = (0..100).map(|_| rng.random_range(0..3)).collect();
            let b: Vec<usize> = (0..100).map(|_| rng.random_range(0..4)).collect();
            total += ari(&a, &b).unwrap();
        }
        assert!((total / 1000.0).abs() <= 0.02);
    }

    #[test]
    fn balance_examples() {
        let p = Partition::new(vec![0; 9], 1);
        let c = [0, 0, 0, 1, 1, 1, 1, 1, 1];
        let b = balance(&p, &c, 2).unwrap();
        assert_eq!(b.per_cluster, vec![0.5]);
        let p = Partition::new(vec![0, 0, 0, 1, 1, 1], 2);
        let c = [0, 1, 1, 0, 1, 1];
        assert_eq!(balance(&p, &c, 2).unwrap().overall, 0.5);
        let p = Partition::new(vec![0, 0, 1, 1], 2);
        let b = balance(&p, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(b.per_cluster, vec![0.0, 0.0]);
        let p = Partition::new(vec![0, 0], 2);
        assert_eq!(balance(&p, &[0, 1], 2).unwrap().per_cluster, vec![1.0, 0.0]);
        assert!(balance(&Partition::new(vec![0, 0], 1), &[0, 0], 2).is_err());
    }

    #[test]
    fn leakage_examples() {
        let c = [0u32, 1, 2, 0, 1, 2];
        let pred: Vec<usize> = c.iter().map(|&v| v as usize).collect();
        assert!((confound_leakage(&pred, &c).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(confound_leakage(&[0; 6], &c).unwrap(), 0.0);
    }

    fn labels(max_len: usize, k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1..max_len).prop_flat_map(move |n| {
            (
                proptest::collection::vec(0..k, n),
                proptest::collection::vec(0..k, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant((a, b) in labels(40, 4), seed in 0u64..1000) {
            let mut map: Vec<usize> = (0..4).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..4).rev() {
                map.swap(i, rng.random_range(0..=i));
            }
            let a2: Vec<usize> = a.iter().map(|&v| map[v]).collect();
            let b2: Vec<usize> = b.iter().map(|&v| map[v]).collect();
            for (x, y) in [(&a2, &b), (&a, &b2)] {
                prop_assert!((clustering_accuracy(x, y).unwrap() - clustering_accuracy(&a, &b).unwrap()).abs() < 1e-12);
                prop_assert!((nmi(x, y).unwrap() - nmi(&a, &b).unwrap()).abs() < 1e-9);
                prop_assert!((ari(x, y).unwrap() - ari(&a, &b).unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn accuracy_matches_brute_force_and_chance_floor((a, b) in labels(12, 5)) {
            let acc = clustering_accuracy(&a, &b).unwrap();
            prop_assert!((acc - brute_accuracy(&a, &b)).abs() < 1e-12);
            let distinct = |v: &[usize]| v.iter().collect::<std::collections::BTreeSet<_>>().len();
            let m = distinct(&a).max(distinct(&b));
            prop_assert!(acc >= 1.0 / m as f64 - 1e-12);
            let nmi_v = nmi(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&nmi_v));
            let ari_v = ari(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0 + 1e-12).contains(&ari_v));
        }

        #[test]
        fn accuracy_is_one_only_for_relabelings((a, b) in labels(12, 3)) {
            let acc = clustering_accuracy(&a, &b).unwrap();
            let same = (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
            prop_assert_eq!(acc == 1.0, same);
        }
    }
}
