use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `k x d`, unit rows in order of decreasing variance.
    pub components: Array2<f64>,
    /// All eigenvalues of the covariance (divided by N), descending.
    pub eigenvalues: Vec<f64>,
    /// `N x k` coordinates of the centered data.
    pub projected: Array2<f64>,
}

/// Principal components from the exact eigendecomposition of the sample
/// covariance. Component signs are fixed so that the largest-magnitude
/// entry is positive.
pub fn pca(x: &ArrayView2<f64>, k: usize) -> Result<Pca> {
    let (n, d) = x.dim();
    if n == 0 || k == 0 || k > d {
        return Err(Error::invalid(format!(
            "pca needs N >= 1 and 1 <= k <= d, got N={n}, d={d}, k={k}"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut components = Array2::zeros((k, d));
    for (r, &i) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(i);
        let pivot = (0..d).fold(0, |b, j| if col[j].abs() > col[b].abs() { j } else { b });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[r, j]] = sign * col[j];
        }
    }
    let projected = centered.dot(&components.t());
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        projected,
    })
}
