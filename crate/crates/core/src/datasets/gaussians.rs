use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ConfoundLabels, DatasetBundle};
use crate::error::{Error, Result};

/// Parameters of the two-factor Gaussian generator.
///
/// Each sample is `interest_gap * u(k) + confound_gap * v(g) + noise`, where
/// `u(k)` lives in the first `dim / 2` coordinates and `v(g)` in the rest.
#[derive(Clone, Debug)]
pub struct TwoFactorGaussians {
    pub k_clusters: usize,
    pub g_categories: usize,
    pub n_per_cell: usize,
    pub dim: usize,
    pub interest_gap: f64,
    pub confound_gap: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TwoFactorGaussians {
    fn default() -> Self {
        TwoFactorGaussians {
            k_clusters: 2,
            g_categories: 2,
            n_per_cell: 100,
            dim: 2,
            interest_gap: 6.0,
            confound_gap: 12.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

/// Unit direction for class `class` of `classes` inside a block of `width`
/// coordinates: signed basis vectors while they last, otherwise evenly
/// spaced points on the unit circle spanned by the first two coordinates.
fn block_direction(class: usize, classes: usize, width: usize) -> Result<Vec<f64>> {
    let mut dir = vec![0.0; width];
    if classes <= 2 * width {
        dir[class / 2] = if class % 2 == 0 { 1.0 } else { -1.0 };
    } else if width >= 2 {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        dir[0] = angle.cos();
        dir[1] = angle.sin();
    } else {
        return Err(Error::invalid(format!(
            "a 1-coordinate block cannot host {classes} distinct unit directions"
        )));
    }
    Ok(dir)
}

pub fn generate_two_factor_gaussians(p: &TwoFactorGaussians) -> Result<DatasetBundle> {
    if p.dim < 2 {
        return Err(Error::invalid(
            "dim must be at least 2 to host both factor blocks",
        ));
    }
    if p.k_clusters < 1 || p.g_categories < 1 || p.n_per_cell < 1 {
        return Err(Error::invalid(
            "k_clusters, g_categories and n_per_cell must be positive",
        ));
    }
    if p.interest_gap < 0.0 || p.confound_gap < 0.0 {
        return Err(Error::invalid("gaps must be nonnegative"));
    }
    if p.noise_sigma <= 0.0 || !p.noise_sigma.is_finite() {
        return Err(Error::invalid("noise_sigma must be positive"));
    }
    let interest_width = p.dim / 2;
    let confound_width = p.dim - interest_width;
    let interest: Vec<Vec<f64>> = (0..p.k_clusters)
        .map(|k| block_direction(k, p.k_clusters, interest_width))
        .collect::<Result<_>>()?;
    let confound: Vec<Vec<f64>> = (0..p.g_categories)
        .map(|g| block_direction(g, p.g_categories, confound_width))
        .collect::<Result<_>>()?;

    let n = p.k_clusters * p.g_categories * p.n_per_cell;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, p.noise_sigma).expect("sigma checked positive");
    let mut x = Array2::<f32>::zeros((n, p.dim));
    let mut y = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut row = 0;
    for k in 0..p.k_clusters {
        for g in 0..p.g_categories {
            for _ in 0..p.n_per_cell {
                for j in 0..p.dim {
                    let mean = if j < interest_width {
                        p.interest_gap * interest[k][j]
                    } else {
                        p.confound_gap * confound[g][j - interest_width]
                    };
                    x[[row, j]] = (mean + noise.sample(&mut rng)) as f32;
                }
                y.push(k as u32);
                c.push(g as u32);
                row += 1;
            }
        }
    }
    DatasetBundle::new(
        x,
        Some(y),
        ConfoundLabels::discrete(c, p.g_categories),
        p.k_clusters,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_shape() {
        let b = generate_two_factor_gaussians(&TwoFactorGaussians {
            n_per_cell: 100,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(b.x.dim(), (400, 2));
        let y = b.y.as_ref().unwrap();
        let c = b.confound.discrete_values().unwrap();
        for k in 0..2 {
            for g in 0..2 {
                let cell = y.iter().zip(c).filter(|(&a, &b)| a == k && b == g).count();
                assert_eq!(cell, 100);
            }
        }
    }

    #[test]
    fn dim_one_is_rejected() {
        let err = generate_two_factor_gaussians(&TwoFactorGaussians {
            dim: 1,
            ..Default::default()
        });
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_confound_gap_gives_equal_class_means() {
        let p = TwoFactorGaussians {
            n_per_cell: 500,
            dim: 4,
            confound_gap: 0.0,
            seed: 3,
            ..Default::default()
        };
        let b = generate_two_factor_gaussians(&p).unwrap();
        let c = b.confound.discrete_values().unwrap();
        for j in 0..4 {
            let mut sums = [0.0f64; 2];
            let mut counts = [0usize; 2];
            for (i, &g) in c.iter().enumerate() {
                sums[g as usize] += b.x[[i, j]] as f64;
                counts[g as usize] += 1;
            }
            let diff = (sums[0] / counts[0] as f64 - sums[1] / counts[1] as f64).abs();
            let bound = 4.0 * p.noise_sigma / ((p.n_per_cell * p.k_clusters) as f64).sqrt();
            assert!(diff <= bound, "coordinate {j}: {diff} > {bound}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = TwoFactorGaussians {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(
            generate_two_factor_gaussians(&p).unwrap(),
            generate_two_factor_gaussians(&p).unwrap()
        );
    }

    #[test]
    fn directions_are_unit_and_distinct() {
        for classes in 1..7 {
            for width in 1..4 {
                let dirs: Vec<_> = (0..classes)
                    .filter_map(|k| block_direction(k, classes, width).ok())
                    .collect();
                if dirs.len() < classes {
                    continue;
                }
                for (a, da) in dirs.iter().enumerate() {
                    let norm: f64 = da.iter().map(|v| v * v).sum();
                    assert!((norm - 1.0).abs() < 1e-12);
                    for db in &dirs[a + 1..] {
                        assert_ne!(da, db);
                    }
                }
            }
        }
    }
}
