use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Per-category effect rows `beta` of the linear confound model.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfoundEffect {
    /// `G x D`.
    pub beta: Array2<f64>,
}

fn check_one_hot(c: &ArrayView2<f64>) -> Result<()> {
    for (i, row) in c.rows().into_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::invalid(format!("confound row {i} is not one-hot")));
        }
    }
    Ok(())
}

/// Least-squares `beta = (C^T C)^-1 C^T X`. For one-hot `C` this is the
/// per-class mean of `X`.
pub fn estimate_confound_effect(
    x: &ArrayView2<f64>,
    c: &ArrayView2<f64>,
) -> Result<ConfoundEffect> {
    if x.nrows() != c.nrows() {
        return Err(Error::invalid("X and C row counts differ"));
    }
    check_one_hot(c)?;
    let counts = c.sum_axis(Axis(0));
    if let Some(g) = counts.iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!("confound class {g} is empty")));
    }
    let mut beta = c.t().dot(x);
    for (mut row, &n) in beta.rows_mut().into_iter().zip(counts.iter()) {
        row /= n;
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("confound effect is not finite"));
    }
    Ok(ConfoundEffect { beta })
}

/// `X - C beta`.
pub fn ruv_purify(
    x: &ArrayView2<f64>,
    c: &ArrayView2<f64>,
    effect: &ConfoundEffect,
) -> Result<Array2<f64>> {
    if x.nrows() != c.nrows()
        || c.ncols() != effect.beta.nrows()
        || x.ncols() != effect.beta.ncols()
    {
        return Err(Error::invalid("inconsistent shapes for purification"));
    }
    Ok(x - &c.dot(&effect.beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn example() -> (Array2<f64>, Array2<f64>) {
        let x = array![[1.0, 0.0], [3.0, 0.0], [0.0, 5.0], [0.0, 7.0]];
        let c = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        (x, c)
    }

    #[test]
    fn effect_examples() {
        let (x, c) = example();
        let e = estimate_confound_effect(&x.view(), &c.view()).unwrap();
        assert_eq!(e.beta, array![[2.0, 0.0], [0.0, 6.0]]);
        let one = Array2::ones((4, 1));
        let e = estimate_confound_effect(&x.view(), &one.view()).unwrap();
        assert_eq!(e.beta, array![[1.0, 3.0]]);
        let empty = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        assert!(estimate_confound_effect(&x.view(), &empty.view()).is_err());
    }

    #[test]
    fn purify_examples() {
        let (x, c) = example();
        let e = estimate_confound_effect(&x.view(), &c.view()).unwrap();
        let p = ruv_purify(&x.view(), &c.view(), &e).unwrap();
        assert_eq!(p, array![[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]]);
        let zero = ConfoundEffect {
            beta: Array2::zeros((2, 2)),
        };
        assert_eq!(ruv_purify(&x.view(), &c.view(), &zero).unwrap(), x);
        let again = estimate_confound_effect(&p.view(), &c.view()).unwrap();
        assert!(again.beta.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(ruv_purify(&p.view(), &c.view(), &again).unwrap(), p);
    }

    fn instance() -> impl Strategy<Value = (Array2<f64>, Vec<usize>, usize)> {
        (1usize..5, 1usize..4, 2usize..30).prop_flat_map(|(g, d, extra)| {
            let n = g + extra;
            (
                proptest::collection::vec(-1e3..1e3f64, n * d),
                proptest::collection::vec(0..g, extra),
            )
                .prop_map(move |(vals, tail)| {
                    let x = Array2::from_shape_vec((n, d), vals).unwrap();
                    let mut labels: Vec<usize> = (0..g).collect();
                    labels.extend(tail);
                    (x, labels, g)
                })
        })
    }

    fn one_hot(labels: &[usize], g: usize) -> Array2<f64> {
        Array2::from_shape_fn(
            (labels.len(), g),
            |(i, k)| if labels[i] == k { 1.0 } else { 0.0 },
        )
    }

    proptest! {
        #[test]
        fn purified_class_means_vanish((x, labels, g) in instance()) {
            let c = one_hot(&labels, g);
            let e = estimate_confound_effect(&x.view(), &c.view()).unwrap();
            let p = ruv_purify(&x.view(), &c.view(), &e).unwrap();
            for k in 0..g {
                let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
                let mean = p.select(Axis(0), &members).mean_axis(Axis(0)).unwrap();
                prop_assert!(mean.iter().all(|v| v.abs() <= 1e-9));
                // oracle: plain per-class mean
                let direct = x.select(Axis(0), &members).mean_axis(Axis(0)).unwrap();
                for (a, b) in direct.iter().zip(e.beta.row(k)) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }
}
