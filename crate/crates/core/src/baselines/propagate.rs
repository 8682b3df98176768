use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{ConfoundValues, DatasetBundle};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Fraction of the labeled set held out to score the classifier.
    pub validation_fraction: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            iterations: 300,
            learning_rate: 0.5,
            l2: 1e-4,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    /// Fully observed copy of the input bundle.
    pub bundle: DatasetBundle,
    /// Classifier accuracy on the held-out part of the labeled set; `None`
    /// when the split is empty.
    pub validation_accuracy: Option<f64>,
    pub predicted: usize,
}

/// Multinomial logistic regression on standardized features.
struct Softmax {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Softmax {
    fn features(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }

    fn fit(
        x: &ArrayView2<f64>,
        labels: &[usize],
        classes: usize,
        opts: &PropagationOptions,
    ) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("nonempty training set");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-8 { s } else { 1.0 });
        let mut model = Softmax {
            weight: Array2::zeros((x.ncols(), classes)),
            bias: Array1::zeros(classes),
            mean,
            scale,
        };
        let f = model.features(x);
        let n = f.nrows() as f64;
        for _ in 0..opts.iterations {
            let mut p = model.probabilities_from_features(&f);
            for (mut row, &l) in p.rows_mut().into_iter().zip(labels) {
                row[l] -= 1.0;
            }
            p /= n;
            let gw = f.t().dot(&p) + &(&model.weight * opts.l2);
            let gb = p.sum_axis(Axis(0));
            model.weight.scaled_add(-opts.learning_rate, &gw);
            model.bias.scaled_add(-opts.learning_rate, &gb);
        }
        model
    }

    fn probabilities_from_features(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut logits = f.dot(&self.weight) + &self.bias;
        for mut row in logits.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        logits
    }

    fn predict(&self, x: &ArrayView2<f64>) -> Vec<usize> {
        let p = self.probabilities_from_features(&self.features(x));
        p.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Fills in unobserved confound labels with a classifier trained on the
/// observed ones.
pub fn propagate_confound_labels(
    bundle: &DatasetBundle,
    seed: u64,
    opts: &PropagationOptions,
) -> Result<Propagation> {
    let (values, categories) = match &bundle.confound.values {
        ConfoundValues::Discrete { values, categories } => (values.clone(), *categories),
        ConfoundValues::Continuous(_) => {
            return Err(Error::invalid("propagation requires a discrete confound"))
        }
    };
    let Some(mask) = bundle.confound.mask.clone() else {
        let mut out = bundle.clone();
        out.confound.mask = None;
        return Ok(Propagation {
            bundle: out,
            validation_accuracy: None,
            predicted: 0,
        });
    };
    let mut observed: Vec<usize> = (0..bundle.n()).filter(|&i| mask[i]).collect();
    let mut per_class = vec![0usize; categories];
    for &i in &observed {
        per_class[values[i] as usize] += 1;
    }
    if let Some(g) = per_class.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "confound class {g} has no observed labels"
        )));
    }
    let unobserved: Vec<usize> = (0..bundle.n()).filter(|&i| !mask[i]).collect();
    let mut filled = values;
    let mut validation_accuracy = None;

    if !unobserved.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        observed.shuffle(&mut rng);
        let held = ((observed.len() as f64 * opts.validation_fraction).floor() as usize)
            .min(observed.len() - 1);
        let (val, train) = observed.split_at(held);
        let x = bundle.x.mapv(f64::from);
        let train_x = x.select(Axis(0), train);
        let train_y: Vec<usize> = train.iter().map(|&i| filled[i] as usize).collect();
        let model = Softmax::fit(&train_x.view(), &train_y, categories, opts);
        if !val.is_empty() {
            let pred = model.predict(&x.select(Axis(0), val).view());
            let hits = pred
                .iter()
                .zip(val)
                .filter(|&(&p, &i)| p == filled[i] as usize)
                .count();
            validation_accuracy = Some(hits as f64 / val.len() as f64);
        }
        let pred = model.predict(&x.select(Axis(0), &unobserved).view());
        for (&i, &p) in unobserved.iter().zip(&pred) {
            filled[i] = p as u32;
        }
    }

    let mut out = bundle.clone();
    out.confound.values = ConfoundValues::Discrete {
        values: filled,
        categories,
    };
    out.confound.mask = None;
    out.validate()?;
    Ok(Propagation {
        bundle: out,
        validation_accuracy,
        predicted: unobserved.len(),
    })
}
