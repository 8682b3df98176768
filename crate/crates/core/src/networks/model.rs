use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, Mlp, MlpCache, Real};
use crate::datasets::{ConfoundLabels, ConfoundValues};
use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// How the confound enters the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Conditioning {
    /// Unconditional decoder.
    None,
    /// One-hot over `categories` classes, concatenated to the latent input.
    Discrete { categories: usize },
    /// A single scalar concatenated to the latent input.
    Continuous,
}

impl Conditioning {
    pub fn width(&self) -> usize {
        match *self {
            Conditioning::None => 0,
            Conditioning::Discrete { categories } => categories,
            Conditioning::Continuous => 1,
        }
    }

    pub fn for_labels(labels: &ConfoundLabels) -> Self {
        match labels.values {
            ConfoundValues::Discrete { categories, .. } => Conditioning::Discrete { categories },
            ConfoundValues::Continuous(_) => Conditioning::Continuous,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_input: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub conditioning: Conditioning,
    pub output: OutputHead,
}

impl ModelShape {
    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d_input];
        w.extend(&self.hidden);
        w.push(2 * self.latent_dim);
        w
    }

    fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim + self.conditioning.width()];
        w.extend(self.hidden.iter().rev());
        w.push(self.d_input);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_input == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if let Conditioning::Discrete { categories } = self.conditioning {
            if categories == 0 {
                return Err(Error::invalid(
                    "discrete conditioning needs at least one category",
                ));
            }
        }
        Ok(())
    }
}

/// Diagonal Gaussian posteriors for a batch, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior<F> {
    pub mean: Array2<F>,
    pub log_var: Array2<F>,
}

impl<F: Real> GaussianPosterior<F> {
    pub fn batch_size(&self) -> usize {
        self.mean.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.ncols()
    }
}

/// A decoder conditioning value for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConditionValue {
    Class(u32),
    Scalar(f32),
}

/// Encoder, conditional decoder and fusion layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<F> {
    pub shape: ModelShape,
    /// `D -> hidden... -> 2d`; the first `d` outputs are the mean head, the
    /// rest the log-variance head.
    pub encoder: Mlp<F>,
    /// `(d + conditioning width) -> reversed hidden... -> D`.
    pub decoder: Mlp<F>,
    /// `2d -> d` applied to `[z ; z_tilde]`.
    pub fusion: Dense<F>,
}

pub(crate) struct EncoderPass<F> {
    pub posterior: GaussianPosterior<F>,
    /// Pre-clamp log-variance, needed to mask the clamp's gradient.
    pub raw_log_var: Array2<F>,
    pub cache: MlpCache<F>,
}

impl<F: Real> ModelState<F> {
    pub fn init<R: Rng>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let encoder = Mlp::init(&shape.encoder_widths(), rng);
        let decoder = Mlp::init(&shape.decoder_widths(), rng);
        let fusion = Dense::init(2 * shape.latent_dim, shape.latent_dim, rng);
        Ok(ModelState {
            shape,
            encoder,
            decoder,
            fusion,
        })
    }

    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        Ok(ModelState {
            encoder: Mlp::zeros(&shape.encoder_widths()),
            decoder: Mlp::zeros(&shape.decoder_widths()),
            fusion: Dense::zeros(2 * shape.latent_dim, shape.latent_dim),
            shape,
        })
    }

    /// Same shape, every parameter zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelState {
            shape: self.shape.clone(),
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            fusion: Dense::zeros(self.fusion.inputs(), self.fusion.outputs()),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.shape.latent_dim
    }

    /// Parameter blocks in checkpoint order: encoder layers, decoder
    /// layers, fusion; weight before bias within a layer.
    pub fn param_blocks(&self) -> Vec<&[F]> {
        let mut blocks = Vec::new();
        for layer in self
            .encoder
            .layers
            .iter()
            .chain(&self.decoder.layers)
            .chain([&self.fusion])
        {
            blocks.push(layer.weight.as_slice().expect("standard layout"));
            blocks.push(layer.bias.as_slice().expect("standard layout"));
        }
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [F]> {
        let mut blocks = Vec::new();
        for layer in self
            .encoder
            .layers
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
            .chain([&mut self.fusion])
        {
            blocks.push(layer.weight.as_slice_mut().expect("standard layout"));
            blocks.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        blocks
    }

    pub fn parameter_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_cols(what: &str, m: &ArrayView2<F>, expected: usize) -> Result<()> {
        if m.ncols() != expected {
            return Err(Error::invalid(format!(
                "{what} has {} columns, expected {expected}",
                m.ncols()
            )));
        }
        Ok(())
    }

    pub(crate) fn encode_pass(&self, x: &ArrayView2<F>) -> Result<EncoderPass<F>> {
        Self::check_cols("encoder input", x, self.shape.d_input)?;
        let d = self.shape.latent_dim;
        let (out, cache) = self.encoder.forward_cached(x.to_owned());
        let mean = out.slice(s![.., ..d]).to_owned();
        let raw_log_var = out.slice(s![.., d..]).to_owned();
        let (lo, hi) = (F::from_f64(LOG_VAR_MIN), F::from_f64(LOG_VAR_MAX));
        let log_var = raw_log_var.mapv(|v| v.max(lo).min(hi));
        Ok(EncoderPass {
            posterior: GaussianPosterior { mean, log_var },
            raw_log_var,
            cache,
        })
    }

    /// Posterior parameters `q(z | x)` for each row of `x`.
    pub fn encode(&self, x: &ArrayView2<F>) -> Result<GaussianPosterior<F>> {
        Self::check_cols("encoder input", x, self.shape.d_input)?;
        let d = self.shape.latent_dim;
        let out = self.encoder.forward(x);
        let (lo, hi) = (F::from_f64(LOG_VAR_MIN), F::from_f64(LOG_VAR_MAX));
        Ok(GaussianPosterior {
            mean: out.slice(s![.., ..d]).to_owned(),
            log_var: out.slice(s![.., d..]).mapv(|v| v.max(lo).min(hi)),
        })
    }

    /// `[z ; z_tilde] W + b`.
    pub fn fuse(&self, z: &ArrayView2<F>, z_tilde: &ArrayView2<F>) -> Result<Array2<F>> {
        let d = self.shape.latent_dim;
        Self::check_cols("z", z, d)?;
        Self::check_cols("z_tilde", z_tilde, d)?;
        if z.nrows() != z_tilde.nrows() {
            return Err(Error::invalid("z and z_tilde batch sizes differ"));
        }
        let joint = concatenate![Axis(1), *z, *z_tilde];
        Ok(self.fusion.forward(&joint.view()))
    }

    /// Builds the `B x width` conditioning matrix for explicit values.
    pub fn condition_matrix(&self, values: &[ConditionValue]) -> Result<Array2<F>> {
        let width = self.shape.conditioning.width();
        let mut m = Array2::zeros((values.len(), width));
        for (i, v) in values.iter().enumerate() {
            match (self.shape.conditioning, *v) {
                (Conditioning::None, _) => {}
                (Conditioning::Discrete { categories }, ConditionValue::Class(k)) => {
                    if k as usize >= categories {
                        return Err(Error::invalid(format!(
                            "condition class {k} outside [0, {categories})"
                        )));
                    }
                    m[[i, k as usize]] = F::one();
                }
                (Conditioning::Continuous, ConditionValue::Scalar(c)) => {
                    m[[i, 0]] = F::from_f64(c as f64);
                }
                (kind, value) => {
                    return Err(Error::invalid(format!(
                        "condition {value:?} does not match decoder conditioning {kind:?}"
                    )))
                }
            }
        }
        Ok(m)
    }

    /// Conditioning rows for dataset samples `idx`.
    pub fn condition_rows(&self, labels: &ConfoundLabels, idx: &[usize]) -> Array2<F> {
        let width = self.shape.conditioning.width();
        let mut m = Array2::zeros((idx.len(), width));
        if width == 0 {
            return m;
        }
        let mut buf = vec![0.0f32; width];
        for (r, &i) in idx.iter().enumerate() {
            labels.write_conditioning(i, &mut buf);
            for (dst, &v) in m.row_mut(r).iter_mut().zip(&buf) {
                *dst = F::from_f64(v as f64);
            }
        }
        m
    }

    pub(crate) fn decoder_input(
        &self,
        z_hat: &ArrayView2<F>,
        cond: &ArrayView2<F>,
    ) -> Result<Array2<F>> {
        Self::check_cols("z_hat", z_hat, self.shape.latent_dim)?;
        Self::check_cols("conditioning", cond, self.shape.conditioning.width())?;
        if z_hat.nrows() != cond.nrows() {
            return Err(Error::invalid("z_hat and conditioning batch sizes differ"));
        }
        Ok(concatenate![Axis(1), *z_hat, *cond])
    }

    /// Decoder pre-activation output.
    pub fn decode_logits(&self, z_hat: &ArrayView2<F>, cond: &ArrayView2<F>) -> Result<Array2<F>> {
        let input = self.decoder_input(z_hat, cond)?;
        Ok(self.decoder.forward(&input.view()))
    }

    /// Reconstruction with the output head applied.
    pub fn decode(&self, z_hat: &ArrayView2<F>, cond: &ArrayView2<F>) -> Result<Array2<F>> {
        let logits = self.decode_logits(z_hat, cond)?;
        Ok(match self.shape.output {
            OutputHead::Identity => logits,
            OutputHead::Sigmoid => logits.mapv(sigmoid),
        })
    }
}

/// `z = mean + exp(log_var / 2) * noise`.
pub fn reparameterize<F: Real>(
    posterior: &GaussianPosterior<F>,
    noise: &ArrayView2<F>,
) -> Result<Array2<F>> {
    if noise.dim() != posterior.mean.dim() {
        return Err(Error::invalid(format!(
            "noise shape {:?} does not match posterior {:?}",
            noise.dim(),
            posterior.mean.dim()
        )));
    }
    let half = F::from_f64(0.5);
    let mut z = posterior.log_var.mapv(|lv| (lv * half).exp());
    z *= noise;
    z += &posterior.mean;
    Ok(z)
}

pub fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn shape(cond: Conditioning, head: OutputHead) -> ModelShape {
        ModelShape {
            d_input: 6,
            latent_dim: 3,
            hidden: vec![8, 5],
            conditioning: cond,
            output: head,
        }
    }

    #[test]
    fn zero_model_encodes_to_standard_posterior() {
        let m = ModelState::<f64>::zeros(shape(Conditioning::None, OutputHead::Sigmoid)).unwrap();
        let x = Array2::from_shape_fn((4, 6), |(i, j)| (i * j) as f64 - 2.0);
        let q = m.encode(&x.view()).unwrap();
        assert!(q.mean.iter().all(|&v| v == 0.0));
        assert!(q.log_var.iter().all(|&v| v == 0.0));
        let out = m
            .decode(&q.mean.view(), &Array2::zeros((4, 0)).view())
            .unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ModelShape {
            d_input: 20,
            latent_dim: 10,
            hidden: vec![16],
            conditioning: Conditioning::None,
            output: OutputHead::Identity,
        };
        let m = ModelState::<f32>::init(s, &mut rng).unwrap();
        let mut x = Array2::from_shape_fn((32, 20), |(i, j)| ((i + 3 * j) % 7) as f32 / 7.0);
        let first = x.row(0).to_owned();
        x.row_mut(1).assign(&first);
        let q = m.encode(&x.view()).unwrap();
        assert_eq!(q.mean.dim(), (32, 10));
        assert_eq!(q.log_var.dim(), (32, 10));
        assert_eq!(q.mean.row(0), q.mean.row(1));
        assert_eq!(q.log_var.row(0), q.log_var.row(1));
        assert!(m.encode(&Array2::zeros((2, 19)).view()).is_err());
    }

    #[test]
    fn log_variance_is_clamped() {
        let mut m =
            ModelState::<f64>::zeros(shape(Conditioning::None, OutputHead::Identity)).unwrap();
        let last = m.encoder.layers.last_mut().unwrap();
        last.bias[3] = 50.0;
        last.bias[4] = -50.0;
        let q = m.encode(&Array2::zeros((1, 6)).view()).unwrap();
        assert_eq!(q.log_var[[0, 0]], LOG_VAR_MAX);
        assert_eq!(q.log_var[[0, 1]], LOG_VAR_MIN);
    }

    #[test]
    fn reparameterize_cases() {
        let q = GaussianPosterior {
            mean: array![[1.0, -2.0]],
            log_var: array![[0.0, 0.0]],
        };
        assert_eq!(
            reparameterize(&q, &array![[0.0, 0.0]].view()).unwrap(),
            q.mean
        );
        let eps = array![[0.3, -0.7]];
        assert_eq!(reparameterize(&q, &eps.view()).unwrap(), &q.mean + &eps);
        assert!(reparameterize(&q, &array![[0.0]].view()).is_err());
    }

    #[test]
    fn reparameterized_draws_have_the_posterior_mean() {
        let n = 100_000;
        let mean = array![0.5, -1.5];
        let log_var = array![0.4f64.ln(), 2.0f64.ln()];
        let q = GaussianPosterior {
            mean: Array2::from_shape_fn((n, 2), |(_, j)| mean[j]),
            log_var: Array2::from_shape_fn((n, 2), |(_, j)| log_var[j]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Array2::from_shape_simple_fn((n, 2), || StandardNormal.sample(&mut rng));
        let z = reparameterize(&q, &noise.view()).unwrap();
        for j in 0..2 {
            let emp = z.column(j).mean().unwrap();
            let sigma = (log_var[j] / 2.0).exp();
            assert!((emp - mean[j]).abs() <= 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn fuse_identity_and_selector_configurations() {
        let mut m =
            ModelState::<f64>::zeros(shape(Conditioning::None, OutputHead::Identity)).unwrap();
        let z = array![[1.0, 2.0, 3.0]];
        let zt = array![[-4.0, 5.0, 0.5]];
        for i in 0..3 {
            m.fusion.weight[[i, i]] = 1.0;
        }
        assert_eq!(m.fuse(&z.view(), &zt.view()).unwrap(), z);
        m.fusion.weight.fill(0.0);
        for i in 0..3 {
            m.fusion.weight[[3 + i, i]] = 1.0;
        }
        assert_eq!(m.fuse(&z.view(), &zt.view()).unwrap(), zt);
        assert!(m.fuse(&z.view(), &array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn fuse_is_affine_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ModelState::<f64>::init(shape(Conditioning::None, OutputHead::Identity), &mut rng)
            .unwrap();
        let z1 = array![[0.2, -1.0, 0.7]];
        let z2 = array![[1.5, 0.3, -0.4]];
        let zt = array![[0.1, 0.9, -0.2]];
        let (a, b) = (1.7, -0.6);
        let lhs = m.fuse(&(&z1 * a + &z2 * b).view(), &zt.view()).unwrap();
        let f1 = m.fuse(&z1.view(), &zt.view()).unwrap();
        let f2 = m.fuse(&z2.view(), &zt.view()).unwrap();
        let f0 = m.fuse(&Array2::zeros((1, 3)).view(), &zt.view()).unwrap();
        let rhs = f1 * a + f2 * b - f0 * (a + b - 1.0);
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_depends_on_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ModelState::<f64>::init(
            shape(
                Conditioning::Discrete { categories: 3 },
                OutputHead::Sigmoid,
            ),
            &mut rng,
        )
        .unwrap();
        let zh = array![[0.3, 0.1, -0.2], [0.3, 0.1, -0.2]];
        let cond = m
            .condition_matrix(&[ConditionValue::Class(0), ConditionValue::Class(2)])
            .unwrap();
        let out = m.decode(&zh.view(), &cond.view()).unwrap();
        assert_eq!(out.dim(), (2, 6));
        assert_ne!(out.row(0), out.row(1));
        assert!(m.condition_matrix(&[ConditionValue::Class(3)]).is_err());
        assert!(m.condition_matrix(&[ConditionValue::Scalar(0.5)]).is_err());
    }

    #[test]
    fn decode_shape_on_image_sized_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = ModelShape {
            d_input: 784,
            latent_dim: 10,
            hidden: vec![32],
            conditioning: Conditioning::Continuous,
            output: OutputHead::Sigmoid,
        };
        let m = ModelState::<f32>::init(s, &mut rng).unwrap();
        let cond = m
            .condition_matrix(&vec![ConditionValue::Scalar(0.25); 32])
            .unwrap();
        let out = m
            .decode(&Array2::zeros((32, 10)).view(), &cond.view())
            .unwrap();
        assert_eq!(out.dim(), (32, 784));
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn default_sized_model_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = ModelShape {
            d_input: 784,
            latent_dim: 10,
            hidden: vec![500, 500, 2000],
            conditioning: Conditioning::Discrete { categories: 6 },
            output: OutputHead::Sigmoid,
        };
        let m = ModelState::<f32>::init(s, &mut rng).unwrap();
        let enc = 784 * 500 + 500 + 500 * 500 + 500 + 500 * 2000 + 2000 + 2000 * 20 + 20;
        let dec = 16 * 2000 + 2000 + 2000 * 500 + 500 + 500 * 500 + 500 + 500 * 784 + 784;
        let fusion = 20 * 10 + 10;
        assert_eq!(m.parameter_count(), enc + dec + fusion);
    }
}
