use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use rand::Rng;

/// Scalar type the networks are generic over (`f32` for training, `f64`
/// for gradient checks).
pub trait Real: NdFloat + Default {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Affine map `x W + b` with `W` stored as `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = || F::from_f64(rng.random_range(-bound..=bound));
        Dense {
            weight: Array2::from_shape_simple_fn((inputs, outputs), &mut draw),
            bias: Array1::from_shape_simple_fn(outputs, &mut draw),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        x: &ArrayView2<F>,
        grad_out: &ArrayView2<F>,
        grad: &mut Dense<F>,
    ) -> Array2<F> {
        grad.weight += &x.t().dot(grad_out);
        grad.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight.t())
    }
}

/// Fully connected stack with ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
}

/// Activations saved by [`Mlp::forward_cached`]: `inputs[l]` is the input
/// of layer `l` (post-ReLU for `l > 0`).
pub struct MlpCache<F> {
    inputs: Vec<Array2<F>>,
}

impl<F: Real> Mlp<F> {
    /// `widths = [in, h1, ..., out]`.
    pub fn init<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        Mlp {
            layers: widths
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        Mlp {
            layers: widths
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(Dense::inputs).collect();
        w.extend(self.layers.last().map(Dense::outputs));
        w
    }

    pub fn forward(&self, x: &ArrayView2<F>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h.view());
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(&h.view());
            inputs.push(h);
            h = out;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        (h, MlpCache { inputs })
    }

    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        grad_out: Array2<F>,
        grad: &mut Mlp<F>,
    ) -> Array2<F> {
        let mut g = grad_out;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            g = self.layers[l].backward(&input.view(), &g.view(), &mut grad.layers[l]);
            if l > 0 {
                // input of layer l is the ReLU output of layer l-1
                g.zip_mut_with(input, |gv, &a| {
                    if a <= F::zero() {
                        *gv = F::zero();
                    }
                });
            }
        }
        g
    }
}

fn relu<F: Real>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}
