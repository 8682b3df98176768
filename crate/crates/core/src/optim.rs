//! Adam over the flat parameter blocks of a [`ModelState`].

use crate::error::{Error, Result};
use crate::networks::{ModelState, Real};

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<F: Real>(
        &mut self,
        params: &mut ModelState<F>,
        grads: &ModelState<F>,
    ) -> Result<()> {
        let grad_blocks = grads.param_blocks();
        let mut param_blocks = params.param_blocks_mut();
        if grad_blocks.len() != param_blocks.len()
            || grad_blocks
                .iter()
                .zip(&param_blocks)
                .any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::invalid("gradient layout does not match parameters"));
        }
        if self.m.is_empty() {
            self.m = grad_blocks.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (b, (p, g)) in param_blocks.iter_mut().zip(&grad_blocks).enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            for i in 0..p.len() {
                let gi = g[i].as_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let update = self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                p[i] = F::from_f64(p[i].as_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{Conditioning, ModelShape, OutputHead};

    #[test]
    fn first_step_moves_each_parameter_by_lr_against_the_gradient_sign() {
        let shape = ModelShape {
            d_input: 2,
            latent_dim: 1,
            hidden: vec![],
            conditioning: Conditioning::None,
            output: OutputHead::Identity,
        };
        let mut p = ModelState::<f64>::zeros(shape).unwrap();
        let mut g = p.zeros_like();
        g.encoder.layers[0].weight[[0, 0]] = 3.0;
        g.encoder.layers[0].weight[[1, 0]] = -0.01;
        let mut opt = Adam::new(0.1);
        opt.step(&mut p, &g).unwrap();
        assert!((p.encoder.layers[0].weight[[0, 0]] + 0.1).abs() < 1e-6);
        assert!((p.encoder.layers[0].weight[[1, 0]] - 0.1).abs() < 1e-4);
        assert_eq!(p.decoder.layers[0].weight[[0, 0]], 0.0);
        assert_eq!(opt.steps(), 1);
    }
}
