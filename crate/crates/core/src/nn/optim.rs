use super::float::Float;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adaptive moment estimation with bias correction.
pub struct Adam<T: Float> {
    params: Vec<(String, Tensor<T>)>,
    pub state: OptimizerState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl<T: Float> Adam<T> {
    /// Betas default to `(0.5, 0.999)`.
    pub fn new(params: Vec<(String, Tensor<T>)>, learning_rate: f64) -> Self {
        let m: Vec<Vec<T>> = params.iter().map(|(_, p)| vec![T::zero(); p.numel()]).collect();
        Self {
            state: OptimizerState {
                v: m.clone(),
                m,
                step: 0,
                learning_rate,
                betas: (0.5, 0.999),
                eps: 1e-8,
            },
            params,
        }
    }

    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|(_, p)| p.zero_grad());
    }

    /// Applies one update from the accumulated gradients. Parameters without
    /// a gradient are treated as having a zero gradient. Nothing is changed
    /// if any gradient holds a NaN or infinity.
    pub fn step(&mut self) -> Result<()> {
        let grads: Vec<Option<Vec<T>>> = self.params.iter().map(|(_, p)| p.grad()).collect();
        for ((name, _), g) in self.params.iter().zip(&grads) {
            if g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let s = &mut self.state;
        s.step += 1;
        let (b1, b2) = s.betas;
        let c1 = 1.0 - b1.powi(s.step as i32);
        let c2 = 1.0 - b2.powi(s.step as i32);
        let (b1, b2, lr, eps) = (T::of(b1), T::of(b2), T::of(s.learning_rate), T::of(s.eps));
        let (c1, c2) = (T::of(c1), T::of(c2));
        for (i, ((_, p), g)) in self.params.iter().zip(grads).enumerate() {
            let (m, v) = (&mut s.m[i], &mut s.v[i]);
            let g = g.unwrap_or_else(|| vec![T::zero(); p.numel()]);
            p.update(|w| {
                for j in 0..w.len() {
                    m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                    v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                    let mh = m[j] / c1;
                    let vh = v[j] / c2;
                    w[j] -= lr * mh / (vh.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
