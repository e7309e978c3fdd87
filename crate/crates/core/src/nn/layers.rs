use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{conv1d, conv_transpose1d, reflection_pad1d};
use super::float::Float;
use super::norm::{batch_norm, channel_affine, dropout, BatchNormConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Forward-pass mode and the dropout random stream.
pub struct Ctx {
    pub train: bool,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Self {
            train: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Self {
            train: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

/// Zero-mean Gaussian weight initializer.
pub struct Init {
    rng: ChaCha8Rng,
    std: f64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std: 0.02,
        }
    }

    fn normal<T: Float>(&mut self, mean: f64, shape: &[usize]) -> Tensor<T> {
        let n = shape.iter().product();
        let dist = Normal::new(mean, self.std).expect("positive std");
        let v = (0..n).map(|_| T::of(dist.sample(&mut self.rng))).collect();
        Tensor::param(v, shape).expect("finite init")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Param,
    Buffer,
}

/// Anything owning named tensors.
pub trait Module<T: Float> {
    /// Calls `f` for every parameter and buffer in declaration order.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind));
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Trainable tensors with their dotted names.
pub fn named_params<T: Float>(m: &dyn Module<T>, prefix: &str) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    m.visit(prefix, &mut |name, t, kind| {
        if kind == TensorKind::Param {
            out.push((name, t.clone()));
        }
    });
    out
}

/// Every tensor (parameters and running statistics), in declaration order.
pub fn named_tensors<T: Float>(m: &dyn Module<T>, prefix: &str) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    m.visit(prefix, &mut |name, t, _| out.push((name, t.clone())));
    out
}

pub fn count_params<T: Float>(m: &dyn Module<T>) -> usize {
    named_params(m, "").iter().map(|(_, t)| t.numel()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    Zero,
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding_mode: PaddingMode,
    pub padding: usize,
}

impl Conv1dSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            padding_mode: PaddingMode::Zero,
            padding: 0,
        }
    }

    pub fn stride(self, stride: usize) -> Self {
        Self { stride, ..self }
    }

    pub fn pad(self, padding: usize, padding_mode: PaddingMode) -> Self {
        Self {
            padding,
            padding_mode,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("convolution sizes and stride must be positive"));
        }
        Ok(())
    }
}

pub struct Conv1d<T: Float> {
    pub spec: Conv1dSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Float> Conv1d<T> {
    pub fn new(spec: Conv1dSpec, bias: bool, init: &mut Init) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            weight: init.normal(0.0, &[spec.out_channels, spec.in_channels, spec.kernel_size]),
            bias: bias.then(|| Tensor::param(vec![T::zero(); spec.out_channels], &[spec.out_channels]).unwrap()),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = &self.spec;
        match s.padding_mode {
            PaddingMode::Zero => conv1d(x, &self.weight, self.bias.as_ref(), s.stride, s.padding),
            PaddingMode::Reflection => {
                let padded = if s.padding > 0 { reflection_pad1d(x, s.padding)? } else { x.clone() };
                conv1d(&padded, &self.weight, self.bias.as_ref(), s.stride, 0)
            }
        }
    }
}

impl<T: Float> Module<T> for Conv1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        f(join(prefix, "weight"), &self.weight, TensorKind::Param);
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), b, TensorKind::Param);
        }
    }
}

pub struct ConvTranspose1d<T: Float> {
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    /// `[in_channels, out_channels, kernel]`.
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Float> ConvTranspose1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        bias: bool,
        init: &mut Init,
    ) -> Result<Self> {
        Conv1dSpec::new(in_channels, out_channels, kernel).stride(stride).validate()?;
        Ok(Self {
            stride,
            padding,
            output_padding,
            weight: init.normal(0.0, &[in_channels, out_channels, kernel]),
            bias: bias.then(|| Tensor::param(vec![T::zero(); out_channels], &[out_channels]).unwrap()),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv_transpose1d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding, self.output_padding)
    }
}

impl<T: Float> Module<T> for ConvTranspose1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        f(join(prefix, "weight"), &self.weight, TensorKind::Param);
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), b, TensorKind::Param);
        }
    }
}

pub struct BatchNorm1d<T: Float> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub cfg: BatchNormConfig,
}

impl<T: Float> BatchNorm1d<T> {
    pub fn new(channels: usize, init: &mut Init) -> Self {
        Self {
            gamma: init.normal(1.0, &[channels]),
            beta: Tensor::param(vec![T::zero(); channels], &[channels]).unwrap(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cfg: BatchNormConfig::default(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        batch_norm(x, &self.gamma, &self.beta, &self.running_mean, &self.running_var, ctx.train, self.cfg)
    }
}

impl<T: Float> Module<T> for BatchNorm1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        f(join(prefix, "gamma"), &self.gamma, TensorKind::Param);
        f(join(prefix, "beta"), &self.beta, TensorKind::Param);
        f(join(prefix, "running_mean"), &self.running_mean, TensorKind::Buffer);
        f(join(prefix, "running_var"), &self.running_var, TensorKind::Buffer);
    }
}

/// Pointwise per-channel dense stage: one weight and one bias per channel,
/// shared over time. Starts as the identity.
pub struct Dense<T: Float> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
}

impl<T: Float> Dense<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: Tensor::param(vec![T::one(); channels], &[channels]).unwrap(),
            shift: Tensor::param(vec![T::zero(); channels], &[channels]).unwrap(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        channel_affine(x, &self.scale, &self.shift)
    }
}

impl<T: Float> Module<T> for Dense<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        f(join(prefix, "scale"), &self.scale, TensorKind::Param);
        f(join(prefix, "shift"), &self.shift, TensorKind::Param);
    }
}

pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn forward<T: Float>(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
        dropout(x, self.p, ctx.train, &mut ctx.rng)
    }
}
