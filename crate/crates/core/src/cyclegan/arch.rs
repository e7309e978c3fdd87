//! Generator (ResNet encoder-decoder) and PatchGAN discriminator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm1d, Conv1d, Conv1dSpec, ConvTranspose1d, Ctx, Dense, Dropout, Float, Init, Module, PaddingMode, Tensor,
    TensorKind,
};

/// Layer plan shared by both generators and both discriminators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Width of the first generator stage; later stages use 2x and 4x.
    pub ngf: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    /// Width of the first discriminator stage.
    pub ndf: usize,
    /// Strided discriminator stages after the first one.
    pub d_layers: usize,
    pub mecg_channels: usize,
    pub fecg_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            ngf: 16,
            n_blocks: 13,
            dropout: 0.5,
            ndf: 16,
            d_layers: 3,
            mecg_channels: 4,
            fecg_channels: 1,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngf == 0 || self.ndf == 0 || self.mecg_channels == 0 || self.fecg_channels == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.d_layers == 0 {
            return Err(Error::Config("discriminator needs at least one strided stage".into()));
        }
        Ok(())
    }
}

/// Convolution followed by batch norm, the per-channel dense stage and ReLU.
struct ConvUnit<T: Float> {
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
    dense: Dense<T>,
}

impl<T: Float> ConvUnit<T> {
    fn new(spec: Conv1dSpec, init: &mut Init) -> Result<Self> {
        Ok(Self {
            conv: Conv1d::new(spec, false, init)?,
            bn: BatchNorm1d::new(spec.out_channels, init),
            dense: Dense::new(spec.out_channels),
        })
    }

    fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let y = self.bn.forward(&self.conv.forward(x)?, ctx)?;
        Ok(self.dense.forward(&y)?.relu())
    }
}

impl<T: Float> Module<T> for ConvUnit<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
        self.dense.visit(&format!("{prefix}.dense"), f);
    }
}

/// `y = F(x) + x` with `F` = pad, conv, BN, dense, ReLU, dropout, pad, conv, BN.
struct ResnetBlock<T: Float> {
    unit: ConvUnit<T>,
    dropout: Dropout,
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
}

impl<T: Float> ResnetBlock<T> {
    fn new(channels: usize, dropout: f64, init: &mut Init) -> Result<Self> {
        let spec = Conv1dSpec::new(channels, channels, 3).pad(1, PaddingMode::Reflection);
        Ok(Self {
            unit: ConvUnit::new(spec, init)?,
            dropout: Dropout { p: dropout },
            conv: Conv1d::new(spec, false, init)?,
            bn: BatchNorm1d::new(channels, init),
        })
    }

    fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
        let h = self.unit.forward(x, ctx)?;
        let h = self.dropout.forward(&h, ctx)?;
        let h = self.bn.forward(&self.conv.forward(&h)?, ctx)?;
        h.add(x)
    }
}

impl<T: Float> Module<T> for ResnetBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        self.unit.visit(&format!("{prefix}.unit"), f);
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
    }
}

/// Transposed convolution followed by batch norm, dense and ReLU.
struct UpUnit<T: Float> {
    conv: ConvTranspose1d<T>,
    bn: BatchNorm1d<T>,
    dense: Dense<T>,
}

impl<T: Float> Module<T> for UpUnit<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
        self.dense.visit(&format!("{prefix}.dense"), f);
    }
}

/// Maps `[B, in, L]` to `[B, out, L]` with values in `[0, 1]`; `L` must be a
/// multiple of 4.
///
/// Encoder: reflection-padded k=7 conv to `ngf`, then two stride-2 k=3 convs
/// to `2 ngf` and `4 ngf`. `n_blocks` residual blocks at `4 ngf`. Decoder:
/// two stride-2 transposed convs back to `ngf`, a reflection-padded k=7 conv
/// to the output channels, a dense stage and tanh. The tanh range is mapped
/// onto `[0, 1]` to match range-normalized targets.
pub struct Generator<T: Float> {
    down: Vec<ConvUnit<T>>,
    blocks: Vec<ResnetBlock<T>>,
    up: Vec<UpUnit<T>>,
    head: Conv1d<T>,
    head_dense: Dense<T>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl<T: Float> Generator<T> {
    pub fn new(in_channels: usize, out_channels: usize, arch: &ArchConfig, init: &mut Init) -> Result<Self> {
        arch.validate()?;
        let ngf = arch.ngf;
        let down = vec![
            ConvUnit::new(Conv1dSpec::new(in_channels, ngf, 7).pad(3, PaddingMode::Reflection), init)?,
            ConvUnit::new(Conv1dSpec::new(ngf, 2 * ngf, 3).stride(2).pad(1, PaddingMode::Zero), init)?,
            ConvUnit::new(Conv1dSpec::new(2 * ngf, 4 * ngf, 3).stride(2).pad(1, PaddingMode::Zero), init)?,
        ];
        let blocks = (0..arch.n_blocks)
            .map(|_| ResnetBlock::new(4 * ngf, arch.dropout, init))
            .collect::<Result<_>>()?;
        let up = [(4 * ngf, 2 * ngf), (2 * ngf, ngf)]
            .into_iter()
            .map(|(cin, cout)| {
                Ok(UpUnit {
                    conv: ConvTranspose1d::new(cin, cout, 3, 2, 1, 1, false, init)?,
                    bn: BatchNorm1d::new(cout, init),
                    dense: Dense::new(cout),
                })
            })
            .collect::<Result<_>>()?;
        let head = Conv1d::new(
            Conv1dSpec::new(ngf, out_channels, 7).pad(3, PaddingMode::Reflection),
            true,
            init,
        )?;
        Ok(Self {
            down,
            blocks,
            up,
            head,
            head_dense: Dense::new(out_channels),
            in_channels,
            out_channels,
        })
    }

    /// Raw tanh output in `(-1, 1)`.
    pub fn forward_tanh(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
        match *x.shape() {
            [_, c, l] if c == self.in_channels && l % 4 == 0 && l >= 8 => {}
            _ => {
                return Err(Error::shape(format!(
                    "generator expects [B, {}, L] with L a multiple of 4 and at least 8, got {:?}",
                    self.in_channels,
                    x.shape()
                )))
            }
        }
        let mut h = x.clone();
        for unit in &self.down {
            h = unit.forward(&h, ctx)?;
        }
        for block in &self.blocks {
            h = block.forward(&h, ctx)?;
        }
        for unit in &self.up {
            let y = unit.bn.forward(&unit.conv.forward(&h)?, ctx)?;
            h = unit.dense.forward(&y)?.relu();
        }
        Ok(self.head_dense.forward(&self.head.forward(&h)?)?.tanh())
    }

    /// Output remapped to `[0, 1]`.
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
        Ok(self.forward_tanh(x, ctx)?.affine(T::of(0.5), T::of(0.5)))
    }
}

impl<T: Float> Module<T> for Generator<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        let p = |s: String| if prefix.is_empty() { s } else { format!("{prefix}.{s}") };
        for (i, u) in self.down.iter().enumerate() {
            u.visit(&p(format!("down{i}")), f);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&p(format!("block{i}")), f);
        }
        for (i, u) in self.up.iter().enumerate() {
            u.visit(&p(format!("up{i}")), f);
        }
        self.head.visit(&p("head".into()), f);
        self.head_dense.visit(&p("head_dense".into()), f);
    }
}

/// PatchGAN: k=4 convs with leaky ReLU (0.2). The first stage has a bias
/// and no norm, the interior stages use batch norm, the last conv maps to
/// one channel of patch scores.
pub struct Discriminator<T: Float> {
    stages: Vec<(Conv1d<T>, Option<BatchNorm1d<T>>)>,
    head: Conv1d<T>,
    pub in_channels: usize,
}

impl<T: Float> Discriminator<T> {
    pub fn new(in_channels: usize, arch: &ArchConfig, init: &mut Init) -> Result<Self> {
        arch.validate()?;
        let mut stages = Vec::new();
        let mut width = arch.ndf;
        stages.push((
            Conv1d::new(Conv1dSpec::new(in_channels, width, 4).stride(2).pad(1, PaddingMode::Zero), true, init)?,
            None,
        ));
        for i in 1..=arch.d_layers {
            let stride = if i < arch.d_layers { 2 } else { 1 };
            let next = width * 2;
            stages.push((
                Conv1d::new(Conv1dSpec::new(width, next, 4).stride(stride).pad(1, PaddingMode::Zero), false, init)?,
                Some(BatchNorm1d::new(next, init)),
            ));
            width = next;
        }
        let head = Conv1d::new(Conv1dSpec::new(width, 1, 4).pad(1, PaddingMode::Zero), true, init)?;
        Ok(Self {
            stages,
            head,
            in_channels,
        })
    }

    /// Patch scores `[B, 1, P]`.
    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        if x.shape().len() != 3 || x.shape()[1] != self.in_channels {
            return Err(Error::shape(format!(
                "discriminator expects [B, {}, L], got {:?}",
                self.in_channels,
                x.shape()
            )));
        }
        let slope = T::of(0.2);
        let mut h = x.clone();
        for (conv, bn) in &self.stages {
            h = conv.forward(&h)?;
            if let Some(bn) = bn {
                h = bn.forward(&h, ctx)?;
            }
            h = h.leaky_relu(slope);
        }
        self.head.forward(&h)
    }

    /// Per-sample decision `[B]`: the mean patch score.
    pub fn score(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let out = self.forward(x, ctx)?;
        let b = out.shape()[0];
        out.reshape(&[b, out.numel() / b])?.row_mean()
    }
}

impl<T: Float> Module<T> for Discriminator<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>, TensorKind)) {
        let p = |s: String| if prefix.is_empty() { s } else { format!("{prefix}.{s}") };
        for (i, (conv, bn)) in self.stages.iter().enumerate() {
            conv.visit(&p(format!("stage{i}.conv")), f);
            if let Some(bn) = bn {
                bn.visit(&p(format!("stage{i}.bn")), f);
            }
        }
        self.head.visit(&p("head".into()), f);
    }
}
