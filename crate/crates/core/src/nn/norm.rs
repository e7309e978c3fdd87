//! Per-channel ops on `[batch, channels, length]`: batch normalization,
//! the channel affine used for the generator's dense stages, and dropout.

use rand::Rng;

use super::float::Float;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn dims3<T: Float>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::shape(format!(
            "expected [batch, channels, length], got {:?}",
            x.shape()
        ))),
    }
}

fn check_channels<T: Float>(t: &Tensor<T>, c: usize, what: &str) -> Result<()> {
    if t.shape() != [c] {
        return Err(Error::shape(format!("{what} shape {:?}, expected [{c}]", t.shape())));
    }
    Ok(())
}

/// Sums `f(g, x)` per channel over batch and length.
fn per_channel<T: Float>(b: usize, c: usize, l: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    let mut out = vec![T::zero(); c];
    for bi in 0..b {
        for (ci, o) in out.iter_mut().enumerate() {
            let base = (bi * c + ci) * l;
            for i in base..base + l {
                *o += f(i);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Batch normalization.
///
/// In training mode each channel is standardized with the batch mean and
/// biased variance over `(batch, length)`, and the running statistics move
/// towards the batch mean and unbiased variance by `momentum`. In eval
/// mode the running statistics are used and left untouched.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Float>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    train: bool,
    cfg: BatchNormConfig,
) -> Result<Tensor<T>> {
    let (b, c, l) = dims3(x)?;
    for (t, what) in [(gamma, "gamma"), (beta, "beta"), (running_mean, "running mean"), (running_var, "running var")] {
        check_channels(t, c, what)?;
    }
    if train && b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let eps = T::of(cfg.eps);
    let n = b * l;
    let xd = x.to_vec();
    let (mean, var) = if train {
        let nf = T::of(n as f64);
        let mean: Vec<T> = per_channel(b, c, l, |i| xd[i]).into_iter().map(|s| s / nf).collect();
        let var: Vec<T> = per_channel(b, c, l, |i| {
            let d = xd[i] - mean[(i / l) % c];
            d * d
        })
        .into_iter()
        .map(|s| s / nf)
        .collect();
        let m = T::of(cfg.momentum);
        let unbias = if n > 1 { T::of(n as f64 / (n - 1) as f64) } else { T::one() };
        running_mean.update(|r| r.iter_mut().zip(&mean).for_each(|(r, &v)| *r = (T::one() - m) * *r + m * v));
        running_var.update(|r| r.iter_mut().zip(&var).for_each(|(r, &v)| *r = (T::one() - m) * *r + m * v * unbias));
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let xhat: Vec<T> = xd
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = (i / l) % c;
            (v - mean[ch]) * inv_std[ch]
        })
        .collect();
    let (gd, bd) = (gamma.to_vec(), beta.to_vec());
    let y = xhat
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = (i / l) % c;
            gd[ch] * v + bd[ch]
        })
        .collect();

    Ok(Tensor::from_op(y, vec![b, c, l], vec![x.clone(), gamma.clone(), beta.clone()], move |g, p| {
        let gamma = p[1].data();
        let ggamma = per_channel(b, c, l, |i| g[i] * xhat[i]);
        let gbeta = per_channel(b, c, l, |i| g[i]);
        let gx = p[0].requires_grad().then(|| {
            if train {
                // d/dx of gamma * xhat with batch statistics
                let nf = T::of(n as f64);
                (0..g.len())
                    .map(|i| {
                        let ch = (i / l) % c;
                        gamma[ch] * inv_std[ch] / nf * (nf * g[i] - gbeta[ch] - xhat[i] * ggamma[ch])
                    })
                    .collect()
            } else {
                (0..g.len())
                    .map(|i| {
                        let ch = (i / l) % c;
                        g[i] * gamma[ch] * inv_std[ch]
                    })
                    .collect()
            }
        });
        vec![gx, Some(ggamma), Some(gbeta)]
    }))
}

/// `y[b, c, l] = x[b, c, l] * scale[c] + shift[c]`.
pub fn channel_affine<T: Float>(x: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, l) = dims3(x)?;
    check_channels(scale, c, "scale")?;
    check_channels(shift, c, "shift")?;
    let (sd, hd) = (scale.data(), shift.data());
    let y = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = (i / l) % c;
            v * sd[ch] + hd[ch]
        })
        .collect();
    drop((sd, hd));
    Ok(Tensor::from_op(y, vec![b, c, l], vec![x.clone(), scale.clone(), shift.clone()], move |g, p| {
        let (xd, sd) = (p[0].data(), p[1].data());
        let gx = p[0].requires_grad().then(|| g.iter().enumerate().map(|(i, &g)| g * sd[(i / l) % c]).collect());
        let gs = per_channel(b, c, l, |i| g[i] * xd[i]);
        let gh = per_channel(b, c, l, |i| g[i]);
        vec![gx, Some(gs), Some(gh)]
    }))
}

/// Inverted dropout: zeroes each element with probability `p` and scales
/// the survivors by `1 / (1 - p)`. Identity outside training.
pub fn dropout<T: Float>(x: &Tensor<T>, p: f64, train: bool, rng: &mut impl Rng) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.numel())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    x.mul_const(&mask)
}
