//! Adversarial, cycle, spectral, temporal and power losses.
//!
//! Signal losses work row by row on `[B, C, L]` tensors: every
//! `(sample, channel)` pair is one row compared against the matching target
//! row, and the term is the mean over rows. Rows whose target or output is
//! degenerate (flat segment, zero power) are left out and counted in
//! [`LossTerm::skipped`] rather than failing the batch.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::arch::{Discriminator, Generator};
use crate::error::{Error, Result};
use crate::nn::{Ctx, Float, Tensor};
use crate::signal::periodogram;

/// Floor for the spectral-loss denominator.
pub const SPECTRAL_DENOM_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Spectral term.
    pub p: f64,
    /// Temporal term.
    pub q: f64,
    /// Power term.
    pub r: f64,
    pub cycle: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            p: 2.0,
            q: 4.0,
            r: 1.0,
            cycle: 1.0,
        }
    }
}

impl LossWeights {
    /// Only the least-squares adversarial and cycle terms.
    pub fn plain() -> Self {
        Self {
            p: 0.0,
            q: 0.0,
            r: 0.0,
            cycle: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.p, self.q, self.r, self.cycle].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A loss averaged over the rows that could be evaluated.
pub struct LossTerm<T: Float> {
    pub value: Tensor<T>,
    pub used: usize,
    pub skipped: usize,
}

impl<T: Float> LossTerm<T> {
    fn over_rows(per_row: Option<Tensor<T>>, used: usize, skipped: usize) -> Result<Self> {
        let value = match per_row {
            Some(t) => t.mean(),
            None => Tensor::scalar(T::zero()),
        };
        Ok(Self { value, used, skipped })
    }
}

/// Row view of a `[.., L]` tensor.
fn rows<T: Float>(g: &Tensor<T>) -> Result<(usize, usize)> {
    let l = *g.shape().last().ok_or_else(|| Error::shape("loss on a scalar"))?;
    if l == 0 {
        return Err(Error::shape("loss on empty rows"));
    }
    Ok((g.numel() / l, l))
}

fn check_target<T: Float>(target: &[f64], generated: &Tensor<T>) -> Result<()> {
    if target.len() != generated.numel() {
        return Err(Error::shape(format!(
            "target has {} values, generated {:?}",
            target.len(),
            generated.shape()
        )));
    }
    Ok(())
}

/// Sum of squared deviations from the mean.
fn centred_ss(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Too flat for a correlation: no spread, or spread negligible against the
/// values' magnitude.
fn is_flat(x: &[f64]) -> bool {
    let ss = centred_ss(x);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    ss == 0.0 || ss <= 1e-12 * energy
}

/// Pearson correlation per row between `g: [R, L]` and constant rows `t`.
fn pearson_rows<T: Float>(g: &Tensor<T>, t: &[f64]) -> Result<Tensor<T>> {
    let (r, l) = rows(g)?;
    let mut tc = Vec::with_capacity(t.len());
    let mut tnorm = Vec::with_capacity(r);
    for row in t.chunks(l) {
        let m = row.iter().sum::<f64>() / l as f64;
        let c: Vec<f64> = row.iter().map(|v| v - m).collect();
        tnorm.push(T::of(c.iter().map(|v| v * v).sum::<f64>().sqrt()));
        tc.extend(c.into_iter().map(T::of));
    }
    let gc = g.sub(&g.row_mean()?.expand_last(l))?;
    let num = gc.mul_const(&tc)?.row_sum()?;
    let den = gc.square().row_sum()?.sqrt().mul_const(&tnorm)?;
    num.div(&den)
}

/// Real and imaginary DFT bases `[L, L/2 + 1]` and the one-sided periodogram
/// scaling, matching [`crate::signal::periodogram`].
struct DftBasis<T> {
    cos: Rc<[T]>,
    sin: Rc<[T]>,
    scale: Vec<T>,
    bins: usize,
}

impl<T: Float> DftBasis<T> {
    fn new(l: usize) -> Self {
        let bins = l / 2 + 1;
        let mut cos = Vec::with_capacity(l * bins);
        let mut sin = Vec::with_capacity(l * bins);
        for j in 0..l {
            for k in 0..bins {
                let a = 2.0 * std::f64::consts::PI * ((j * k) % l) as f64 / l as f64;
                cos.push(T::of(a.cos()));
                sin.push(T::of(a.sin()));
            }
        }
        let norm = 1.0 / (l as f64 * l as f64);
        let scale = (0..bins)
            .map(|k| T::of(norm * crate::signal::one_sided_weight(k, l)))
            .collect();
        Self {
            cos: cos.into(),
            sin: sin.into(),
            scale,
            bins,
        }
    }

    /// `[R, L] -> [R, L/2 + 1]` power spectra.
    fn psd(&self, g: &Tensor<T>, l: usize) -> Result<Tensor<T>> {
        let r = g.numel() / l;
        let g2 = g.reshape(&[r, l])?;
        let re = g2.matmul_const(self.cos.clone(), l, self.bins)?;
        let im = g2.matmul_const(self.sin.clone(), l, self.bins)?;
        let scale: Vec<T> = (0..r).flat_map(|_| self.scale.iter().copied()).collect();
        re.square().add(&im.square())?.mul_const(&scale)
    }
}

fn select_values(t: &[f64], l: usize, keep: &[usize]) -> Vec<f64> {
    keep.iter().flat_map(|&i| t[i * l..(i + 1) * l].iter().copied()).collect()
}

/// `1 - rho(target, generated)` per row.
pub fn temporal_loss<T: Float>(target: &[f64], generated: &Tensor<T>) -> Result<LossTerm<T>> {
    check_target(target, generated)?;
    let (r, l) = rows(generated)?;
    let g = generated.reshape(&[r, l])?;
    let gd = g.to_f64();
    let keep: Vec<usize> = (0..r)
        .filter(|&i| !is_flat(&target[i * l..(i + 1) * l]) && !is_flat(&gd[i * l..(i + 1) * l]))
        .collect();
    if keep.is_empty() {
        return LossTerm::over_rows(None, 0, r);
    }
    let rho = pearson_rows(&g.select_rows(&keep)?, &select_values(target, l, &keep))?;
    LossTerm::over_rows(Some(rho.affine(-T::one(), T::one())), keep.len(), r - keep.len())
}

/// `|P_target - P_generated| / P_target` per row, `P` the mean power.
pub fn power_loss<T: Float>(target: &[f64], generated: &Tensor<T>) -> Result<LossTerm<T>> {
    check_target(target, generated)?;
    let (r, l) = rows(generated)?;
    let powers: Vec<f64> = target.chunks(l).map(crate::signal::mean_power).collect();
    let keep: Vec<usize> = (0..r).filter(|&i| powers[i] > 0.0).collect();
    if keep.is_empty() {
        return LossTerm::over_rows(None, 0, r);
    }
    let g = generated.reshape(&[r, l])?.select_rows(&keep)?;
    let pg = g.square().row_mean()?;
    let inv: Vec<T> = keep.iter().map(|&i| T::of(1.0 / powers[i])).collect();
    let ones = vec![-T::one(); keep.len()];
    let rel = pg.mul_const(&inv)?.add_const(&ones)?.abs();
    LossTerm::over_rows(Some(rel), keep.len(), r - keep.len())
}

/// `(1 - rho(PSD target, PSD generated)) / max(rho(PSD target, PSD input), floor)`
/// per row.
///
/// `input` is the generator's input batch `[B, C_in, L]`; its reference
/// spectrum is the mean of its channels' spectra. Each generated row
/// `(b, c)` uses sample `b`'s reference.
pub fn spectral_loss<T: Float>(target: &[f64], generated: &Tensor<T>, input: &[f64], input_channels: usize) -> Result<LossTerm<T>> {
    check_target(target, generated)?;
    let (r, l) = rows(generated)?;
    let b = *generated.shape().first().unwrap_or(&1);
    if input.len() != b * input_channels * l || r % b.max(1) != 0 {
        return Err(Error::shape("spectral-loss input batch does not match the generated batch"));
    }
    let per_sample = r / b;
    let bins = l / 2 + 1;
    let mut reference = vec![0.0; b * bins];
    for s in 0..b {
        for c in 0..input_channels {
            let off = (s * input_channels + c) * l;
            let p = periodogram(&input[off..off + l])?;
            for (acc, v) in reference[s * bins..(s + 1) * bins].iter_mut().zip(p) {
                *acc += v / input_channels as f64;
            }
        }
    }
    let target_psd: Vec<Vec<f64>> = target.chunks(l).map(periodogram).collect::<Result<_>>()?;

    let basis = DftBasis::<T>::new(l);
    let g = generated.reshape(&[r, l])?;
    let gpsd = basis.psd(&g, l)?;
    let gpsd_vals = gpsd.to_f64();

    let mut keep = Vec::new();
    let mut denoms = Vec::new();
    for i in 0..r {
        let refp = &reference[(i / per_sample) * bins..(i / per_sample + 1) * bins];
        let tp = &target_psd[i];
        if is_flat(tp) || is_flat(refp) || is_flat(&gpsd_vals[i * bins..(i + 1) * bins]) {
            continue;
        }
        let rho_ref = crate::signal::pearson_corr(tp, refp)?;
        keep.push(i);
        denoms.push(rho_ref.max(SPECTRAL_DENOM_FLOOR));
    }
    if keep.is_empty() {
        return LossTerm::over_rows(None, 0, r);
    }
    let tsel: Vec<f64> = keep.iter().flat_map(|&i| target_psd[i].iter().copied()).collect();
    let rho = pearson_rows(&gpsd.select_rows(&keep)?, &tsel)?;
    let inv: Vec<T> = denoms.iter().map(|d| T::of(1.0 / d)).collect();
    let per_row = rho.affine(-T::one(), T::one()).mul_const(&inv)?;
    LossTerm::over_rows(Some(per_row), keep.len(), r - keep.len())
}

/// Generator side of the least-squares objective for one direction:
/// `mean (1 - D(G(x)))^2`.
pub fn generator_adversarial<T: Float>(scores: &Tensor<T>) -> Tensor<T> {
    scores.affine(-T::one(), T::one()).square().mean()
}

/// `mean_i [1 - D1(G1 x_i)]^2 + [1 - D2(G2 y_i)]^2`.
///
/// Called "L1" by convention even though the form is squared.
pub fn l1_adversarial_loss<T: Float>(d1_on_g1x: &Tensor<T>, d2_on_g2y: &Tensor<T>) -> Result<Tensor<T>> {
    generator_adversarial(d1_on_g1x).add(&generator_adversarial(d2_on_g2y))
}

/// `mean (D(real) - 1)^2 + mean D(fake)^2` from precomputed scores.
pub fn lsgan_discriminator<T: Float>(real_scores: &Tensor<T>, fake_scores: &Tensor<T>) -> Result<Tensor<T>> {
    real_scores
        .affine(T::one(), -T::one())
        .square()
        .mean()
        .add(&fake_scores.square().mean())
}

/// Discriminator objective on a real and a generated batch. The generated
/// batch is detached, so no gradient reaches the generator.
pub fn discriminator_loss<T: Float>(d: &Discriminator<T>, real: &Tensor<T>, fake: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
    let real_scores = d.score(real, ctx)?;
    let fake_scores = d.score(&fake.detach(), ctx)?;
    lsgan_discriminator(&real_scores, &fake_scores)
}

/// Mean absolute reconstruction error per element.
pub fn cycle_l1<T: Float>(reconstructed: &Tensor<T>, original: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(reconstructed.sub(original)?.abs().mean())
}

/// `mean |G2(G1 x) - x| + mean |G1(G2 y) - y|`.
pub fn cycle_loss<T: Float>(x: &Tensor<T>, y: &Tensor<T>, g1: &Generator<T>, g2: &Generator<T>, ctx: &mut Ctx) -> Result<Tensor<T>> {
    let xr = g2.forward(&g1.forward(x, ctx)?, ctx)?;
    let yr = g1.forward(&g2.forward(y, ctx)?, ctx)?;
    cycle_l1(&xr, x)?.add(&cycle_l1(&yr, y)?)
}

/// The four adversarial-objective parts, each summed over both directions.
pub struct LossParts<T: Float> {
    pub l1: Tensor<T>,
    pub spec: Tensor<T>,
    pub temp: Tensor<T>,
    pub power: Tensor<T>,
}

/// `L_L1 + p L_spec + q L_temp + r L_power`.
pub fn combined_adversarial_loss<T: Float>(parts: &LossParts<T>, w: &LossWeights) -> Result<Tensor<T>> {
    parts
        .l1
        .add(&parts.spec.scale(T::of(w.p)))?
        .add(&parts.temp.scale(T::of(w.q)))?
        .add(&parts.power.scale(T::of(w.r)))
}
