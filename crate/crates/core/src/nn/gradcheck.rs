//! Central finite-difference check of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries probed per parameter tensor; larger tensors are sampled.
    pub max_entries: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_entries: 24,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` over the probed
    /// entries, as 2-norms. Absolute error when both norms are below 1e-10.
    pub rel_error: f64,
}

/// Compares the gradient from one backward pass of `loss` against central
/// differences for every tensor in `params`.
///
/// `loss` must be a pure function of the parameter values: rebuild any
/// random state (dropout masks) from a fixed seed on every call.
pub fn check_gradients(
    params: &[(String, Tensor<f64>)],
    loss: &mut dyn FnMut() -> Result<Tensor<f64>>,
    opts: GradCheckOptions,
) -> Result<Vec<GradCheck>> {
    params.iter().for_each(|(_, p)| p.zero_grad());
    loss()?.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(params.len());
    for (name, p) in params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let n = p.numel();
        let idx: Vec<usize> = if n <= opts.max_entries {
            (0..n).collect()
        } else {
            sample(&mut rng, n, opts.max_entries).into_vec()
        };
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for &i in &idx {
            let orig = p.data()[i];
            p.update(|w| w[i] = orig + opts.step);
            let plus = loss()?.item();
            p.update(|w| w[i] = orig - opts.step);
            let minus = loss()?.item();
            p.update(|w| w[i] = orig);
            let numeric = (plus - minus) / (2.0 * opts.step);
            diff += (analytic[i] - numeric).powi(2);
            na += analytic[i].powi(2);
            nn += numeric.powi(2);
        }
        let scale = na.sqrt().max(nn.sqrt());
        let rel_error = if scale < 1e-10 { diff.sqrt() } else { diff.sqrt() / scale };
        out.push(GradCheck {
            name: name.clone(),
            entries: idx.len(),
            rel_error,
        });
    }
    params.iter().for_each(|(_, p)| p.zero_grad());
    Ok(out)
}

/// Largest relative error of a check, with the offending tensor's name.
pub fn worst(checks: &[GradCheck]) -> (String, f64) {
    checks
        .iter()
        .map(|c| (c.name.clone(), c.rel_error))
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}
