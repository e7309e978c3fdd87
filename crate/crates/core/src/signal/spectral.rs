use rustfft::{num_complex::Complex, FftPlanner};

use super::Signal;
use crate::error::{Error, Result};

/// Minimum input length accepted by [`psd`].
pub const MIN_PSD_LEN: usize = 8;

/// `(1/len) * sum(x^2)`.
pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// One-sided periodogram of a channel.
pub fn psd(s: &Signal) -> Result<Vec<f64>> {
    periodogram(s.samples())
}

/// One-sided, unwindowed periodogram with `len/2 + 1` bins, scaled so the
/// bins sum to the mean power of the input (Parseval).
///
/// Bin `k` sits at `k * rate / len` Hz. Interior bins carry the power of both
/// the positive and the negative frequency.
pub fn periodogram(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < MIN_PSD_LEN {
        return Err(Error::TooShort {
            needed: MIN_PSD_LEN,
            got: n,
        });
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = 1.0 / (n as f64 * n as f64);
    Ok((0..n / 2 + 1)
        .map(|k| buf[k].norm_sqr() * norm * one_sided_weight(k, n))
        .collect())
}

/// 1 for DC and (even `n`) the Nyquist bin, 2 for everything in between.
pub(crate) fn one_sided_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}
