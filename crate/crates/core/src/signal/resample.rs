use super::Signal;
use crate::error::{Error, Result};

/// Prototype half-length per polyphase branch, in taps of the slower side.
const HALF_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;
const MAX_FACTOR: usize = 10_000;

/// Band-limited rational resampling (polyphase FIR, Kaiser-windowed sinc).
///
/// The rate ratio is reduced to `up/down`; the prototype low-pass sits at the
/// lower of the two Nyquist frequencies, so downsampling is anti-aliased.
/// Record edges are extended by point reflection to keep edge transients
/// short. Output length is `ceil(len * up / down)`.
pub fn resample(s: &Signal, target_rate_hz: f64) -> Result<Signal> {
    if !(target_rate_hz.is_finite() && target_rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "target rate must be positive, got {target_rate_hz}"
        )));
    }
    let source = s.sample_rate_hz();
    if target_rate_hz == source {
        return Ok(s.clone());
    }
    let (up, down) = rational_ratio(target_rate_hz / source).ok_or_else(|| {
        Error::invalid(format!(
            "cannot express {target_rate_hz}/{source} as a ratio with factors below {MAX_FACTOR}"
        ))
    })?;
    let x = s.samples();
    let h = prototype(up, down);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * up).div_ceil(down);

    let (up_i, half_i) = (up as i64, half as i64);
    let out = (0..n_out)
        .map(|m| {
            let t = (m * down) as i64 + half_i;
            let lo = (t - 2 * half_i).div_euclid(up_i) + i64::from((t - 2 * half_i).rem_euclid(up_i) != 0);
            let hi = t.div_euclid(up_i);
            (lo..=hi)
                .map(|n| extended(x, n) * h[(t - n * up_i) as usize])
                .sum::<f64>()
        })
        .collect();
    Signal::new(out, target_rate_hz)
}

/// Sample `n` of `x`, with point reflection about the first/last sample
/// outside the record.
fn extended(x: &[f64], n: i64) -> f64 {
    let last = x.len() as i64 - 1;
    if n < 0 {
        2.0 * x[0] - x[(-n).min(last) as usize]
    } else if n > last {
        2.0 * x[last as usize] - x[(2 * last - n).max(0) as usize]
    } else {
        x[n as usize]
    }
}

/// Windowed-sinc low-pass at the upsampled rate with gain `up`.
fn prototype(up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half = HALF_TAPS * max_rate;
    let len = 2 * half + 1;
    let i0_beta = bessel_i0(KAISER_BETA);
    (0..len)
        .map(|j| {
            let t = j as f64 - half as f64;
            let arg = t / max_rate as f64;
            let sinc = if arg == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
            };
            let r = t / half as f64;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            up as f64 / max_rate as f64 * sinc * w
        })
        .collect()
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Best rational approximation `p/q` of `ratio` with both factors bounded.
fn rational_ratio(ratio: f64) -> Option<(usize, usize)> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        let (p2, q2) = (a as u64 * p1 + p0, a as u64 * q1 + q0);
        if p2 as usize > MAX_FACTOR || q2 as usize > MAX_FACTOR {
            return None;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if ((p1 as f64 / q1 as f64) - ratio).abs() <= 1e-9 * ratio {
            return Some((p1 as usize, q1 as usize));
        }
        let frac = x - a;
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}
