use super::butterworth::{butterworth_coeffs, FilterSpec, SosFilter};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Forward-backward (zero-phase) filtering.
///
/// The record is extended at both ends by point reflection and each pass
/// starts from the steady state for its first sample, which keeps edge
/// transients short. The effective response is the squared magnitude of
/// the one-pass filter with zero phase.
pub fn zero_phase_filter(s: &Signal, spec: &FilterSpec) -> Result<Signal> {
    if let FilterSpec::MovingAverage { window } = *spec {
        return moving_average(s, window);
    }
    let sos = butterworth_coeffs(spec, s.sample_rate_hz())?;
    s.with_samples(filtfilt(&sos, s.samples())?)
}

/// Pole decay the reflected edge must cover before real samples are reached.
const SETTLE: f64 = 1e-8;

/// Number of reflected samples wanted on each side before filtering: long
/// enough for the slowest pole to decay by [`SETTLE`], never shorter than
/// `3 * (2 * sections + 1)`.
///
/// With a 0.1 Hz high-pass edge the slowest pole rings for tens of seconds,
/// so a short pad leaves start-up transients far inside the record.
pub fn edge_len(sos: &SosFilter) -> usize {
    let minimum = 3 * (2 * sos.sections.len() + 1);
    let r = sos.max_pole_radius();
    if !(r > 0.0 && r < 1.0) {
        return minimum;
    }
    minimum.max((SETTLE.ln() / r.ln()).ceil() as usize)
}

pub fn filtfilt(sos: &SosFilter, x: &[f64]) -> Result<Vec<f64>> {
    let minimum = 3 * (2 * sos.sections.len() + 1);
    let n = x.len();
    if n <= minimum {
        return Err(Error::TooShort {
            needed: minimum + 1,
            got: n,
        });
    }
    // Reflection cannot reach further than the record itself.
    let edge = edge_len(sos).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * edge);
    ext.extend((1..=edge).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=edge).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sos.step_state();
    let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

    let mut y = sos.apply_from(&ext, scaled(ext[0]));
    y.reverse();
    let mut y = sos.apply_from(&y, scaled(y[0]));
    y.reverse();
    Ok(y[edge..edge + n].to_vec())
}

/// One causal pass, for comparison with [`zero_phase_filter`].
pub fn one_pass_filter(s: &Signal, spec: &FilterSpec) -> Result<Signal> {
    let sos = butterworth_coeffs(spec, s.sample_rate_hz())?;
    s.with_samples(sos.apply(s.samples()))
}

/// Centered moving mean. Windows are clipped at the record edges, so the
/// first and last few outputs average fewer samples.
///
/// For even windows the extra sample is taken on the right.
pub fn moving_average(s: &Signal, window: usize) -> Result<Signal> {
    let x = s.samples();
    if window == 0 {
        return Err(Error::invalid("moving-average window must be positive"));
    }
    if window > x.len() {
        return Err(Error::TooShort {
            needed: window,
            got: x.len(),
        });
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    let left = (window - 1) / 2;
    let right = window - 1 - left;
    let out = (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(x.len() - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect();
    s.with_samples(out)
}
