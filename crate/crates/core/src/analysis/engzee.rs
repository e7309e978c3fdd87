//! Engelse-Zeelenberg QRS detection in the real-time form: a 4-sample
//! difference, a 10-tap low-pass, an adaptive threshold on the filtered
//! derivative and a search window in which the R peak is the signal
//! extremum.

use serde::{Deserialize, Serialize};

use super::peaks::PeakList;
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Low-pass applied to the derivative.
const LOWPASS: [f64; 10] = [1.0, 4.0, 6.0, 4.0, 1.0, -1.0, -4.0, -6.0, -4.0, -1.0];
const DIFF_LAG: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngZeeConfig {
    /// No second beat within this time of a detected peak.
    pub refractory_ms: f64,
    /// Span after a threshold crossing in which the opposite crossing and
    /// the peak are searched.
    pub search_ms: f64,
    /// Threshold as a fraction of the mean of the recent beat maxima.
    pub threshold_fraction: f64,
    /// The opposite-sign lobe that confirms a crossing must reach this
    /// fraction of the threshold.
    pub pair_fraction: f64,
    /// Beat maxima averaged into the threshold.
    pub history: usize,
    /// Lead-in used to seed the threshold; shorter records are rejected.
    pub warmup_s: f64,
    /// After this time without a beat the threshold starts to fall...
    pub decay_start_ms: f64,
    /// ...linearly over this span...
    pub decay_span_ms: f64,
    /// ...down to this fraction of its value.
    pub decay_floor: f64,
}

impl Default for EngZeeConfig {
    fn default() -> Self {
        Self {
            refractory_ms: 200.0,
            search_ms: 160.0,
            threshold_fraction: 0.5,
            pair_fraction: 0.5,
            history: 5,
            warmup_s: 2.0,
            decay_start_ms: 200.0,
            decay_span_ms: 1000.0,
            decay_floor: 0.6,
        }
    }
}

/// The filtered derivative, sample-aligned with the input (causal, zero
/// initial state).
pub fn engzee_feature(x: &[f64]) -> Vec<f64> {
    let y1: Vec<f64> = (0..x.len())
        .map(|i| if i >= DIFF_LAG { x[i] - x[i - DIFF_LAG] } else { 0.0 })
        .collect();
    (0..x.len())
        .map(|i| {
            LOWPASS
                .iter()
                .enumerate()
                .take_while(|(k, _)| *k <= i)
                .map(|(k, c)| c * y1[i - k])
                .sum()
        })
        .collect()
}

pub fn engzee_detect(s: &Signal) -> Result<PeakList> {
    engzee_detect_with(s, &EngZeeConfig::default())
}

pub fn engzee_detect_with(s: &Signal, cfg: &EngZeeConfig) -> Result<PeakList> {
    let rate = s.sample_rate_hz();
    let x = s.samples();
    let n = x.len();
    let ms = |v: f64| (v * rate / 1000.0).round() as usize;
    let warm = ((cfg.warmup_s * rate).round() as usize).max(1);
    if n < warm {
        return Err(Error::TooShort { needed: warm, got: n });
    }
    let y = engzee_feature(x);
    let seed = y[..warm].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if seed == 0.0 {
        return PeakList::empty(rate);
    }

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let sign = if sorted[n - 1] - median >= median - sorted[0] { 1.0 } else { -1.0 };

    let (refractory, search) = (ms(cfg.refractory_ms), ms(cfg.search_ms).max(1));
    let lead = LOWPASS.len() + DIFF_LAG + ms(20.0);
    let mut maxima = vec![seed; cfg.history.max(1)];
    let mut slot = 0;
    let mut peaks: Vec<usize> = Vec::new();
    let mut last = 0usize;
    let mut i = 0usize;
    while i < n {
        let since_ms = (i - last) as f64 * 1000.0 / rate;
        let decay = if since_ms <= cfg.decay_start_ms {
            1.0
        } else {
            (1.0 - (1.0 - cfg.decay_floor) * (since_ms - cfg.decay_start_ms) / cfg.decay_span_ms).max(cfg.decay_floor)
        };
        let th = cfg.threshold_fraction * maxima.iter().sum::<f64>() / maxima.len() as f64 * decay;
        if y[i].abs() <= th {
            i += 1;
            continue;
        }
        let end = (i + search).min(n);
        let win = &y[i..end];
        let opposite = -y[i].signum() * cfg.pair_fraction * th;
        let paired = win.iter().any(|v| if opposite > 0.0 { *v > opposite } else { *v < opposite });
        if !paired {
            i += 1;
            continue;
        }
        let lo = i.saturating_sub(lead);
        let peak = (lo..end)
            .max_by(|&a, &b| (sign * x[a]).total_cmp(&(sign * x[b])).then(b.cmp(&a)))
            .expect("non-empty window");
        if peaks.last().is_none_or(|&p| peak >= p + refractory) {
            peaks.push(peak);
            last = peak;
            maxima[slot] = win.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            slot = (slot + 1) % maxima.len();
        }
        i = end.max(peak + refractory).max(i + 1);
    }
    PeakList::new(peaks, rate)
}
