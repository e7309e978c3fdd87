//! Conditioning chain from raw recordings to normalized segment batches:
//! resample, 50 Hz notch, 0.1-70 Hz band-pass (both zero-phase), polynomial
//! baseline removal, moving-average smoothing, then overlapping windows that
//! are detrended and range-normalized one by one.

mod baseline;
mod butterworth;
mod filtering;

pub use baseline::{detrend_linear, fit_baseline, remove_baseline_poly};
pub use butterworth::{butterworth_coeffs, Biquad, FilterSpec, SosFilter};
pub use filtering::{edge_len, filtfilt, moving_average, one_pass_filter, zero_phase_filter};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{minmax_normalize, resample, MultiSignal, SegmentBatch, Signal};

/// Abdominal recordings carry this many channels.
pub const MECG_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_rate_hz: f64,
    pub notch_center_hz: f64,
    /// Full width of the band-stop around `notch_center_hz`.
    pub notch_width_hz: f64,
    pub notch_order: usize,
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub baseline_poly_order_mecg: usize,
    pub baseline_poly_order_fecg: usize,
    pub ma_window_mecg: usize,
    pub ma_window_fecg: usize,
    pub segment_len: usize,
    pub segment_overlap: usize,
    /// Samples dropped from the head and the tail of the conditioned record.
    pub edge_trim: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: 512.0,
            notch_center_hz: 50.0,
            notch_width_hz: 2.0,
            notch_order: 4,
            bandpass_low_hz: 0.1,
            bandpass_high_hz: 70.0,
            bandpass_order: 6,
            baseline_poly_order_mecg: 8,
            baseline_poly_order_fecg: 36,
            ma_window_mecg: 4,
            ma_window_fecg: 10,
            segment_len: 512,
            segment_overlap: 256,
            edge_trim: 512,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("notch_order", self.notch_order),
            ("bandpass_order", self.bandpass_order),
            ("baseline_poly_order_mecg", self.baseline_poly_order_mecg),
            ("baseline_poly_order_fecg", self.baseline_poly_order_fecg),
            ("ma_window_mecg", self.ma_window_mecg),
            ("ma_window_fecg", self.ma_window_fecg),
            ("segment_len", self.segment_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.segment_overlap >= self.segment_len {
            return Err(Error::Config(
                "segment_overlap must be smaller than segment_len".into(),
            ));
        }
        self.bandstop().validate(self.target_rate_hz)?;
        self.bandpass().validate(self.target_rate_hz)?;
        Ok(())
    }

    pub fn bandstop(&self) -> FilterSpec {
        FilterSpec::Bandstop {
            low_hz: self.notch_center_hz - self.notch_width_hz / 2.0,
            high_hz: self.notch_center_hz + self.notch_width_hz / 2.0,
            order: self.notch_order,
        }
    }

    pub fn bandpass(&self) -> FilterSpec {
        FilterSpec::Bandpass {
            low_hz: self.bandpass_low_hz,
            high_hz: self.bandpass_high_hz,
            order: self.bandpass_order,
        }
    }

    pub fn stride(&self) -> usize {
        self.segment_len - self.segment_overlap
    }

    /// Number of windows a conditioned record of `len` samples yields.
    pub fn segment_count(&self, len: usize) -> usize {
        let usable = len.saturating_sub(2 * self.edge_trim);
        if usable < self.segment_len {
            0
        } else {
            (usable - self.segment_len) / self.stride() + 1
        }
    }
}

/// Which conditioning constants to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Maternal,
    Fetal,
}

/// Resample, notch, band-pass, baseline and smoothing stages for one channel.
pub fn condition(s: &Signal, cfg: &PreprocessConfig, domain: Domain) -> Result<Signal> {
    let (poly, window) = match domain {
        Domain::Maternal => (cfg.baseline_poly_order_mecg, cfg.ma_window_mecg),
        Domain::Fetal => (cfg.baseline_poly_order_fecg, cfg.ma_window_fecg),
    };
    let s = resample(s, cfg.target_rate_hz)?;
    let s = zero_phase_filter(&s, &cfg.bandstop())?;
    let s = zero_phase_filter(&s, &cfg.bandpass())?;
    let s = remove_baseline_poly(&s, poly)?;
    moving_average(&s, window)
}

/// Windows a single channel into a normalized `(N, M, 1)` batch.
pub fn segment(s: &Signal, cfg: &PreprocessConfig) -> Result<SegmentBatch> {
    segment_channels(std::slice::from_ref(s), cfg)
}

/// Windows all channels on a shared time base.
///
/// The record head and tail (`edge_trim` samples each) are discarded first.
/// Every window is then linearly detrended and range-normalized per channel.
pub fn segment_channels(channels: &[Signal], cfg: &PreprocessConfig) -> Result<SegmentBatch> {
    let first = channels.first().ok_or(Error::EmptySignal)?;
    let len = first.len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::shape("channels differ in length"));
    }
    if cfg.segment_overlap >= cfg.segment_len {
        return Err(Error::Config(
            "segment_overlap must be smaller than segment_len".into(),
        ));
    }
    let n = cfg.segment_count(len);
    if n == 0 {
        return Err(Error::TooShort {
            needed: cfg.segment_len + 2 * cfg.edge_trim,
            got: len,
        });
    }
    let (m, c) = (cfg.segment_len, channels.len());
    let starts: Vec<usize> = (0..n).map(|i| cfg.edge_trim + i * cfg.stride()).collect();
    let windows: Vec<(Vec<f64>, bool)> = starts
        .iter()
        .flat_map(|&start| channels.iter().map(move |ch| (start, ch)))
        .map(|(start, ch)| {
            let detrended = detrend_linear(&ch.samples()[start..start + m]);
            minmax_normalize(&detrended).map(|r| (r.values, r.degenerate))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(n * m * c);
    let mut degenerate = Vec::with_capacity(n * c);
    for (values, flag) in windows {
        data.extend(values);
        degenerate.push(flag);
    }
    SegmentBatch::new(data, (n, m, c), first.sample_rate_hz(), true, starts, degenerate)
}

/// Full chain for a four-channel abdominal recording; output is `(N, M, 4)`.
pub fn preprocess_mecg(m: &MultiSignal, cfg: &PreprocessConfig) -> Result<SegmentBatch> {
    if m.channel_count() != MECG_CHANNELS {
        return Err(Error::shape(format!(
            "abdominal recording has {} channels, expected {MECG_CHANNELS}",
            m.channel_count()
        )));
    }
    cfg.validate()?;
    let conditioned = m
        .channels()
        .par_iter()
        .map(|ch| condition(ch, cfg, Domain::Maternal))
        .collect::<Result<Vec<_>>>()?;
    segment_channels(&conditioned, cfg)
}

/// Full chain for a single-channel scalp fECG; output is `(N, M, 1)`.
pub fn preprocess_fecg(f: &Signal, cfg: &PreprocessConfig) -> Result<SegmentBatch> {
    cfg.validate()?;
    segment(&condition(f, cfg, Domain::Fetal)?, cfg)
}

/// Both chains for a simultaneous recording, trimmed to a common segment
/// count so that segment `i` of each batch covers the same time span.
pub fn preprocess_pair(
    m: &MultiSignal,
    f: &Signal,
    cfg: &PreprocessConfig,
) -> Result<(SegmentBatch, SegmentBatch)> {
    let xm = preprocess_mecg(m, cfg)?;
    let xf = preprocess_fecg(f, cfg)?;
    let n = xm.len().min(xf.len());
    let keep: Vec<usize> = (0..n).collect();
    Ok((xm.select(&keep), xf.select(&keep)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_counts() {
        let cfg = PreprocessConfig {
            segment_overlap: 0,
            edge_trim: 0,
            ..Default::default()
        };
        let s = Signal::new((0..5120).map(|i| (i as f64 * 0.05).sin()).collect(), 512.0).unwrap();
        let b = segment(&s, &cfg).unwrap();
        assert_eq!(b.shape(), (10, 512, 1));

        let five_min = PreprocessConfig {
            segment_overlap: 0,
            edge_trim: 512,
            ..Default::default()
        };
        assert_eq!(five_min.segment_count(153_600), 298);
    }

    #[test]
    fn segments_are_normalized() {
        let cfg = PreprocessConfig::default();
        let s = Signal::new((0..6000).map(|i| (i as f64 * 0.031).sin() * (i as f64).sqrt()).collect(), 512.0).unwrap();
        let b = segment(&s, &cfg).unwrap();
        for i in 0..b.len() {
            let ch = b.channel(i, 0);
            let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
        assert_eq!(b.starts()[1] - b.starts()[0], 256);
    }

    #[test]
    fn short_record_rejected() {
        let s = Signal::new(vec![0.5; 1500], 512.0).unwrap();
        assert!(matches!(
            segment(&s, &PreprocessConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn flat_windows_are_flagged() {
        let cfg = PreprocessConfig {
            edge_trim: 0,
            segment_overlap: 0,
            ..Default::default()
        };
        let s = Signal::new(vec![3.0; 1024], 512.0).unwrap();
        let b = segment(&s, &cfg).unwrap();
        assert!(b.degenerate().iter().all(|&d| d));
        assert!(b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let bad = PreprocessConfig {
            segment_overlap: 512,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            bandpass_high_hz: 300.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
