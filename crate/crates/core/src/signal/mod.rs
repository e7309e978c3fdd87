//! Signal containers and the numeric primitives shared by every stage of the
//! pipeline: resampling, range normalization, correlation, power and the
//! one-sided periodogram.

mod resample;
mod spectral;
mod stats;

pub use resample::resample;
pub use spectral::{mean_power, periodogram, psd};
pub(crate) use spectral::one_sided_weight;
pub use stats::{minmax_normalize, pearson_corr, Normalized};

use crate::error::{Error, Result};

/// One channel of uniformly sampled amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same sample rate, new samples. Used by stages that keep the time base.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz)
    }
}

/// Several simultaneously recorded channels sharing length and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignal {
    channels: Vec<Signal>,
}

impl MultiSignal {
    pub fn new(channels: Vec<Signal>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("a multi-channel signal needs at least one channel"))?;
        let (len, rate) = (first.len(), first.sample_rate_hz());
        for (i, ch) in channels.iter().enumerate() {
            if ch.len() != len || ch.sample_rate_hz() != rate {
                return Err(Error::shape(format!(
                    "channel {i} has {} samples at {} Hz, expected {len} at {rate} Hz",
                    ch.len(),
                    ch.sample_rate_hz()
                )));
            }
        }
        Ok(Self { channels })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        let channels = rows
            .into_iter()
            .map(|r| Signal::new(r, sample_rate_hz))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    pub fn channels(&self) -> &[Signal] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.channels[0].sample_rate_hz()
    }
}

/// `N` windows of `M` samples over `C` channels.
///
/// The logical shape is `N x M x C`. Storage is segment-major and then
/// channel-major (`[n][c][m]`), which is the layout the network consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBatch {
    data: Vec<f64>,
    n: usize,
    m: usize,
    c: usize,
    sample_rate_hz: f64,
    normalized: bool,
    /// Start sample of every segment in the conditioned record.
    starts: Vec<usize>,
    /// Per segment and channel: set when normalization met a constant window.
    degenerate: Vec<bool>,
}

impl SegmentBatch {
    pub fn new(
        data: Vec<f64>,
        (n, m, c): (usize, usize, usize),
        sample_rate_hz: f64,
        normalized: bool,
        starts: Vec<usize>,
        degenerate: Vec<bool>,
    ) -> Result<Self> {
        if data.len() != n * m * c {
            return Err(Error::shape(format!(
                "segment data holds {} values, expected {n}x{m}x{c}",
                data.len()
            )));
        }
        if starts.len() != n || degenerate.len() != n * c {
            return Err(Error::shape("segment metadata does not match segment count"));
        }
        if m == 0 || c == 0 {
            return Err(Error::shape("segments need at least one sample and one channel"));
        }
        Ok(Self {
            data,
            n,
            m,
            c,
            sample_rate_hz,
            normalized,
            starts,
            degenerate,
        })
    }

    /// `(N, M, C)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.c)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn segment_len(&self) -> usize {
        self.m
    }

    pub fn channel_count(&self) -> usize {
        self.c
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn is_degenerate(&self, segment: usize, channel: usize) -> bool {
        self.degenerate[segment * self.c + channel]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, segment: usize, sample: usize, channel: usize) -> f64 {
        self.data[(segment * self.c + channel) * self.m + sample]
    }

    /// All channels of one segment, `[c][m]` contiguous.
    pub fn segment(&self, i: usize) -> &[f64] {
        let stride = self.m * self.c;
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn channel(&self, segment: usize, channel: usize) -> &[f64] {
        let start = (segment * self.c + channel) * self.m;
        &self.data[start..start + self.m]
    }

    /// A new batch holding the listed segments in the listed order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let stride = self.m * self.c;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut starts = Vec::with_capacity(indices.len());
        let mut degenerate = Vec::with_capacity(indices.len() * self.c);
        for &i in indices {
            data.extend_from_slice(self.segment(i));
            starts.push(self.starts[i]);
            degenerate.extend_from_slice(&self.degenerate[i * self.c..(i + 1) * self.c]);
        }
        Self {
            data,
            n: indices.len(),
            m: self.m,
            c: self.c,
            sample_rate_hz: self.sample_rate_hz,
            normalized: self.normalized,
            starts,
            degenerate,
        }
    }

    /// Concatenates batches with matching segment length, channel count and
    /// rate. Start offsets are kept as-is.
    pub fn concat(parts: &[SegmentBatch]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.m != first.m || p.c != first.c || p.sample_rate_hz != first.sample_rate_hz {
                return Err(Error::shape("cannot concatenate batches of different layout"));
            }
            out.data.extend_from_slice(&p.data);
            out.starts.extend_from_slice(&p.starts);
            out.degenerate.extend_from_slice(&p.degenerate);
            out.n += p.n;
            out.normalized &= p.normalized;
        }
        Ok(out)
    }

    /// Overlap-add the segments back onto a continuous time base, averaging
    /// where windows overlap. Channel `channel` only.
    pub fn stitch(&self, channel: usize) -> Result<Signal> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        let origin = *self.starts.iter().min().unwrap();
        let end = self.starts.iter().max().unwrap() + self.m;
        let mut acc = vec![0.0; end - origin];
        let mut hits = vec![0u32; end - origin];
        for i in 0..self.n {
            let off = self.starts[i] - origin;
            for (k, v) in self.channel(i, channel).iter().enumerate() {
                acc[off + k] += v;
                hits[off + k] += 1;
            }
        }
        let samples = acc
            .into_iter()
            .zip(hits)
            .map(|(a, h)| if h == 0 { 0.0 } else { a / h as f64 })
            .collect();
        Signal::new(samples, self.sample_rate_hz)
    }
}
