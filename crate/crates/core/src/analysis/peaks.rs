use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for counting a detected R peak as correct.
pub const DEFAULT_TOLERANCE_MS: f64 = 31.25;

/// Length of the decision windows used to count true negatives.
pub const TN_WINDOW_S: f64 = 1.0;

/// Sorted R-peak sample positions in a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    indices: Vec<usize>,
    sample_rate_hz: f64,
}

impl PeakList {
    pub fn new(indices: Vec<usize>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate {sample_rate_hz} must be positive")));
        }
        if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("peak indices not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { indices, sample_rate_hz })
    }

    pub fn empty(sample_rate_hz: f64) -> Result<Self> {
        Self::new(Vec::new(), sample_rate_hz)
    }

    /// Fails if any peak lies at or beyond `len`.
    pub fn check_bounds(&self, len: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= len => Err(Error::invalid(format!("peak {last} outside a record of {len} samples"))),
            _ => Ok(()),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn times_ms(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 * 1000.0 / self.sample_rate_hz).collect()
    }

    /// Successive RR intervals in milliseconds.
    pub fn rr_ms(&self) -> Vec<f64> {
        self.indices
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * 1000.0 / self.sample_rate_hz)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl DetectionScore {
    /// Derives the rates from counts. Empty denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        }
    }
}

/// Greedy one-to-one matching within `tolerance_ms`, closest pairs first.
/// True negatives are 1 s windows of the record (up to the last peak of
/// either list) that contain neither a true nor a detected peak.
pub fn match_peaks(detected: &PeakList, truth: &PeakList, tolerance_ms: f64) -> Result<DetectionScore> {
    let end = detected.indices.last().max(truth.indices.last()).map_or(0, |&i| i + 1);
    match_peaks_in(detected, truth, tolerance_ms, end)
}

/// [`match_peaks`] over a record of `record_len` samples.
pub fn match_peaks_in(
    detected: &PeakList,
    truth: &PeakList,
    tolerance_ms: f64,
    record_len: usize,
) -> Result<DetectionScore> {
    let rate = truth.sample_rate_hz;
    if (detected.sample_rate_hz - rate).abs() > 1e-9 * rate {
        return Err(Error::invalid(format!(
            "peak lists at {} Hz and {rate} Hz",
            detected.sample_rate_hz
        )));
    }
    if !(tolerance_ms.is_finite() && tolerance_ms >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    detected.check_bounds(record_len)?;
    truth.check_bounds(record_len)?;

    let tol = tolerance_ms * rate / 1000.0 + 1e-9;
    let (d, t) = (&detected.indices, &truth.indices);
    let mut pairs = Vec::new();
    let mut lo = 0;
    for (i, &di) in d.iter().enumerate() {
        while lo < t.len() && (t[lo] as f64) < di as f64 - tol {
            lo += 1;
        }
        for (j, &tj) in t.iter().enumerate().skip(lo) {
            if tj as f64 > di as f64 + tol {
                break;
            }
            pairs.push((di.abs_diff(tj), di + tj, i, j));
        }
    }
    // Distance, then position; both keys are symmetric in the two lists.
    pairs.sort_unstable_by_key(|&(dist, sum, _, _)| (dist, sum));
    let (mut used_d, mut used_t) = (vec![false; d.len()], vec![false; t.len()]);
    let mut tp = 0;
    for (_, _, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }

    let window = ((TN_WINDOW_S * rate).round() as usize).max(1);
    let n_windows = record_len.div_ceil(window);
    let mut busy = vec![false; n_windows];
    for &i in d.iter().chain(t) {
        busy[i / window] = true;
    }
    let tn = busy.iter().filter(|b| !**b).count();
    Ok(DetectionScore::from_counts(tp, d.len() - tp, t.len() - tp, tn))
}
