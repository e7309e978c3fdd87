use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::peaks::PeakList;
use crate::error::{Error, Result};

pub const MIN_HRV_PEAKS: usize = 3;

/// Successive-difference threshold for NN50.
pub const NN50_MS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvReport {
    pub mean_rr_ms: f64,
    pub mean_hr_bpm: f64,
    pub std_hr_bpm: f64,
    pub rmssd_ms: f64,
    pub sdnn_ms: f64,
    /// 0 when RMSSD is 0.
    pub sdnn_over_rmssd: f64,
    pub nn50: usize,
    /// NN50 as a percent of the RR interval count.
    pub pnn50: f64,
}

impl HrvReport {
    pub const FIELDS: [&'static str; 8] = [
        "mean_rr_ms",
        "mean_hr_bpm",
        "std_hr_bpm",
        "rmssd_ms",
        "sdnn_ms",
        "sdnn_over_rmssd",
        "nn50",
        "pnn50",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.mean_rr_ms,
            self.mean_hr_bpm,
            self.std_hr_bpm,
            self.rmssd_ms,
            self.sdnn_ms,
            self.sdnn_over_rmssd,
            self.nn50 as f64,
            self.pnn50,
        ]
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in Self::FIELDS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Time-domain HRV statistics of a peak sequence.
///
/// Heart rate is averaged per interval (`60000 / RR_i`), not derived from
/// the mean interval. RMSSD averages over the successive differences,
/// pNN50 divides by the number of RR intervals.
pub fn hrv_report(peaks: &PeakList) -> Result<HrvReport> {
    if peaks.len() < MIN_HRV_PEAKS {
        return Err(Error::TooFewPeaks {
            needed: MIN_HRV_PEAKS,
            got: peaks.len(),
        });
    }
    let rr = peaks.rr_ms();
    let hr: Vec<f64> = rr.iter().map(|r| 60_000.0 / r).collect();
    let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let sdnn = sample_std(&rr);
    let nn50 = diffs.iter().filter(|d| d.abs() > NN50_MS).count();
    Ok(HrvReport {
        mean_rr_ms: mean(&rr),
        mean_hr_bpm: mean(&hr),
        std_hr_bpm: sample_std(&hr),
        rmssd_ms: rmssd,
        sdnn_ms: sdnn,
        sdnn_over_rmssd: if rmssd > 0.0 { sdnn / rmssd } else { 0.0 },
        nn50,
        pnn50: 100.0 * nn50 as f64 / rr.len() as f64,
    })
}

/// Percent error of each metric, `|truth - extracted| / truth * 100`, in
/// [`HrvReport::FIELDS`] order. `None` where the truth value is 0.
pub fn compare_hrv(truth: &HrvReport, extracted: &HrvReport) -> [Option<f64>; 8] {
    let (t, e) = (truth.values(), extracted.values());
    std::array::from_fn(|i| {
        if t[i] == 0.0 {
            None
        } else {
            Some((t[i] - e[i]).abs() / t[i].abs() * 100.0)
        }
    })
}
