use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{pearson_corr, periodogram, SegmentBatch};

/// Floor on the input-spectrum correlation in the spectral-correlation
/// denominator, as in the training loss.
pub const SPEC_DENOM_FLOOR: f64 = 0.05;

/// Extraction quality of one segment, or a mean over segments. Undefined
/// values (flat segments, flat spectra) are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub pcc: f64,
    pub spec_corr: f64,
    pub spec_rmse: f64,
}

impl SegmentMetrics {
    pub const CSV_COLUMNS: &'static str = "MAE,RMSE,PCC,SpecCorr,SpecRMSE";

    pub fn values(&self) -> [f64; 5] {
        [self.mae, self.rmse, self.pcc, self.spec_corr, self.spec_rmse]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            mae: v[0],
            rmse: v[1],
            pcc: v[2],
            spec_corr: v[3],
            spec_rmse: v[4],
        }
    }

    pub fn is_complete(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Field-wise mean over the finite entries.
    pub fn mean_of(items: &[SegmentMetrics]) -> Self {
        Self::from_values(std::array::from_fn(|k| {
            let finite: Vec<f64> = items.iter().map(|m| m.values()[k]).filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            }
        }))
    }

    fn csv_fields(&self) -> String {
        self.values().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_segment: Vec<SegmentMetrics>,
    /// Segments with at least one undefined metric.
    pub flagged: Vec<usize>,
    pub mean: SegmentMetrics,
}

impl EvalReport {
    pub fn mae(&self) -> f64 {
        self.mean.mae
    }

    pub fn rmse(&self) -> f64 {
        self.mean.rmse
    }

    pub fn pcc(&self) -> f64 {
        self.mean.pcc
    }

    pub fn spec_corr(&self) -> f64 {
        self.mean.spec_corr
    }

    pub fn spec_rmse(&self) -> f64 {
        self.mean.spec_rmse
    }

    /// `key=value` lines of the mean metrics.
    pub fn to_kv(&self) -> String {
        let m = &self.mean;
        format!(
            "mae={}\nrmse={}\npcc={}\nspec_corr={}\nspec_rmse={}\nsegments={}\nflagged={}\n",
            m.mae,
            m.rmse,
            m.pcc,
            m.spec_corr,
            m.spec_rmse,
            self.per_segment.len(),
            self.flagged.len()
        )
    }
}

/// One row per fold plus a final `mean` row averaging the fold means.
pub fn fold_table_csv(folds: &[(String, EvalReport)]) -> String {
    let mut s = format!("fold,{}\n", SegmentMetrics::CSV_COLUMNS);
    for (label, r) in folds {
        let _ = writeln!(s, "{label},{}", r.mean.csv_fields());
    }
    let means: Vec<SegmentMetrics> = folds.iter().map(|(_, r)| r.mean).collect();
    let _ = writeln!(s, "mean,{}", SegmentMetrics::mean_of(&means).csv_fields());
    s
}

fn mean_channel_psd(batch: &SegmentBatch, segment: usize) -> Result<Vec<f64>> {
    let c = batch.channel_count();
    let mut acc = vec![0.0; batch.segment_len() / 2 + 1];
    for ch in 0..c {
        for (a, v) in acc.iter_mut().zip(periodogram(batch.channel(segment, ch))?) {
            *a += v / c as f64;
        }
    }
    Ok(acc)
}

fn rms(x: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

/// Metrics of one segment pair. `input_psd`, when given, is the reference
/// spectrum of the abdominal input for the spectral correlation.
pub fn segment_metrics(truth: &[f64], predicted: &[f64], input_psd: Option<&[f64]>) -> Result<SegmentMetrics> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::shape(format!(
            "segments of {} and {} samples",
            truth.len(),
            predicted.len()
        )));
    }
    let n = truth.len() as f64;
    let mae = truth.iter().zip(predicted).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let rmse = rms(truth.iter().zip(predicted).map(|(a, b)| a - b));
    let pcc = pearson_corr(truth, predicted).unwrap_or(f64::NAN);

    let pt = periodogram(truth)?;
    let pp = periodogram(predicted)?;
    let spec_rho = pearson_corr(&pt, &pp).unwrap_or(f64::NAN);
    let denom = match input_psd {
        Some(px) => match pearson_corr(&pt, px) {
            Ok(r) => r.max(SPEC_DENOM_FLOOR),
            Err(_) => f64::NAN,
        },
        None => 1.0,
    };
    let spec_corr = 1.0 - (1.0 - spec_rho) / denom;
    let pred_rms = rms(pp.iter().copied());
    let spec_rmse = if pred_rms > 0.0 {
        rms(pt.iter().zip(&pp).map(|(a, b)| a - b)) / pred_rms
    } else if pt == pp {
        0.0
    } else {
        f64::NAN
    };
    Ok(SegmentMetrics {
        mae,
        rmse,
        pcc,
        spec_corr,
        spec_rmse,
    })
}

/// Compares extracted segments against ground truth, channel by channel.
///
/// With `input`, the spectral correlation is normalized by the correlation
/// between the truth spectrum and the input's mean channel spectrum;
/// without it the normalizer is 1.
pub fn eval_extraction(truth: &SegmentBatch, predicted: &SegmentBatch, input: Option<&SegmentBatch>) -> Result<EvalReport> {
    if truth.shape() != predicted.shape() {
        return Err(Error::shape(format!(
            "truth {:?} vs predicted {:?}",
            truth.shape(),
            predicted.shape()
        )));
    }
    if let Some(x) = input {
        if x.len() != truth.len() || x.segment_len() != truth.segment_len() {
            return Err(Error::shape(format!("input {:?} vs truth {:?}", x.shape(), truth.shape())));
        }
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_segment = Vec::with_capacity(truth.len() * truth.channel_count());
    let mut flagged = Vec::new();
    for i in 0..truth.len() {
        let input_psd = input.map(|x| mean_channel_psd(x, i)).transpose()?;
        for ch in 0..truth.channel_count() {
            let m = segment_metrics(truth.channel(i, ch), predicted.channel(i, ch), input_psd.as_deref())?;
            if !m.is_complete() {
                flagged.push(per_segment.len());
            }
            per_segment.push(m);
        }
    }
    let mean = SegmentMetrics::mean_of(&per_segment);
    Ok(EvalReport {
        per_segment,
        flagged,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(data: Vec<f64>, n: usize, m: usize) -> SegmentBatch {
        SegmentBatch::new(data, (n, m, 1), 512.0, true, (0..n).map(|i| i * m).collect(), vec![false; n]).unwrap()
    }

    #[test]
    fn identical_prediction_hits_fixed_points() {
        let data: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let t = batch(data.clone(), 2, 32);
        let r = eval_extraction(&t, &t, None).unwrap();
        assert_eq!(r.mean.values(), [0.0, 0.0, 1.0, 1.0, 0.0]);
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn hand_example() {
        let truth = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let pred = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let m = segment_metrics(&truth, &pred, None).unwrap();
        assert_eq!(m.mae, 0.25);
        assert_eq!(m.rmse, 0.5);
    }

    #[test]
    fn flat_prediction_is_flagged() {
        let t = batch((0..32).map(|i| (i % 5) as f64 / 4.0).collect(), 1, 32);
        let p = batch(vec![0.5; 32], 1, 32);
        let r = eval_extraction(&t, &p, None).unwrap();
        assert_eq!(r.flagged, vec![0]);
        assert!(r.mean.pcc.is_nan());
        assert!(r.mean.mae.is_finite());
    }

    #[test]
    fn shape_mismatch() {
        let a = batch(vec![0.0; 64], 2, 32);
        let b = batch(vec![0.0; 32], 1, 32);
        assert!(matches!(eval_extraction(&a, &b, None), Err(Error::Shape(_))));
    }

    #[test]
    fn fold_table_has_mean_row() {
        let t = batch((0..32).map(|i| (i % 5) as f64).collect(), 1, 32);
        let r = eval_extraction(&t, &t, None).unwrap();
        let csv = fold_table_csv(&[("1".into(), r.clone()), ("2".into(), r)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "fold,MAE,RMSE,PCC,SpecCorr,SpecRMSE");
        assert_eq!(lines[3], "mean,0,0,1,1,0");
    }
}
