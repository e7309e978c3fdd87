//! Extraction metrics, fQRS detection and scoring, and heart-rate
//! variability.

mod engzee;
mod hrv;
mod metrics;
mod peaks;

pub use engzee::{engzee_detect, engzee_detect_with, engzee_feature, EngZeeConfig};
pub use hrv::{compare_hrv, hrv_report, HrvReport, MIN_HRV_PEAKS, NN50_MS};
pub use metrics::{eval_extraction, fold_table_csv, segment_metrics, EvalReport, SegmentMetrics, SPEC_DENOM_FLOOR};
pub use peaks::{match_peaks, match_peaks_in, DetectionScore, PeakList, DEFAULT_TOLERANCE_MS, TN_WINDOW_S};
