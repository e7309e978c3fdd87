//! Synthetic abdominal recordings with known fetal ground truth.
//!
//! ECG morphology is a sum of five Gaussians (P, Q, R, S, T) per beat on a
//! jittered beat schedule. Four abdominal channels mix the maternal and
//! fetal trains and add baseline drift, 50 Hz interference and white noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::PeakList;
use crate::error::{Error, Result};
use crate::signal::{MultiSignal, Signal};

/// Coincidence radius for [`coincidence_fraction`] and the stress schedule.
pub const COINCIDENCE_MS: f64 = 20.0;

/// RNG streams, one per component, so components can be regenerated alone.
const STREAM_MATERNAL: u64 = 1;
const STREAM_FETAL: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amplitude: f64,
    /// Offset from the R peak.
    pub center_ms: f64,
    /// Gaussian standard deviation.
    pub width_ms: f64,
}

impl Wave {
    const fn new(amplitude: f64, center_ms: f64, width_ms: f64) -> Self {
        Self {
            amplitude,
            center_ms,
            width_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcgTemplateParams {
    /// P, Q, R, S, T in that order.
    pub waves: [Wave; 5],
    pub heart_rate_bpm: f64,
    /// Each RR interval is scaled by `1 + u * jitter / 100`, `u` uniform
    /// in [-1, 1].
    pub rate_jitter_pct: f64,
    /// Time of the first R peak. Random within the first RR interval when
    /// absent.
    #[serde(default)]
    pub first_beat_s: Option<f64>,
}

impl EcgTemplateParams {
    pub fn maternal() -> Self {
        Self {
            waves: [
                Wave::new(0.12, -200.0, 25.0),
                Wave::new(-0.12, -30.0, 8.0),
                Wave::new(1.0, 0.0, 10.0),
                Wave::new(-0.25, 30.0, 10.0),
                Wave::new(0.3, 280.0, 50.0),
            ],
            heart_rate_bpm: 80.0,
            rate_jitter_pct: 2.0,
            first_beat_s: None,
        }
    }

    pub fn fetal() -> Self {
        Self {
            waves: [
                Wave::new(0.08, -110.0, 14.0),
                Wave::new(-0.1, -16.0, 4.0),
                Wave::new(1.0, 0.0, 6.0),
                Wave::new(-0.2, 16.0, 5.0),
                Wave::new(0.15, 150.0, 30.0),
            ],
            heart_rate_bpm: 130.0,
            rate_jitter_pct: 3.0,
            first_beat_s: None,
        }
    }

    pub fn without_jitter(mut self) -> Self {
        self.rate_jitter_pct = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.waves.iter().any(|w| !(w.width_ms > 0.0 && w.width_ms.is_finite())) {
            return Err(Error::Config("wave widths must be positive".into()));
        }
        if self.waves.iter().any(|w| !(w.amplitude.is_finite() && w.center_ms.is_finite())) {
            return Err(Error::Config("wave parameters must be finite".into()));
        }
        let r = self.waves[2].amplitude.abs();
        if self.waves.iter().enumerate().any(|(i, w)| i != 2 && w.amplitude.abs() >= r) {
            return Err(Error::Config("the R wave must have the largest amplitude".into()));
        }
        if !(self.heart_rate_bpm.is_finite() && self.heart_rate_bpm > 0.0) {
            return Err(Error::Config("heart rate must be positive".into()));
        }
        if !(0.0..100.0).contains(&self.rate_jitter_pct) {
            return Err(Error::Config("rate jitter must lie in [0, 100) percent".into()));
        }
        if self.first_beat_s.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
            return Err(Error::Config("first beat time must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub drift_amplitude: f64,
    pub drift_hz: f64,
    pub powerline_amplitude: f64,
    pub powerline_hz: f64,
    pub white_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            drift_amplitude: 0.15,
            drift_hz: 0.25,
            powerline_amplitude: 0.05,
            powerline_hz: 50.0,
            white_sigma: 0.02,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            drift_amplitude: 0.0,
            powerline_amplitude: 0.0,
            white_sigma: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub maternal: EcgTemplateParams,
    pub fetal: EcgTemplateParams,
    /// Fetal amplitude relative to maternal before channel gains.
    pub fetal_ratio: f64,
    /// Per abdominal channel: gain on the maternal and on the fetal train.
    pub mixing: [[f64; 2]; 4],
    pub noise: NoiseSpec,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub seed: u64,
    /// Snap fetal beats onto nearby maternal beats.
    pub phase_lock: bool,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            maternal: EcgTemplateParams::maternal(),
            fetal: EcgTemplateParams::fetal(),
            fetal_ratio: 0.2,
            mixing: [[1.0, 1.0], [0.8, 0.9], [-0.6, 0.7], [0.5, -0.8]],
            noise: NoiseSpec::default(),
            duration_s: 60.0,
            rate_hz: 1000.0,
            seed: 0,
            phase_lock: false,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        self.maternal.validate()?;
        self.fetal.validate()?;
        let finite = |v: f64| v.is_finite();
        if !(finite(self.fetal_ratio) && self.fetal_ratio >= 0.0) {
            return Err(Error::Config("fetal ratio must be non-negative".into()));
        }
        if self.mixing.iter().flatten().any(|g| !finite(*g)) {
            return Err(Error::Config("mixing gains must be finite".into()));
        }
        let n = self.noise;
        if [n.drift_amplitude, n.powerline_amplitude, n.white_sigma, n.drift_hz, n.powerline_hz]
            .iter()
            .any(|v| !(finite(*v) && *v >= 0.0))
        {
            return Err(Error::Config("noise parameters must be non-negative".into()));
        }
        if !(finite(self.rate_hz) && self.rate_hz > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(finite(self.duration_s) && self.duration_s > 0.0) || self.samples() == 0 {
            return Err(Error::Config("duration must cover at least one sample".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub abdominal: MultiSignal,
    /// The fetal train before scaling and mixing.
    pub fetal_truth: Signal,
    pub fetal_peaks: PeakList,
    pub maternal_peaks: PeakList,
    pub spec: MixtureSpec,
    /// Share of fetal peaks within 20 ms of a maternal peak.
    pub coincidence: f64,
}

/// Additive parts of a recording, one row per abdominal channel for the
/// noise terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub maternal: Vec<f64>,
    pub fetal: Vec<f64>,
    pub maternal_peaks: Vec<usize>,
    pub fetal_peaks: Vec<usize>,
    pub drift: Vec<Vec<f64>>,
    pub powerline: Vec<f64>,
    pub white: Vec<Vec<f64>>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// R-peak sample positions for a jittered rhythm over `n` samples.
fn beat_schedule(p: &EcgTemplateParams, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rr = 60.0 / p.heart_rate_bpm;
    let mut t = p.first_beat_s.unwrap_or_else(|| rng.random_range(0.0..rr));
    let mut peaks = Vec::new();
    loop {
        let idx = (t * rate).round() as usize;
        if idx >= n {
            break;
        }
        if peaks.last().is_none_or(|&l| idx > l) {
            peaks.push(idx);
        }
        let u: f64 = if p.rate_jitter_pct > 0.0 { rng.random_range(-1.0..=1.0) } else { 0.0 };
        t += rr * (1.0 + u * p.rate_jitter_pct / 100.0);
    }
    peaks
}

/// Adds one PQRST complex per peak to `out`.
fn render(p: &EcgTemplateParams, peaks: &[usize], rate: f64, scale: f64, out: &mut [f64]) {
    let n = out.len() as isize;
    for &r in peaks {
        for w in &p.waves {
            let center = r as f64 + w.center_ms * rate / 1000.0;
            let sd = w.width_ms * rate / 1000.0;
            let lo = ((center - 6.0 * sd).floor() as isize).max(0);
            let hi = ((center + 6.0 * sd).ceil() as isize).min(n - 1);
            for i in lo..=hi {
                let d = (i as f64 - center) / sd;
                out[i as usize] += scale * w.amplitude * (-0.5 * d * d).exp();
            }
        }
    }
}

/// A single ECG train and its exact R-peak positions.
pub fn gen_template_train(params: &EcgTemplateParams, duration_s: f64, rate_hz: f64, seed: u64) -> Result<(Signal, PeakList)> {
    params.validate()?;
    let n = (duration_s * rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::Config("duration must cover at least one sample".into()));
    }
    let peaks = beat_schedule(params, n, rate_hz, &mut rng(seed, 0));
    let mut x = vec![0.0; n];
    render(params, &peaks, rate_hz, 1.0, &mut x);
    Ok((Signal::new(x, rate_hz)?, PeakList::new(peaks, rate_hz)?))
}

/// Moves fetal beats that fall within 0.35 RR of a maternal beat onto it,
/// give or take up to 10 ms.
fn lock_schedule(fetal: &EcgTemplateParams, maternal: &[usize], n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rr = 60.0 / fetal.heart_rate_bpm;
    let reach = 0.35 * rr * rate;
    let mut t = fetal.first_beat_s.unwrap_or_else(|| rng.random_range(0.0..rr)) * rate;
    let mut peaks: Vec<usize> = Vec::new();
    while (t.round() as usize) < n {
        let nearest = maternal
            .iter()
            .map(|&m| m as f64)
            .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()));
        if let Some(m) = nearest.filter(|m| (m - t).abs() <= reach) {
            t = m + rng.random_range(-10.0..=10.0) * rate / 1000.0;
        }
        let idx = t.round().max(0.0) as usize;
        if idx < n && peaks.last().is_none_or(|&l| idx > l) {
            peaks.push(idx);
        }
        let u: f64 = if fetal.rate_jitter_pct > 0.0 { rng.random_range(-1.0..=1.0) } else { 0.0 };
        t += rr * rate * (1.0 + u * fetal.rate_jitter_pct / 100.0);
    }
    peaks
}

pub fn gen_components(spec: &MixtureSpec) -> Result<Components> {
    spec.validate()?;
    let n = spec.samples();
    let rate = spec.rate_hz;
    let maternal_peaks = beat_schedule(&spec.maternal, n, rate, &mut rng(spec.seed, STREAM_MATERNAL));
    let mut fetal_rng = rng(spec.seed, STREAM_FETAL);
    let fetal_peaks = if spec.phase_lock {
        lock_schedule(&spec.fetal, &maternal_peaks, n, rate, &mut fetal_rng)
    } else {
        beat_schedule(&spec.fetal, n, rate, &mut fetal_rng)
    };
    let mut maternal = vec![0.0; n];
    render(&spec.maternal, &maternal_peaks, rate, 1.0, &mut maternal);
    let mut fetal = vec![0.0; n];
    render(&spec.fetal, &fetal_peaks, rate, 1.0, &mut fetal);

    let mut noise_rng = rng(spec.seed, STREAM_NOISE);
    let tau = 2.0 * std::f64::consts::PI;
    let ns = spec.noise;
    let drift = (0..4)
        .map(|_| {
            let phase = noise_rng.random_range(0.0..tau);
            (0..n)
                .map(|i| ns.drift_amplitude * (tau * ns.drift_hz * i as f64 / rate + phase).sin())
                .collect()
        })
        .collect();
    let phase = noise_rng.random_range(0.0..tau);
    let powerline = (0..n)
        .map(|i| ns.powerline_amplitude * (tau * ns.powerline_hz * i as f64 / rate + phase).sin())
        .collect();
    let white = (0..4)
        .map(|_| {
            if ns.white_sigma == 0.0 {
                return vec![0.0; n];
            }
            let dist = Normal::new(0.0, ns.white_sigma).expect("valid sigma");
            (0..n).map(|_| dist.sample(&mut noise_rng)).collect()
        })
        .collect();
    Ok(Components {
        maternal,
        fetal,
        maternal_peaks,
        fetal_peaks,
        drift,
        powerline,
        white,
    })
}

/// Share of `fetal` peaks lying within `radius_ms` of some maternal peak.
pub fn coincidence_fraction(fetal: &PeakList, maternal: &PeakList, radius_ms: f64) -> f64 {
    if fetal.is_empty() {
        return 0.0;
    }
    let radius = radius_ms * fetal.sample_rate_hz() / 1000.0;
    let m = maternal.indices();
    let hits = fetal
        .indices()
        .iter()
        .filter(|&&f| {
            let k = m.partition_point(|&x| x < f);
            [k.checked_sub(1), Some(k)]
                .into_iter()
                .flatten()
                .filter_map(|j| m.get(j))
                .any(|&x| (x as f64 - f as f64).abs() <= radius)
        })
        .count();
    hits as f64 / fetal.len() as f64
}

pub fn gen_recording(spec: &MixtureSpec) -> Result<SyntheticRecording> {
    let c = gen_components(spec)?;
    let rate = spec.rate_hz;
    let channels = (0..4)
        .map(|ch| {
            let [gm, gf] = spec.mixing[ch];
            let x = (0..c.maternal.len())
                .map(|i| {
                    gm * c.maternal[i]
                        + gf * spec.fetal_ratio * c.fetal[i]
                        + c.drift[ch][i]
                        + c.powerline[i]
                        + c.white[ch][i]
                })
                .collect();
            Signal::new(x, rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let fetal_peaks = PeakList::new(c.fetal_peaks, rate)?;
    let maternal_peaks = PeakList::new(c.maternal_peaks, rate)?;
    Ok(SyntheticRecording {
        abdominal: MultiSignal::new(channels)?,
        fetal_truth: Signal::new(c.fetal, rate)?,
        coincidence: coincidence_fraction(&fetal_peaks, &maternal_peaks, COINCIDENCE_MS),
        fetal_peaks,
        maternal_peaks,
        spec: spec.clone(),
    })
}

/// [`gen_recording`] with the fetal rhythm phase-locked to the maternal
/// one, so that many fetal R peaks coincide with maternal ones.
pub fn gen_coincidence_stress(spec: &MixtureSpec) -> Result<SyntheticRecording> {
    gen_recording(&MixtureSpec {
        phase_lock: true,
        ..spec.clone()
    })
}

/// Member `seed` of the standard synthetic benchmark: default mixture
/// with the maternal rate cycling through 70-88 bpm and the fetal rate
/// through 125-153 bpm.
pub fn suite_spec(seed: u64, duration_s: f64) -> MixtureSpec {
    let mut spec = MixtureSpec {
        duration_s,
        seed,
        ..MixtureSpec::default()
    };
    spec.maternal.heart_rate_bpm = 70.0 + (seed % 4) as f64 * 6.0;
    spec.fetal.heart_rate_bpm = 125.0 + (seed % 5) as f64 * 7.0;
    spec
}
