//! Butterworth band-pass / band-stop design as cascaded second-order sections.
//!
//! Analog prototype poles are frequency-transformed (low-pass to band-pass or
//! band-stop), mapped through the bilinear transform with pre-warped band
//! edges, then paired into biquads. `order` is the prototype order, so a
//! band filter of order `n` has `2n` poles and `n` sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A filter stage of the conditioning chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    Bandpass { low_hz: f64, high_hz: f64, order: usize },
    Bandstop { low_hz: f64, high_hz: f64, order: usize },
    MovingAverage { window: usize },
}

impl FilterSpec {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        match *self {
            FilterSpec::Bandpass {
                low_hz,
                high_hz,
                order,
            }
            | FilterSpec::Bandstop {
                low_hz,
                high_hz,
                order,
            } => {
                if !(low_hz > 0.0 && low_hz < high_hz && high_hz < rate_hz / 2.0) {
                    return Err(Error::InvalidBand {
                        low_hz,
                        high_hz,
                        rate_hz,
                    });
                }
                if order == 0 {
                    return Err(Error::invalid("filter order must be positive"));
                }
                if matches!(self, FilterSpec::Bandstop { .. }) && order % 2 != 0 {
                    return Err(Error::invalid("band-stop order must be even"));
                }
                Ok(())
            }
            FilterSpec::MovingAverage { window } => {
                if window == 0 {
                    Err(Error::invalid("moving-average window must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// One biquad, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2)
            / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Steady-state transposed direct-form II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[2] * g]
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, rate_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / rate_hz);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        20.0 * self.response(freq_hz, rate_hz).norm().log10()
    }

    /// Causal filtering from zero initial state.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let zeros = vec![[0.0; 2]; self.sections.len()];
        self.apply_from(x, zeros)
    }

    /// Causal filtering from the given per-section state.
    pub(crate) fn apply_from(&self, x: &[f64], mut state: Vec<[f64; 2]>) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z[0];
                z[0] = s.b[1] * input - s.a[1] * out + z[1];
                z[1] = s.b[2] * input - s.a[2] * out;
                *v = out;
            }
        }
        y
    }

    /// Largest pole magnitude over all sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| {
                let (a1, a2) = (s.a[1], s.a[2]);
                let disc = a1 * a1 - 4.0 * a2;
                if disc < 0.0 {
                    a2.sqrt()
                } else {
                    let root = disc.sqrt();
                    ((-a1 + root) / 2.0).abs().max(((-a1 - root) / 2.0).abs())
                }
            })
            .fold(0.0, f64::max)
    }

    /// Per-section state that makes the cascade start in steady state for
    /// a constant input of 1.
    pub(crate) fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let zi = s.step_state();
                let out = [zi[0] * scale, zi[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }
}

/// Designs the Butterworth cascade for a band-pass or band-stop spec.
pub fn butterworth_coeffs(spec: &FilterSpec, rate_hz: f64) -> Result<SosFilter> {
    spec.validate(rate_hz)?;
    let (low, high, order, stop) = match *spec {
        FilterSpec::Bandpass {
            low_hz,
            high_hz,
            order,
        } => (low_hz, high_hz, order, false),
        FilterSpec::Bandstop {
            low_hz,
            high_hz,
            order,
        } => (low_hz, high_hz, order, true),
        FilterSpec::MovingAverage { .. } => {
            return Err(Error::invalid("a moving average has no recursive coefficients"))
        }
    };

    let fs2 = 2.0 * rate_hz;
    let w1 = fs2 * (PI * low / rate_hz).tan();
    let w2 = fs2 * (PI * high / rate_hz).tan();
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let mut poles = Vec::with_capacity(2 * order);
    for &p in &proto {
        let base = if stop { (bw / 2.0) / p } else { p * (bw / 2.0) };
        let root = (base * base - w0 * w0).sqrt();
        poles.push(base + root);
        poles.push(base - root);
    }
    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let poles: Vec<Complex64> = poles.into_iter().map(bilinear).collect();

    // Every section carries one zero pair: {+1, -1} for band-pass (analog
    // zeros at DC and infinity), the notch pair e^{+-j w} for band-stop.
    let numerator = if stop {
        let zn = bilinear(Complex64::new(0.0, w0));
        [1.0, -2.0 * zn.re, zn.norm_sqr()]
    } else {
        [1.0, 0.0, -1.0]
    };

    let mut sections: Vec<Biquad> = pair_poles(&poles)
        .into_iter()
        .map(|a| Biquad { b: numerator, a })
        .collect();

    // Unit gain at the passband reference: band centre or DC.
    let ref_hz = if stop {
        0.0
    } else {
        rate_hz / PI * (w0 / fs2).atan()
    };
    let g = SosFilter {
        sections: sections.clone(),
    }
    .response(ref_hz, rate_hz)
    .norm();
    let per_section = g.powf(-1.0 / sections.len() as f64);
    for s in &mut sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    Ok(SosFilter { sections })
}

/// Groups poles into real second-order denominators: conjugate pairs first,
/// leftover real poles two at a time.
fn pair_poles(poles: &[Complex64]) -> Vec<[f64; 3]> {
    const TOL: f64 = 1e-12;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > TOL {
            out.push([1.0, -2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= TOL {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    for chunk in reals.chunks(2) {
        match *chunk {
            [r1, r2] => out.push([1.0, -(r1 + r2), r1 * r2]),
            [r] => out.push([1.0, -r, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandpass() -> SosFilter {
        butterworth_coeffs(
            &FilterSpec::Bandpass {
                low_hz: 0.1,
                high_hz: 70.0,
                order: 6,
            },
            512.0,
        )
        .unwrap()
    }

    #[test]
    fn bandpass_response_on_grid() {
        let f = bandpass();
        assert_eq!(f.sections.len(), 6);
        assert!(f.magnitude_db(35.0, 512.0).abs() < 0.5);
        assert!(f.magnitude_db(120.0, 512.0) < -30.0);
        // -3 dB at both edges
        assert!((f.magnitude_db(70.0, 512.0) + 3.0103).abs() < 1e-3);
        assert!((f.magnitude_db(0.1, 512.0) + 3.0103).abs() < 1e-3);
    }

    #[test]
    fn bandstop_response_on_grid() {
        let f = butterworth_coeffs(
            &FilterSpec::Bandstop {
                low_hz: 49.0,
                high_hz: 51.0,
                order: 4,
            },
            512.0,
        )
        .unwrap();
        assert!(f.magnitude_db(50.0, 512.0) < -20.0);
        assert!(f.magnitude_db(40.0, 512.0).abs() < 1.0);
        assert!(f.magnitude_db(0.0, 512.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_unrealizable_bands() {
        let bad = FilterSpec::Bandpass {
            low_hz: 300.0,
            high_hz: 400.0,
            order: 4,
        };
        assert!(matches!(
            butterworth_coeffs(&bad, 512.0),
            Err(Error::InvalidBand { .. })
        ));
        let odd = FilterSpec::Bandstop {
            low_hz: 49.0,
            high_hz: 51.0,
            order: 3,
        };
        assert!(butterworth_coeffs(&odd, 512.0).is_err());
    }

    #[test]
    fn stable_sections() {
        for s in bandpass().sections {
            // roots of z^2 + a1 z + a2 inside the unit circle
            assert!(s.a[2].abs() < 1.0);
            assert!(s.a[1].abs() < 1.0 + s.a[2]);
        }
    }
}
