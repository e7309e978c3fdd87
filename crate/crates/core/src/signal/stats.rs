use crate::error::{Error, Result};

/// Output of [`minmax_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// The input was constant; `values` is all zeros.
    pub degenerate: bool,
}

/// Range-normalizes a segment onto `[0, 1]`.
///
/// Flat segments (dropouts) do not error: they come back as zeros with
/// `degenerate` set, so batch preprocessing can keep going.
pub fn minmax_normalize(segment: &[f64]) -> Result<Normalized> {
    if segment.is_empty() {
        return Err(Error::EmptySignal);
    }
    if let Some(i) = segment.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (lo, hi) = segment
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(Normalized {
            values: vec![0.0; segment.len()],
            degenerate: true,
        });
    }
    let values = segment
        .iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                (v - lo) / span
            }
        })
        .collect();
    Ok(Normalized {
        values,
        degenerate: false,
    })
}

/// Pearson correlation coefficient of two equal-length sequences.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "correlation of {} and {} samples",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    // One square root keeps corr(x, x) exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(minmax_normalize(&[-1.0, 0.0, 1.0]).unwrap().values, [0.0, 0.5, 1.0]);
        let unit = [0.0, 0.25, 1.0, 0.5];
        assert_eq!(minmax_normalize(&unit).unwrap().values, unit);
        let flat = minmax_normalize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(flat.values, [0.0; 3]);
        assert!(flat.degenerate);
        assert!(minmax_normalize(&[]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 7.0];
        assert!((pearson_corr(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_corr(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // hand evaluation: dx = [-1,0,1], dy = [-7/6,-1/6,4/3]
        // r = 2.5 / sqrt(2 * 19/6) = 0.993399...
        let r = pearson_corr(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.5]).unwrap();
        assert!((r - 0.99340).abs() < 1e-5, "{r}");
        assert!(matches!(
            pearson_corr(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 8..64),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            let y: Vec<f64> = x.iter().enumerate()
                .map(|(i, v)| v.sin() + ((i as u64 * 31 + seed) % 7) as f64)
                .collect();
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            if let (Ok(r1), Ok(r2)) = (pearson_corr(&x, &y), pearson_corr(&xt, &y)) {
                prop_assert!((r1 - r2).abs() < 1e-12);
                prop_assert!((pearson_corr(&y, &x).unwrap() - r1).abs() < 1e-15);
            }
        }

        #[test]
        fn normalize_idempotent(x in prop::collection::vec(-100.0f64..100.0, 2..64)) {
            let once = minmax_normalize(&x).unwrap();
            prop_assume!(!once.degenerate);
            let twice = minmax_normalize(&once.values).unwrap();
            let lo = once.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = once.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
            for (a, b) in once.values.iter().zip(&twice.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
