use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Largest singular-value ratio accepted for the polynomial design matrix.
const MAX_CONDITION: f64 = 1e10;

/// Fits a least-squares polynomial of the given order to the whole record
/// and subtracts it.
///
/// The fit runs in the Chebyshev basis on a time axis rescaled to `[-1, 1]`;
/// a monomial Vandermonde matrix at order 36 would be numerically singular.
pub fn remove_baseline_poly(s: &Signal, order: usize) -> Result<Signal> {
    let baseline = fit_baseline(s.samples(), order)?;
    s.with_samples(
        s.samples()
            .iter()
            .zip(&baseline)
            .map(|(v, b)| v - b)
            .collect(),
    )
}

/// The fitted polynomial evaluated on every sample.
pub fn fit_baseline(x: &[f64], order: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if order == 0 {
        return Err(Error::invalid("polynomial order must be positive"));
    }
    if n <= order + 1 {
        return Err(Error::TooShort {
            needed: order + 2,
            got: n,
        });
    }
    let cols = order + 1;
    let mut design = DMatrix::<f64>::zeros(n, cols);
    for i in 0..n {
        let t = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let (mut prev, mut cur) = (1.0, t);
        design[(i, 0)] = 1.0;
        design[(i, 1)] = t;
        for k in 2..cols {
            let next = 2.0 * t * cur - prev;
            design[(i, k)] = next;
            prev = cur;
            cur = next;
        }
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)));
    if !(smin > 0.0 && smax / smin < MAX_CONDITION) {
        return Err(Error::IllConditioned { order });
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(x);
    let coeffs = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::IllConditioned { order })?;
    Ok((design * coeffs).iter().cloned().collect())
}

/// Subtracts the least-squares line from a window.
pub fn detrend_linear(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let tm = (n - 1) as f64 / 2.0;
    let xm = x.iter().sum::<f64>() / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        num += dt * (v - xm);
        den += dt * dt;
    }
    let slope = num / den;
    x.iter()
        .enumerate()
        .map(|(i, v)| v - xm - slope * (i as f64 - tm))
        .collect()
}
