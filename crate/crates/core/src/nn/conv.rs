//! 1D convolution, transposed convolution and reflection padding on
//! `[batch, channels, length]` tensors.
//!
//! Both convolutions lower to one GEMM per batch item through an
//! `im2col` buffer of shape `[channels * kernel, positions]`.

use rayon::prelude::*;

use super::float::{gemm, Float, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Geometry of a strided, zero-padded window scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scan {
    channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    /// Length of the scanned signal.
    len: usize,
    /// Number of window positions.
    positions: usize,
}

impl Scan {
    /// Source index for window `l`, tap `k`, if inside the signal.
    #[inline]
    fn source(&self, l: usize, k: usize) -> Option<usize> {
        (l * self.stride + k).checked_sub(self.pad).filter(|&i| i < self.len)
    }

    fn im2col<T: Float>(&self, src: &[T], cols: &mut [T]) {
        let (kk, p) = (self.kernel, self.positions);
        for c in 0..self.channels {
            let row = &src[c * self.len..(c + 1) * self.len];
            for k in 0..kk {
                let out = &mut cols[(c * kk + k) * p..(c * kk + k + 1) * p];
                for (l, o) in out.iter_mut().enumerate() {
                    *o = self.source(l, k).map_or(T::zero(), |i| row[i]);
                }
            }
        }
    }

    /// Adds every column entry back onto the signal position it came from.
    fn col2im<T: Float>(&self, cols: &[T], dst: &mut [T]) {
        let (kk, p) = (self.kernel, self.positions);
        for c in 0..self.channels {
            let row = &mut dst[c * self.len..(c + 1) * self.len];
            for k in 0..kk {
                let col = &cols[(c * kk + k) * p..(c * kk + k + 1) * p];
                for (l, &v) in col.iter().enumerate() {
                    if let Some(i) = self.source(l, k) {
                        row[i] += v;
                    }
                }
            }
        }
    }
}

fn dims3<T: Float>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::shape(format!(
            "{what} expects [batch, channels, length], got {:?}",
            x.shape()
        ))),
    }
}

fn check_bias<T: Float>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::shape(format!(
            "bias shape {:?}, expected [{channels}]",
            b.shape()
        ))),
        _ => Ok(()),
    }
}

fn add_bias<T: Float>(y: &mut [T], bias: &[T], len: usize) {
    for (row, &b) in y.chunks_mut(len).zip(bias.iter().cycle()) {
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Float>(g: &[T], channels: usize, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); channels];
    for (i, row) in g.chunks(len).enumerate() {
        out[i % channels] += row.iter().copied().sum();
    }
    out
}

/// Output length of a convolution; `None` if the kernel does not fit.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (len + 2 * pad)
        .checked_sub(kernel)
        .filter(|_| stride > 0)
        .map(|v| v / stride + 1)
}

/// Output length of a transposed convolution.
pub fn conv_transpose_out_len(len: usize, kernel: usize, stride: usize, pad: usize, output_padding: usize) -> Option<usize> {
    ((len.checked_sub(1)?) * stride + kernel + output_padding).checked_sub(2 * pad)
}

/// Cross-correlation of `x: [B, Cin, L]` with `w: [Cout, Cin, K]`, zero
/// padding `pad` on both sides.
pub fn conv1d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (b, cin, len) = dims3(x, "conv1d")?;
    let (cout, wcin, k) = dims3(w, "conv1d weight")?;
    if wcin != cin {
        return Err(Error::shape(format!("conv1d input has {cin} channels, weight expects {wcin}")));
    }
    check_bias(bias, cout)?;
    if stride == 0 || k == 0 {
        return Err(Error::invalid("kernel size and stride must be positive"));
    }
    let lout = conv_out_len(len, k, stride, pad)
        .ok_or_else(|| Error::shape(format!("kernel {k} longer than padded input {len}+2*{pad}")))?;
    let scan = Scan {
        channels: cin,
        kernel: k,
        stride,
        pad,
        len,
        positions: lout,
    };
    let ck = cin * k;

    let mut y = vec![T::zero(); b * cout * lout];
    {
        let (xd, wd) = (x.data(), w.data());
        let (xd, wd): (&[T], &[T]) = (&xd, &wd);
        y.par_chunks_mut(cout * lout).enumerate().for_each(|(i, out)| {
            let mut cols = vec![T::zero(); ck * lout];
            scan.im2col(&xd[i * cin * len..(i + 1) * cin * len], &mut cols);
            gemm(Mat::new(wd, cout, ck), Mat::new(&cols, ck, lout), T::zero(), out);
        });
    }
    if let Some(bias) = bias {
        add_bias(&mut y, &bias.data(), lout);
    }

    let mut parents = vec![x.clone(), w.clone()];
    parents.extend(bias.cloned());
    Ok(Tensor::from_op(y, vec![b, cout, lout], parents, move |g, p| {
        let (xd, wd) = (p[0].data(), p[1].data());
        let (xd, wd): (&[T], &[T]) = (&xd, &wd);
        let (need_x, need_w) = (p[0].requires_grad(), p[1].requires_grad());
        let per_item: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let gi = &g[i * cout * lout..(i + 1) * cout * lout];
                let gx = need_x.then(|| {
                    let mut gcols = vec![T::zero(); ck * lout];
                    gemm(Mat::new(wd, cout, ck).t(), Mat::new(gi, cout, lout), T::zero(), &mut gcols);
                    let mut gx = vec![T::zero(); cin * len];
                    scan.col2im(&gcols, &mut gx);
                    gx
                });
                let gw = need_w.then(|| {
                    let mut cols = vec![T::zero(); ck * lout];
                    scan.im2col(&xd[i * cin * len..(i + 1) * cin * len], &mut cols);
                    let mut gw = vec![T::zero(); cout * ck];
                    gemm(Mat::new(gi, cout, lout), Mat::new(&cols, ck, lout).t(), T::zero(), &mut gw);
                    gw
                });
                (gx, gw)
            })
            .collect();
        let gx = need_x.then(|| per_item.iter().flat_map(|(gx, _)| gx.as_ref().unwrap().iter().copied()).collect());
        let gw = need_w.then(|| sum_in_order(per_item.iter().map(|(_, gw)| gw.as_ref().unwrap()), cout * ck));
        let mut out = vec![gx, gw];
        if p.len() == 3 {
            out.push(Some(bias_grad(g, cout, lout)));
        }
        out
    }))
}

/// Sums equally long vectors in iteration order, so the result does not
/// depend on how a parallel map was scheduled.
fn sum_in_order<'a, T: Float>(parts: impl Iterator<Item = &'a Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for part in parts {
        acc.iter_mut().zip(part).for_each(|(a, &v)| *a += v);
    }
    acc
}

/// Transposed convolution of `x: [B, Cin, L]` with `w: [Cin, Cout, K]`:
/// the adjoint of [`conv1d`] with the same kernel, stride and padding.
pub fn conv_transpose1d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    let (b, cin, len) = dims3(x, "conv_transpose1d")?;
    let (wcin, cout, k) = dims3(w, "conv_transpose1d weight")?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv_transpose1d input has {cin} channels, weight expects {wcin}"
        )));
    }
    check_bias(bias, cout)?;
    if stride == 0 || k == 0 || output_padding >= stride.max(1) {
        return Err(Error::invalid("need kernel, stride > 0 and output_padding < stride"));
    }
    let lout = conv_transpose_out_len(len, k, stride, pad, output_padding)
        .filter(|&l| l > 0)
        .ok_or_else(|| Error::shape("transposed convolution output would be empty"))?;
    let scan = Scan {
        channels: cout,
        kernel: k,
        stride,
        pad,
        len: lout,
        positions: len,
    };
    let ck = cout * k;

    let mut y = vec![T::zero(); b * cout * lout];
    {
        let (xd, wd) = (x.data(), w.data());
        let (xd, wd): (&[T], &[T]) = (&xd, &wd);
        y.par_chunks_mut(cout * lout).enumerate().for_each(|(i, out)| {
            let mut cols = vec![T::zero(); ck * len];
            gemm(
                Mat::new(wd, cin, ck).t(),
                Mat::new(&xd[i * cin * len..(i + 1) * cin * len], cin, len),
                T::zero(),
                &mut cols,
            );
            scan.col2im(&cols, out);
        });
    }
    if let Some(bias) = bias {
        add_bias(&mut y, &bias.data(), lout);
    }

    let mut parents = vec![x.clone(), w.clone()];
    parents.extend(bias.cloned());
    Ok(Tensor::from_op(y, vec![b, cout, lout], parents, move |g, p| {
        let (xd, wd) = (p[0].data(), p[1].data());
        let (xd, wd): (&[T], &[T]) = (&xd, &wd);
        let (need_x, need_w) = (p[0].requires_grad(), p[1].requires_grad());
        let per_item: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let mut gcols = vec![T::zero(); ck * len];
                scan.im2col(&g[i * cout * lout..(i + 1) * cout * lout], &mut gcols);
                let gx = need_x.then(|| {
                    let mut gx = vec![T::zero(); cin * len];
                    gemm(Mat::new(wd, cin, ck), Mat::new(&gcols, ck, len), T::zero(), &mut gx);
                    gx
                });
                let gw = need_w.then(|| {
                    let mut gw = vec![T::zero(); cin * ck];
                    gemm(
                        Mat::new(&xd[i * cin * len..(i + 1) * cin * len], cin, len),
                        Mat::new(&gcols, ck, len).t(),
                        T::zero(),
                        &mut gw,
                    );
                    gw
                });
                (gx, gw)
            })
            .collect();
        let gx = need_x.then(|| per_item.iter().flat_map(|(gx, _)| gx.as_ref().unwrap().iter().copied()).collect());
        let gw = need_w.then(|| sum_in_order(per_item.iter().map(|(_, gw)| gw.as_ref().unwrap()), cin * ck));
        let mut out = vec![gx, gw];
        if p.len() == 3 {
            out.push(Some(bias_grad(g, cout, lout)));
        }
        out
    }))
}

/// Mirrors `pad` samples at each end of the last axis without repeating the
/// edge sample: `[a b c d]` padded by 2 is `[c b a b c d c b]`.
pub fn reflection_pad1d<T: Float>(x: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let (b, c, len) = dims3(x, "reflection_pad1d")?;
    if pad >= len {
        return Err(Error::shape(format!("reflection pad {pad} needs length > {pad}, got {len}")));
    }
    let lout = len + 2 * pad;
    let source = move |j: usize| -> usize {
        let i = j as isize - pad as isize;
        if i < 0 {
            (-i) as usize
        } else if i as usize >= len {
            2 * (len - 1) - i as usize
        } else {
            i as usize
        }
    };
    let xd = x.data();
    let y: Vec<T> = xd
        .chunks(len)
        .flat_map(|row| (0..lout).map(move |j| row[source(j)]))
        .collect();
    drop(xd);
    Ok(Tensor::from_op(y, vec![b, c, lout], vec![x.clone()], move |g, _| {
        let mut gx = vec![T::zero(); b * c * len];
        for (grow, xrow) in g.chunks(lout).zip(gx.chunks_mut(len)) {
            for (j, &v) in grow.iter().enumerate() {
                xrow[source(j)] += v;
            }
        }
        vec![Some(gx)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(v, shape).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn hand_convolution() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 4]);
        let w = t(vec![1.0; 3], &[1, 1, 3]);
        let y = conv1d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 6.0, 9.0, 7.0]);

        let id = t(vec![1.0], &[1, 1, 1]);
        let bias = t(vec![0.0], &[1]);
        assert_eq!(conv1d(&x, &id, Some(&bias), 1, 0).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn output_lengths() {
        assert_eq!(conv_out_len(512, 3, 2, 1), Some(256));
        assert_eq!(conv_transpose_out_len(256, 3, 2, 1, 1), Some(512));
        let x = t(vec![0.0; 256], &[1, 1, 256]);
        let w = t(vec![0.0; 3], &[1, 1, 3]);
        assert_eq!(conv_transpose1d(&x, &w, None, 2, 1, 1).unwrap().shape(), &[1, 1, 512]);
        assert!(conv1d(&t(vec![0.0; 2], &[1, 1, 2]), &w, None, 1, 0).is_err());
    }

    #[test]
    fn transposed_identity_is_identity() {
        let x = t(vec![1.0, -2.0, 0.5], &[1, 1, 3]);
        let id = t(vec![1.0], &[1, 1, 1]);
        assert_eq!(conv_transpose1d(&x, &id, None, 1, 0, 0).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(b, cin, cout, len, k, s, p) in &[
            (2, 3, 4, 16, 3, 1, 1),
            (2, 3, 2, 16, 3, 2, 1),
            (1, 2, 3, 17, 4, 2, 0),
            (3, 1, 2, 9, 7, 1, 3),
        ] {
            let x = random(&mut rng, b * cin * len);
            let w = random(&mut rng, cout * cin * k);
            let cx = conv1d(&t(x.clone(), &[b, cin, len]), &t(w.clone(), &[cout, cin, k]), None, s, p).unwrap();
            let lout = cx.shape()[2];
            let y = random(&mut rng, b * cout * lout);
            // Output padding recovers the exact input length.
            let op = len - conv_transpose_out_len(lout, k, s, p, 0).unwrap();
            let ty = conv_transpose1d(&t(y.clone(), &[b, cout, lout]), &t(w, &[cout, cin, k]), None, s, p, op).unwrap();
            assert_eq!(ty.shape(), &[b, cin, len]);
            let lhs: f64 = cx.to_vec().iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = ty.to_vec().iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn reflection() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 4]);
        let y = reflection_pad1d(&x, 2).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
        assert!(reflection_pad1d(&x, 4).is_err());
    }
}
