//! Elementwise maths, reductions and reshaping on [`Tensor`].
//!
//! Binary ops require equal shapes; row-wise helpers treat the last axis as
//! the row and everything before it as the row index.

use std::rc::Rc;

use super::float::{gemm, Float, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn same_shape<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn last_axis<T: Float>(x: &Tensor<T>) -> Result<(usize, usize)> {
    let n = *x
        .shape()
        .last()
        .ok_or_else(|| Error::shape("row op on a scalar"))?;
    Ok((x.numel() / n.max(1), n))
}

impl<T: Float> Tensor<T> {
    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
        let y: Vec<T> = self.data().iter().map(|&v| f(v)).collect();
        let saved = y.clone();
        Tensor::from_op(y, self.shape().to_vec(), vec![self.clone()], move |g, p| {
            let x = p[0].data();
            vec![Some(
                g.iter()
                    .zip(x.iter().zip(&saved))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect(),
            )]
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other)?;
        let y = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, _| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        }))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other)?;
        let y = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a - b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, _| {
            vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())]
        }))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other)?;
        let y = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, p| {
            let (a, b) = (p[0].data(), p[1].data());
            let ga = p[0].requires_grad().then(|| g.iter().zip(b.iter()).map(|(&g, &b)| g * b).collect());
            let gb = p[1].requires_grad().then(|| g.iter().zip(a.iter()).map(|(&g, &a)| g * a).collect());
            vec![ga, gb]
        }))
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other)?;
        let y = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a / b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, p| {
            let (a, b) = (p[0].data(), p[1].data());
            let ga = p[0].requires_grad().then(|| g.iter().zip(b.iter()).map(|(&g, &b)| g / b).collect());
            let gb = p[1].requires_grad().then(|| {
                g.iter()
                    .zip(a.iter().zip(b.iter()))
                    .map(|(&g, (&a, &b))| -g * a / (b * b))
                    .collect()
            });
            vec![ga, gb]
        }))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&self, c: &[T]) -> Result<Tensor<T>> {
        if c.len() != self.numel() {
            return Err(Error::shape("constant length differs from tensor size"));
        }
        let c: Rc<[T]> = c.into();
        let y = self.data().iter().zip(c.iter()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().zip(c.iter()).map(|(&g, &c)| g * c).collect())]
        }))
    }

    /// Elementwise sum with a constant of the same length.
    pub fn add_const(&self, c: &[T]) -> Result<Tensor<T>> {
        if c.len() != self.numel() {
            return Err(Error::shape("constant length differs from tensor size"));
        }
        let y = self.data().iter().zip(c).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(y, self.shape().to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        }))
    }

    /// `a * x + b`.
    pub fn affine(&self, a: T, b: T) -> Tensor<T> {
        let y = self.data().iter().map(|&v| a * v + b).collect();
        Tensor::from_op(y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().map(|&g| g * a).collect())]
        })
    }

    pub fn scale(&self, a: T) -> Tensor<T> {
        self.affine(a, T::zero())
    }

    pub fn neg(&self) -> Tensor<T> {
        self.affine(-T::one(), T::zero())
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary(|v| v * v, |x, _| x + x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary(|v| v.sqrt(), |_, y| T::of(0.5) / y)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(|v| v.abs(), |x, _| if x > T::zero() { T::one() } else if x < T::zero() { -T::one() } else { T::zero() })
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(|v| v.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    pub fn leaky_relu(&self, slope: T) -> Tensor<T> {
        self.unary(
            move |v| if v > T::zero() { v } else { v * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(|v| v.tanh(), |_, y| T::one() - y * y)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&self) -> Tensor<T> {
        let n = self.numel();
        let s = self.data().iter().copied().sum();
        Tensor::from_op(vec![s], Vec::new(), vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().scale(T::one() / T::of(n as f64))
    }

    /// Sums over the last axis: `[.., N] -> [..]`.
    pub fn row_sum(&self) -> Result<Tensor<T>> {
        let (rows, n) = last_axis(self)?;
        let y = if n == 0 {
            vec![T::zero(); rows]
        } else {
            self.data().chunks(n).map(|r| r.iter().copied().sum()).collect()
        };
        let shape = self.shape()[..self.shape().len() - 1].to_vec();
        Ok(Tensor::from_op(y, shape, vec![self.clone()], move |g, _| {
            vec![Some(g.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect())]
        }))
    }

    pub fn row_mean(&self) -> Result<Tensor<T>> {
        let (_, n) = last_axis(self)?;
        Ok(self.row_sum()?.scale(T::one() / T::of(n.max(1) as f64)))
    }

    /// Repeats each element `n` times along a new last axis: `[..] -> [.., n]`.
    pub fn expand_last(&self, n: usize) -> Tensor<T> {
        let y = self.data().iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
        let mut shape = self.shape().to_vec();
        shape.push(n);
        Tensor::from_op(y, shape, vec![self.clone()], move |g, _| {
            vec![Some(if n == 0 {
                vec![T::zero(); g.len()]
            } else {
                g.chunks(n).map(|r| r.iter().copied().sum()).collect()
            })]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Rows (first-axis slices) at the given indices, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let first = *self
            .shape()
            .first()
            .ok_or_else(|| Error::shape("select_rows on a scalar"))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= first) {
            return Err(Error::shape(format!("row {bad} out of {first}")));
        }
        let stride = self.numel() / first.max(1);
        let data = self.data();
        let y = idx.iter().flat_map(|&i| data[i * stride..(i + 1) * stride].iter().copied()).collect();
        drop(data);
        let mut shape = self.shape().to_vec();
        shape[0] = idx.len();
        let idx = idx.to_vec();
        let total = self.numel();
        Ok(Tensor::from_op(y, shape, vec![self.clone()], move |g, _| {
            let mut out = vec![T::zero(); total];
            for (k, &i) in idx.iter().enumerate() {
                for (o, &v) in out[i * stride..(i + 1) * stride].iter_mut().zip(&g[k * stride..(k + 1) * stride]) {
                    *o += v;
                }
            }
            vec![Some(out)]
        }))
    }

    /// `[R, N] x [N, F] -> [R, F]` against a constant matrix.
    pub fn matmul_const(&self, m: Rc<[T]>, n: usize, f: usize) -> Result<Tensor<T>> {
        if self.shape().len() != 2 || self.shape()[1] != n || m.len() != n * f {
            return Err(Error::shape(format!(
                "matmul of {:?} with {n}x{f}",
                self.shape()
            )));
        }
        let r = self.shape()[0];
        let mut y = vec![T::zero(); r * f];
        gemm(Mat::new(&self.data(), r, n), Mat::new(&m, n, f), T::zero(), &mut y);
        Ok(Tensor::from_op(y, vec![r, f], vec![self.clone()], move |g, _| {
            let mut gx = vec![T::zero(); r * n];
            gemm(Mat::new(g, r, f), Mat::new(&m, n, f).t(), T::zero(), &mut gx);
            vec![Some(gx)]
        }))
    }

    /// Stacks equally shaped tensors along a new first axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| Error::shape("stack of nothing"))?;
        if parts.iter().any(|p| p.shape() != first.shape()) {
            return Err(Error::shape("stack of differently shaped tensors"));
        }
        let each = first.numel();
        let y = parts.iter().flat_map(|p| p.to_vec()).collect();
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(first.shape());
        Ok(Tensor::from_op(y, shape, parts.to_vec(), move |g, p| {
            g.chunks(each.max(1))
                .zip(p)
                .map(|(c, t)| t.requires_grad().then(|| c.to_vec()))
                .collect()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn t(v: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::new(v.to_vec(), shape).unwrap()
    }

    fn p(v: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::param(v.to_vec(), shape).unwrap()
    }

    #[test]
    fn activations() {
        let x = t(&[-1.0, 2.0, -2.0, 0.0], &[4]);
        assert_eq!(x.relu().to_vec(), vec![0.0, 2.0, 0.0, 0.0]);
        assert_eq!(x.leaky_relu(0.2).to_vec()[2], -0.4);
        assert_eq!(x.tanh().to_vec()[3], 0.0);
        assert!(t(&[-50.0, 50.0], &[2]).tanh().to_vec().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn sum_of_product_gradient_is_other_factor() {
        let w = p(&[0.5, -1.0, 2.0], &[3]);
        let x = t(&[3.0, 4.0, 5.0], &[3]);
        let loss = w.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![3.0, 4.0, 5.0]);
        // accumulation contract
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![6.0, 8.0, 10.0]);
        w.zero_grad();
        assert!(w.grad().is_none());
    }

    #[test]
    fn backward_errors() {
        let w = p(&[1.0, 2.0], &[2]);
        assert!(matches!(w.square().backward(), Err(Error::NonScalarLoss(_))));
        let c = t(&[1.0, 2.0], &[2]).sum();
        assert!(matches!(c.backward(), Err(Error::Disconnected)));
        let detached = w.square().detach().sum();
        assert!(matches!(detached.backward(), Err(Error::Disconnected)));
    }

    #[test]
    fn no_grad_records_nothing() {
        let w = p(&[1.0], &[1]);
        let y = super::super::tensor::no_grad(|| w.square());
        assert!(!y.requires_grad());
        assert!(w.square().requires_grad());
    }

    #[test]
    fn shared_subexpression_gets_both_paths() {
        // f = (w^2) * (w^2) = w^4, f' = 4 w^3
        let w = p(&[1.5], &[1]);
        let s = w.square();
        s.mul(&s).unwrap().sum().backward().unwrap();
        assert!((w.grad().unwrap()[0] - 4.0 * 1.5f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn rows_and_matmul() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        assert_eq!(x.row_sum().unwrap().to_vec(), vec![6.0, 15.0]);
        assert_eq!(x.row_mean().unwrap().expand_last(2).to_vec(), vec![2.0, 2.0, 5.0, 5.0]);
        let m: Rc<[f64]> = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0].into();
        assert_eq!(x.matmul_const(m, 3, 2).unwrap().to_vec(), vec![4.0, 5.0, 10.0, 11.0]);
        assert_eq!(x.select_rows(&[1, 1]).unwrap().to_vec(), vec![4.0, 5.0, 6.0, 4.0, 5.0, 6.0]);
        assert!(x.add(&t(&[1.0], &[1])).is_err());
    }
}
