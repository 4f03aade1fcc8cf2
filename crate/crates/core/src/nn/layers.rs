//! ReLU, adaptive average pooling and the fully connected layer.

use super::{NnError, Tensor};
use crate::scalar::{count, gemm, MatRef, Scalar};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] given its input. The derivative at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if grad_out.shape() != input.shape() {
        return Err(NnError::Shape(format!("relu grad {:?} vs input {:?}", grad_out.shape(), input.shape())));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape(), data)
}

/// Half-open input range covered by output cell `i` of `out` along an axis of `len`.
pub fn pool_region(i: usize, out: usize, len: usize) -> (usize, usize) {
    (i * len / out, (i + 1) * len / out)
}

/// Averages `[N,C,H,W]` down to `[N,C,oh,ow]` over floor-partitioned regions.
pub fn adaptive_avg_pool2d<T: Scalar>(input: &Tensor<T>, grid: (usize, usize)) -> Result<Tensor<T>, NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (oh, ow) = grid;
    if oh == 0 || ow == 0 || h < oh || w < ow {
        return Err(NnError::Shape(format!("cannot pool {h}x{w} to {oh}x{ow}")));
    }
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let x = input.data();
    for plane in 0..n * c {
        let src = &x[plane * h * w..][..h * w];
        for i in 0..oh {
            let (y0, y1) = pool_region(i, oh, h);
            for j in 0..ow {
                let (x0, x1) = pool_region(j, ow, w);
                let mut s = T::zero();
                for y in y0..y1 {
                    s += src[y * w + x0..y * w + x1].iter().copied().fold(T::zero(), |a, b| a + b);
                }
                out.data_mut()[(plane * oh + i) * ow + j] = s / count((y1 - y0) * (x1 - x0));
            }
        }
    }
    Ok(out)
}

/// Spreads each output gradient uniformly over its pooling region.
pub fn adaptive_avg_pool2d_backward<T: Scalar>(grad_out: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>, NnError> {
    let (n, c, oh, ow) = grad_out.dims4()?;
    let (h, w) = match *input_shape {
        [n2, c2, h, w] if n2 == n && c2 == c && h >= oh && w >= ow => (h, w),
        _ => return Err(NnError::Shape(format!("pool grad {:?} vs input {input_shape:?}", grad_out.shape()))),
    };
    let mut gi = Tensor::zeros(input_shape);
    let g = grad_out.data();
    for plane in 0..n * c {
        let dst = &mut gi.data_mut()[plane * h * w..][..h * w];
        for i in 0..oh {
            let (y0, y1) = pool_region(i, oh, h);
            for j in 0..ow {
                let (x0, x1) = pool_region(j, ow, w);
                let v = g[(plane * oh + i) * ow + j] / count((y1 - y0) * (x1 - x0));
                for y in y0..y1 {
                    dst[y * w + x0..y * w + x1].iter_mut().for_each(|d| *d = v);
                }
            }
        }
    }
    Ok(gi)
}

/// `x [N,D] * W^T + b` with `W [O,D]`, `b [O]`.
pub fn linear_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, d) = x.dims2()?;
    let (o, wd) = weight.dims2()?;
    if wd != d || bias.len() != o {
        return Err(NnError::Shape(format!(
            "linear weight {:?} / bias {:?} do not fit input {:?}",
            weight.shape(),
            bias.shape(),
            x.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * o);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(T::one(), MatRef::new(x.data(), n, d), MatRef::new(weight.data(), o, d).t(), T::one(), &mut out);
    Tensor::new(&[n, o], out)
}

/// `(grad_x, grad_weight, grad_bias)` for [`linear_forward`].
pub fn linear_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (n, d) = x.dims2()?;
    let (o, _) = weight.dims2()?;
    if grad_out.shape() != [n, o] {
        return Err(NnError::Shape(format!("linear grad {:?}, expected {:?}", grad_out.shape(), [n, o])));
    }
    let g = MatRef::new(grad_out.data(), n, o);
    let mut gx = vec![T::zero(); n * d];
    gemm(T::one(), g, MatRef::new(weight.data(), o, d), T::zero(), &mut gx);
    let mut gw = vec![T::zero(); o * d];
    gemm(T::one(), g.t(), MatRef::new(x.data(), n, d), T::zero(), &mut gw);
    let mut gb = vec![T::zero(); o];
    for row in grad_out.data().chunks_exact(o) {
        gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
    }
    Ok((Tensor::new(&[n, d], gx)?, Tensor::new(&[o, d], gw)?, Tensor::new(&[o], gb)?))
}
