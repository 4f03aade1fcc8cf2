//! 2-D convolution (cross-correlation) lowered to GEMM via im2col.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::scalar::{gemm, MatRef, Scalar};

/// Kernel, zero-padding and stride, each `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dGeom {
    pub kernel: (usize, usize),
    pub padding: (usize, usize),
    pub stride: (usize, usize),
}

impl Conv2dGeom {
    /// `H' = (H + 2ph - kh) / sh + 1`, likewise for width.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        let (sh, sw) = self.stride;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(NnError::Shape(format!("degenerate convolution {self:?}")));
        }
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(NnError::Shape(format!("input {h}x{w} smaller than kernel {kh}x{kw} after padding")));
        }
        Ok(((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1))
    }
}

/// Gradients of one convolution call.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<T> {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Dims {
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    ho: usize,
    wo: usize,
}

impl Dims {
    fn patch(&self, g: &Conv2dGeom) -> usize {
        self.c * g.kernel.0 * g.kernel.1
    }
}

fn check<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, g: &Conv2dGeom) -> Result<(usize, Dims), NnError> {
    let (n, c, h, w) = input.dims4()?;
    let (f, wc, kh, kw) = weight.dims4()?;
    if wc != c || (kh, kw) != g.kernel {
        return Err(NnError::Shape(format!(
            "weight {:?} does not fit input channels {c} and kernel {:?}",
            weight.shape(),
            g.kernel
        )));
    }
    let (ho, wo) = g.output_hw(h, w)?;
    Ok((n, Dims { c, h, w, f, ho, wo }))
}

/// Output columns `[lo, hi)` whose tap `kx` lands inside the input row.
fn valid_cols(kx: usize, pad: isize, stride: usize, w: usize, wo: usize) -> (usize, usize) {
    let pad = pad as usize;
    // ox * stride + kx - pad >= 0
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
    // ox * stride + kx - pad <= w - 1
    let hi = if w + pad > kx { ((w + pad - kx - 1) / stride + 1).min(wo) } else { 0 };
    (lo.min(hi), hi)
}

/// Lays out every receptive field as a column: `col[(c, ky, kx), (oy, ox)]`.
fn im2col<T: Scalar>(x: &[T], d: &Dims, g: &Conv2dGeom, col: &mut [T]) {
    let (kh, kw) = g.kernel;
    let (ph, pw) = (g.padding.0 as isize, g.padding.1 as isize);
    let (sh, sw) = g.stride;
    let p = d.ho * d.wo;
    for ci in 0..d.c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * p;
                let (lo, hi) = valid_cols(kx, pw, sw, d.w, d.wo);
                for oy in 0..d.ho {
                    let dst = &mut col[row + oy * d.wo..row + (oy + 1) * d.wo];
                    let iy = (oy * sh + ky) as isize - ph;
                    if iy < 0 || iy >= d.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &x[(ci * d.h + iy as usize) * d.w..][..d.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo == hi {
                        continue;
                    }
                    let first = lo * sw + kx - pw as usize;
                    if sw == 1 {
                        dst[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (slot, &v) in dst[lo..hi].iter_mut().zip(src[first..].iter().step_by(sw)) {
                            *slot = v;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns back onto the input grid (adjoint of [`im2col`]).
fn col2im<T: Scalar>(col: &[T], d: &Dims, g: &Conv2dGeom, x: &mut [T]) {
    let (kh, kw) = g.kernel;
    let (ph, pw) = (g.padding.0 as isize, g.padding.1 as isize);
    let (sh, sw) = g.stride;
    let p = d.ho * d.wo;
    x.fill(T::zero());
    for ci in 0..d.c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * p;
                let (lo, hi) = valid_cols(kx, pw, sw, d.w, d.wo);
                if lo == hi {
                    continue;
                }
                for oy in 0..d.ho {
                    let iy = (oy * sh + ky) as isize - ph;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &col[row + oy * d.wo..row + (oy + 1) * d.wo];
                    let dst = &mut x[(ci * d.h + iy as usize) * d.w..][..d.w];
                    let first = lo * sw + kx - pw as usize;
                    if sw == 1 {
                        for (slot, &v) in dst[first..first + hi - lo].iter_mut().zip(&src[lo..hi]) {
                            *slot += v;
                        }
                    } else {
                        for (slot, &v) in dst[first..].iter_mut().step_by(sw).zip(&src[lo..hi]) {
                            *slot += v;
                        }
                    }
                }
            }
        }
    }
}

/// `input [N,C,H,W]`, `weight [F,C,kh,kw]`, `bias [F]` to `[N,F,H',W']`.
/// Zero padding, no kernel flip.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    geom: Conv2dGeom,
) -> Result<Tensor<T>, NnError> {
    let (n, d) = check(input, weight, &geom)?;
    if bias.len() != d.f {
        return Err(NnError::Shape(format!("bias has {} values for {} filters", bias.len(), d.f)));
    }
    let p = d.ho * d.wo;
    let k = d.patch(&geom);
    let mut out = Tensor::zeros(&[n, d.f, d.ho, d.wo]);
    out.data_mut().par_chunks_mut(d.f * p).enumerate().for_each_init(
        || vec![T::zero(); k * p],
        |col, (i, out_i)| {
            im2col(input.item(i), &d, &geom, col);
            gemm(T::one(), MatRef::new(weight.data(), d.f, k), MatRef::new(col, k, p), T::zero(), out_i);
            for (row, &b) in out_i.chunks_exact_mut(p).zip(bias.data()) {
                row.iter_mut().for_each(|v| *v += b);
            }
        },
    );
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`]. Per-example weight gradients are
/// summed in batch order, so results do not depend on thread scheduling.
pub fn conv2d_backward_opt<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    geom: Conv2dGeom,
    need_input_grad: bool,
) -> Result<Conv2dGrads<T>, NnError> {
    let (n, d) = check(input, weight, &geom)?;
    if grad_out.shape() != [n, d.f, d.ho, d.wo] {
        return Err(NnError::Shape(format!(
            "grad_out {:?} does not match forward output {:?}",
            grad_out.shape(),
            [n, d.f, d.ho, d.wo]
        )));
    }
    let p = d.ho * d.wo;
    let k = d.patch(&geom);
    let per_in = d.c * d.h * d.w;
    let mut grad_in = if need_input_grad { vec![T::zero(); n * per_in] } else { Vec::new() };

    let mut in_chunks: Vec<Option<&mut [T]>> = if need_input_grad {
        grad_in.chunks_mut(per_in).map(Some).collect()
    } else {
        (0..n).map(|_| None).collect()
    };
    let per_item: Vec<Vec<T>> = in_chunks
        .par_iter_mut()
        .enumerate()
        .map_init(
            || (vec![T::zero(); k * p], vec![T::zero(); k * p]),
            |(col, gcol), (i, gin)| {
                let go = grad_out.item(i);
                im2col(input.item(i), &d, &geom, col);
                let mut gw = vec![T::zero(); d.f * k];
                // dW = dY [F,P] * col^T [P,K]
                gemm(T::one(), MatRef::new(go, d.f, p), MatRef::new(col, k, p).t(), T::zero(), &mut gw);
                if let Some(gin) = gin.as_deref_mut() {
                    // dcol = W^T [K,F] * dY [F,P]
                    gemm(T::one(), MatRef::new(weight.data(), d.f, k).t(), MatRef::new(go, d.f, p), T::zero(), gcol);
                    col2im(gcol, &d, &geom, gin);
                }
                gw
            },
        )
        .collect();

    let mut grad_w = vec![T::zero(); d.f * k];
    for gw in &per_item {
        grad_w.iter_mut().zip(gw).for_each(|(a, &b)| *a += b);
    }
    let mut grad_b = vec![T::zero(); d.f];
    for i in 0..n {
        for (gb, row) in grad_b.iter_mut().zip(grad_out.item(i).chunks_exact(p)) {
            *gb += row.iter().copied().fold(T::zero(), |a, b| a + b);
        }
    }
    Ok(Conv2dGrads {
        input: if need_input_grad { Some(Tensor::new(input.shape(), grad_in)?) } else { None },
        weight: Tensor::new(weight.shape(), grad_w)?,
        bias: Tensor::new(&[d.f], grad_b)?,
    })
}

/// `(grad_input, grad_weight, grad_bias)` for [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    geom: Conv2dGeom,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let g = conv2d_backward_opt(grad_out, input, weight, geom, true)?;
    Ok((g.input.expect("requested"), g.weight, g.bias))
}
