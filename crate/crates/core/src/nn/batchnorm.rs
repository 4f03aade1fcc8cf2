//! Per-channel batch normalization over `[N, C, H, W]`.

use super::{NnError, Tensor};
use crate::scalar::{count, Scalar};

/// Saved forward state needed by [`batchnorm2d_backward`].
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (`m - 1`) variance, the value folded into the running estimate.
    pub var_unbiased: Vec<T>,
}

fn channel_view<T: Scalar>(x: &Tensor<T>, c_expected: usize) -> Result<(usize, usize, usize), NnError> {
    let (n, c, h, w) = x.dims4()?;
    if c != c_expected {
        return Err(NnError::Shape(format!("batch norm over {c_expected} channels got input {:?}", x.shape())));
    }
    Ok((n, c, h * w))
}

/// Training-mode forward: normalizes with the biased batch variance.
/// Requires at least two values per channel.
pub fn batchnorm2d_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor<T>, BnCache<T>, BnBatchStats<T>), NnError> {
    let (n, c, hw) = channel_view(input, gamma.len())?;
    let m = n * hw;
    if m < 2 {
        return Err(NnError::BatchTooSmall { values_per_channel: m });
    }
    let x = input.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let vals = || (0..n).flat_map(move |i| x[(i * c + ch) * hw..][..hw].iter().copied());
        let mu = vals().fold(T::zero(), |a, v| a + v) / count(m);
        let ss = vals().fold(T::zero(), |a, v| a + (v - mu) * (v - mu));
        mean[ch] = mu;
        var[ch] = ss / count(m);
    }
    let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                let xh = (x[j] - mean[ch]) * inv_std[ch];
                x_hat.data_mut()[j] = xh;
                out.data_mut()[j] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    let scale: T = count::<T>(m) / count(m - 1);
    let var_unbiased = var.iter().map(|&v| v * scale).collect();
    Ok((out, BnCache { x_hat, inv_std }, BnBatchStats { mean, var_unbiased }))
}

/// Evaluation-mode forward using stored running statistics.
pub fn batchnorm2d_eval<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Result<Tensor<T>, NnError> {
    let (n, c, hw) = channel_view(input, gamma.len())?;
    let mut out = input.clone();
    for ch in 0..c {
        let s = gamma[ch] / (running_var[ch] + eps).sqrt();
        let b = beta[ch] - running_mean[ch] * s;
        for i in 0..n {
            out.data_mut()[(i * c + ch) * hw..][..hw].iter_mut().for_each(|v| *v = *v * s + b);
        }
    }
    Ok(out)
}

/// `(grad_input, grad_gamma, grad_beta)` of the training-mode forward.
pub fn batchnorm2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BnCache<T>,
    gamma: &[T],
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(NnError::Shape(format!(
            "batch norm grad {:?} does not match forward {:?}",
            grad_out.shape(),
            cache.x_hat.shape()
        )));
    }
    let (n, c, hw) = channel_view(grad_out, gamma.len())?;
    let m: T = count(n * hw);
    let (g, xh) = (grad_out.data(), cache.x_hat.data());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                gb[ch] += g[j];
                gg[ch] += g[j] * xh[j];
            }
        }
    }
    // dx = gamma * inv_std / m * (m * dy - sum(dy) - x_hat * sum(dy * x_hat))
    let mut gi = Tensor::zeros(grad_out.shape());
    for i in 0..n {
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / m;
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                gi.data_mut()[j] = k * (m * g[j] - gb[ch] - xh[j] * gg[ch]);
            }
        }
    }
    Ok((gi, gg, gb))
}

/// `r <- (1 - momentum) r + momentum * batch` for mean and variance.
pub fn update_running_stats<T: Scalar>(running_mean: &mut [T], running_var: &mut [T], stats: &BnBatchStats<T>, momentum: T) {
    let keep = T::one() - momentum;
    for (r, &b) in running_mean.iter_mut().zip(&stats.mean) {
        *r = keep * *r + momentum * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&stats.var_unbiased) {
        *r = keep * *r + momentum * b;
    }
}
