//! Independent reference implementations shared by the integration tests.
//! Everything here is deliberately the slow, obvious version.
#![allow(dead_code)]

pub mod gradcheck;

use num_complex::Complex64;
use rand::Rng;
use urban_acoustics::nn::{Conv2dGeom, Tensor};

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// O(n^2) DFT straight from the definition.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                    v * Complex64::new(ang.cos(), ang.sin())
                })
                .sum()
        })
        .collect()
}

/// Quadruple-loop cross-correlation with zero padding.
pub fn naive_conv2d(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>, g: Conv2dGeom) -> Tensor<f64> {
    let (n, c, h, w) = input.dims4().unwrap();
    let (f, _, kh, kw) = weight.dims4().unwrap();
    let ho = (h + 2 * g.padding.0 - kh) / g.stride.0 + 1;
    let wo = (w + 2 * g.padding.1 - kw) / g.stride.1 + 1;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for o in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = bias.data()[o];
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * g.stride.0 + ky) as isize - g.padding.0 as isize;
                                let ix = (ox * g.stride.1 + kx) as isize - g.padding.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                s += x[((b * c + ci) * h + iy as usize) * w + ix as usize]
                                    * wt[((o * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * f + o) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    Tensor::new(&[n, f, ho, wo], out).unwrap()
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn finite_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Integer-valued entries in `[-lim, lim]`: every product and partial sum is
/// exactly representable, so any summation order gives the same bits.
pub fn integer_tensor(shape: &[usize], lim: i32, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-lim..=lim) as f64)
}

/// `sum(r * y)`: a scalar probe whose gradient with respect to `y` is `r`.
pub fn project(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// 16-bit PCM WAV bytes, written independently of the library encoder.
pub fn wav_bytes(channels: &[Vec<f64>], rate: u32) -> Vec<u8> {
    let nc = channels.len() as u16;
    let len = channels[0].len();
    let data_len = (len * channels.len() * 2) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&nc.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * nc as u32 * 2).to_le_bytes());
    b.extend_from_slice(&(nc * 2).to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..len {
        for ch in channels {
            let v = (ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}
