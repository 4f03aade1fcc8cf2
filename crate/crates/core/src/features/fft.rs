//! Iterative radix-2 Cooley-Tukey FFT.

use num_complex::Complex;

use super::FeatureError;
use crate::scalar::Scalar;

/// Precomputed twiddles and bit-reversal permutation for one length.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    n: usize,
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Scalar> FftPlan<T> {
    pub fn new(n: usize) -> Result<Self, FeatureError> {
        if !n.is_power_of_two() {
            return Err(FeatureError::NotPowerOfTwo(n));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        // e^{-2 pi i k / n} for k < n/2, evaluated in f64
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex::new(T::from_f64(angle.cos()).unwrap(), T::from_f64(angle.sin()).unwrap())
            })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized forward transform `X[k] = sum_j x[j] e^{-2 pi i jk/n}`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

/// Forward DFT of `input` (length must be a power of two).
pub fn fft<T: Scalar>(input: &[Complex<T>]) -> Result<Vec<Complex<T>>, FeatureError> {
    let plan = FftPlan::new(input.len())?;
    let mut out = input.to_vec();
    plan.forward(&mut out);
    Ok(out)
}
