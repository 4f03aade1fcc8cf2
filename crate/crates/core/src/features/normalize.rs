use super::{SpectrogramTensor, Stage};
use crate::scalar::Scalar;

/// Below this standard deviation the input is treated as constant.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Mean and population standard deviation used by [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalizationStats {
    /// True when the constant-input guard fired.
    pub fn degenerate(&self) -> bool {
        self.sigma < SIGMA_FLOOR
    }
}

/// Mean and population standard deviation, accumulated in `f64`.
pub fn moments<T: Scalar>(values: &[T]) -> NormalizationStats {
    let n = values.len().max(1) as f64;
    let mu = values.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / n;
    let var = values.iter().map(|v| (v.to_f64().unwrap() - mu).powi(2)).sum::<f64>() / n;
    NormalizationStats { mu, sigma: var.sqrt() }
}

/// `X <- (X - mu) / sigma` over the whole tensor of one example. A constant
/// input (sigma below [`SIGMA_FLOOR`]) maps to all zeros.
pub fn normalize<T: Scalar>(spec: &SpectrogramTensor<T>) -> (SpectrogramTensor<T>, NormalizationStats) {
    let stats = moments(spec.data());
    let mut out = spec.clone();
    if stats.degenerate() {
        out.data_mut().iter_mut().for_each(|v| *v = T::zero());
    } else {
        let mu = T::from_f64(stats.mu).unwrap();
        let inv = T::from_f64(1.0 / stats.sigma).unwrap();
        out.data_mut().iter_mut().for_each(|v| *v = (*v - mu) * inv);
    }
    out.set_stage(Stage::Normalized);
    (out, stats)
}
