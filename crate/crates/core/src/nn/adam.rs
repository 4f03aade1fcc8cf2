use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        Self { config, m: zeros(), v: zeros(), t: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::Shape(format!(
            "adam got {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(NnError::Shape(format!("adam shape mismatch {:?} / {:?}", p.shape(), g.shape())));
        }
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let (b1, b2): (T, T) = (lit(c.beta1), lit(c.beta2));
    let bc1: T = lit(1.0 - c.beta1.powi(t));
    let bc2: T = lit(1.0 - c.beta2.powi(t));
    let (lr, eps): (T, T) = (lit(c.lr), lit(c.eps));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Tensor::<f64>::new(&[2], vec![1.0, 1.0]).unwrap();
        let g = Tensor::new(&[2], vec![0.5, -3.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &[&p]);
        adam_step(&mut [&mut p], &[g], &mut st).unwrap();
        assert!((p.data()[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((p.data()[1] - (1.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut p = Tensor::<f32>::full(&[3], 2.0);
        let mut st = AdamState::new(AdamConfig::default(), &[&p]);
        adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut st).unwrap();
        assert_eq!(p.data(), &[2.0; 3]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn equal_gradients_update_identically() {
        let mut a = Tensor::<f64>::full(&[2], 0.3);
        let mut b = Tensor::<f64>::full(&[2], 0.3);
        let g = Tensor::full(&[2], 0.7);
        let mut st = AdamState::new(AdamConfig::default(), &[&a, &b]);
        for _ in 0..3 {
            adam_step(&mut [&mut a, &mut b], &[g.clone(), g.clone()], &mut st).unwrap();
        }
        assert_eq!(a, b);
    }
}
