use super::{NnError, Tensor};
use crate::scalar::{count, Scalar};

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    m + row.iter().map(|&v| (v - m).exp()).fold(T::zero(), |a, b| a + b).ln()
}

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    Ok(out)
}

/// Mean cross-entropy over the batch and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), NnError> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(NnError::LabelOutOfRange { label: bad, classes: k });
    }
    let inv_n = count::<T>(n).recip();
    let mut loss = T::zero();
    let mut grad = logits.clone();
    for (row, &y) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let lse = log_sum_exp(row);
        loss += lse - row[y];
        row.iter_mut().for_each(|v| *v = (*v - lse).exp() * inv_n);
        row[y] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(rows in 1usize..5, logits in prop::collection::vec(-50.0f64..50.0, 40)) {
            let k = logits.len() / rows;
            let t = Tensor::new(&[rows, k], logits[..rows * k].to_vec()).unwrap();
            let p = softmax(&t).unwrap();
            for row in p.data().chunks(k) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::<f64>::zeros(&[3, 10]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        for row in grad.data().chunks(10) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn stable_for_huge_logits() {
        let logits = Tensor::<f32>::new(&[1, 3], vec![1000.0, 0.0, -1000.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-6);
        assert!(grad.data().iter().all(|v| v.is_finite()));
        let p = softmax(&logits).unwrap();
        assert!((p.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn label_range_checked() {
        let logits = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(NnError::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f32; 4]), 0);
    }
}
