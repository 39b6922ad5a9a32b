use crate::nn::Element;

/// Mean absolute error and its gradient with respect to `output`.
///
/// The subgradient at an exact match is zero.
pub fn l1_loss<T: Element>(output: &[T], target: &[T]) -> (f64, Vec<T>) {
    assert_eq!(output.len(), target.len(), "l1_loss: length mismatch");
    let n = output.len().max(1) as f64;
    let step = T::from_f64(1.0 / n);
    let mut total = 0.0f64;
    let grad = output
        .iter()
        .zip(target)
        .map(|(&o, &t)| {
            let d = o - t;
            total += d.abs().to_f64();
            if d > T::ZERO {
                step
            } else if d < T::ZERO {
                -step
            } else {
                T::ZERO
            }
        })
        .collect();
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_has_zero_loss_and_gradient() {
        let v = [0.1f32, 0.7, 0.3];
        let (loss, grad) = l1_loss(&v, &v);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_target_loss_is_mean_output() {
        let out = [0.25f64, 0.5, 0.75, 0.5];
        let (loss, grad) = l1_loss(&out, &[0.0; 4]);
        assert!((loss - 0.5).abs() < 1e-15);
        assert!(grad.iter().all(|&g| g == 0.25));
    }
}
