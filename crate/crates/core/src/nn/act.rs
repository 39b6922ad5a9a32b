use super::Element;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Element>(x: &mut [T]) {
    let slope = T::from_f64(LEAKY_SLOPE);
    for v in x {
        if *v < T::ZERO {
            *v *= slope;
        }
    }
}

/// `pre` is the pre-activation input.
pub fn leaky_relu_backward<T: Element>(pre: &[T], grad: &mut [T]) {
    let slope = T::from_f64(LEAKY_SLOPE);
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p < T::ZERO {
            *g *= slope;
        }
    }
}

pub fn relu<T: Element>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

pub fn relu_backward<T: Element>(pre: &[T], grad: &mut [T]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

/// Output margin: outputs lie in `[SQUASH_MARGIN, 1 - SQUASH_MARGIN]`, so they
/// stay strictly inside (0, 1) even where `f32` sigmoid rounds to 0 or 1.
pub const SQUASH_MARGIN: f64 = 1.0 / 1_048_576.0;

/// Squashes logits in place into the open unit interval and returns the plain
/// sigmoid values needed by [`squash_backward`].
pub fn squash<T: Element>(x: &mut [T]) -> Vec<T> {
    let margin = T::from_f64(SQUASH_MARGIN);
    let span = T::ONE - margin - margin;
    let mut sig = Vec::with_capacity(x.len());
    for v in x {
        let s = T::ONE / (T::ONE + (-*v).exp());
        sig.push(s);
        *v = margin + span * s;
    }
    sig
}

pub fn squash_backward<T: Element>(sig: &[T], grad: &mut [T]) {
    let margin = T::from_f64(SQUASH_MARGIN);
    let span = T::ONE - margin - margin;
    for (g, &s) in grad.iter_mut().zip(sig) {
        *g *= span * s * (T::ONE - s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_stays_strictly_inside_unit_interval_in_f32() {
        let mut x = vec![-1e4f32, -200.0, -20.0, 0.0, 20.0, 200.0, 1e4];
        squash(&mut x);
        for v in &x {
            assert!(*v > 0.0 && *v < 1.0, "{v}");
        }
        assert_eq!(x[3], 0.5);
    }

    #[test]
    fn leaky_relu_scales_negative_inputs() {
        let mut x = vec![-1.0f64, 0.0, 2.0];
        leaky_relu(&mut x);
        assert_eq!(x, vec![-0.2, 0.0, 2.0]);
        let mut g = vec![1.0, 1.0, 1.0];
        leaky_relu_backward(&[-1.0, 0.5, 2.0], &mut g);
        assert_eq!(g, vec![0.2, 1.0, 1.0]);
    }
}
