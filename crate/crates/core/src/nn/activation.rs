use crate::nn::Real;

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` in place by the ReLU output `out` (gradient passes where `out > 0`).
pub fn relu_backward<T: Real>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn tanh_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        *v = v.tanh();
    }
}

pub fn tanh_backward<T: Real>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        *g = *g * (T::one() - o * o);
    }
}
