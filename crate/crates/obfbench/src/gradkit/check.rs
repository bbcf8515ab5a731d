//! Finite-difference gradient checking.
//!
//! The checker is deliberately independent of [`Tape::backward`]: it only
//! re-evaluates a scalar function at perturbed inputs, so it can serve as an
//! oracle for the analytic gradients. Run it with `f64` tensors for tight
//! tolerances; the element type of the closure decides the arithmetic.
//!
//! [`Tape::backward`]: crate::gradkit::Tape::backward

use crate::gradkit::tensor::{Element, Tensor};
use crate::gradkit::Result;

/// Central-difference gradient of `f` with respect to `x`.
///
/// `f` must be a pure function of its argument. The step `h` is applied in
/// the element type of `x`.
pub fn central_diff<T, F>(f: &mut F, x: &Tensor<T>, h: f64) -> Result<Tensor<T>>
where
    T: Element,
    F: FnMut(&Tensor<T>) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(x.numel());
    let step = T::from_f64(h);
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.push(T::from_f64((plus - minus) / (2.0 * h)));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Max-norm relative error between two gradients:
/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1e-12)`.
pub fn max_rel_err<A: Element, B: Element>(a: &Tensor<A>, b: &Tensor<B>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "gradient shapes differ");
    let mut diff: f64 = 0.0;
    let mut norm_a: f64 = 0.0;
    let mut norm_b: f64 = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        diff = diff.max((x.to_f64() - y.to_f64()).abs());
        norm_a = norm_a.max(x.to_f64().abs());
        norm_b = norm_b.max(y.to_f64().abs());
    }
    diff / norm_a.max(norm_b).max(1e-12)
}
