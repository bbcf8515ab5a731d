//! Gradient-descent optimizers shared by model training and the attack's
//! continuous embedding updates.

use crate::gradkit::tensor::{c, Element, Tensor};
use crate::gradkit::{GradError, Result};

/// Adam with bias correction. One instance owns the first/second moment
/// state for a fixed list of tensors, updated in lock-step.
pub struct Adam<T: Element> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(learning_rate: f64, shapes: &[Vec<usize>]) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
        }
    }

    /// Apply one update to every parameter. `params` and `grads` must match
    /// the shapes given at construction, in the same order.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = c::<T>(self.beta1);
        let b2 = c::<T>(self.beta2);
        let one = T::one();
        let corr1 = c::<T>(1.0 / (1.0 - self.beta1.powi(self.step as i32)));
        let corr2 = c::<T>(1.0 / (1.0 - self.beta2.powi(self.step as i32)));
        let lr = c::<T>(self.learning_rate);
        let eps = c::<T>(self.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if !g.all_finite() {
                return Err(GradError::NonFiniteGradient);
            }
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv * corr1;
                let v_hat = *vv * corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient step `p ← p − lr·g`.
pub fn sgd_step<T: Element>(param: &mut Tensor<T>, grad: &Tensor<T>, learning_rate: f64) -> Result<()> {
    if !grad.all_finite() {
        return Err(GradError::NonFiniteGradient);
    }
    let lr = c::<T>(learning_rate);
    for (p, &g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p = *p - lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        // With g = [c, 0], bias correction makes the first update ≈ lr·sign(g).
        let mut p = Tensor::<f64>::vector(&[1.0, 1.0]);
        let g = Tensor::<f64>::vector(&[0.7, 0.0]);
        let mut adam = Adam::new(0.04, &[vec![2]]);
        adam.step(&mut [&mut p], &[g]).unwrap();
        assert!((p.data()[0] - (1.0 - 0.04)).abs() < 1e-6);
        assert_eq!(p.data()[1], 1.0);
    }

    #[test]
    fn adam_descends_a_quadratic_monotonically() {
        // Minimize |e − e*|²; distance to the optimum must shrink each step.
        let target = [0.3, -0.7, 1.1];
        let mut p = Tensor::<f64>::vector(&[2.0, 2.0, 2.0]);
        let mut adam = Adam::new(0.1, &[vec![3]]);
        let dist = |p: &Tensor<f64>| -> f64 {
            p.data()
                .iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let mut last = dist(&p);
        for _ in 0..10 {
            let g = Tensor::<f64>::vector(
                &p.data()
                    .iter()
                    .zip(target.iter())
                    .map(|(a, b)| 2.0 * (a - b))
                    .collect::<Vec<_>>(),
            );
            adam.step(&mut [&mut p], &[g]).unwrap();
            let d = dist(&p);
            assert!(d < last, "distance increased: {} -> {}", last, d);
            last = d;
        }
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut p = Tensor::<f32>::vector(&[1.0, 1.0]);
        let g = Tensor::<f32>::vector(&[1.0, 0.0]);
        sgd_step(&mut p, &g, 0.5).unwrap();
        assert_eq!(p.data(), &[0.5, 1.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Tensor::<f32>::vector(&[1.0]);
        let g = Tensor::<f32>::vector(&[f32::NAN]);
        assert!(sgd_step(&mut p, &g, 0.1).is_err());
        let mut adam = Adam::new(0.1, &[vec![1]]);
        assert!(adam.step(&mut [&mut p], &[Tensor::vector(&[f32::INFINITY])]).is_err());
    }
}
