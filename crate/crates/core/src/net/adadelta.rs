use super::tensor::Real;
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_LEARNING_RATE: f64 = 1.0;

/// Adadelta with running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T = f32> {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub(crate) acc_grad: Vec<T>,
    pub(crate) acc_delta: Vec<T>,
}

impl<T: Real> AdadeltaState<T> {
    pub fn new(n: usize) -> Self {
        Self::with_params(n, DEFAULT_RHO, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE)
    }

    pub fn with_params(n: usize, rho: f64, epsilon: f64, learning_rate: f64) -> Self {
        AdadeltaState {
            rho,
            epsilon,
            learning_rate,
            acc_grad: vec![T::zero(); n],
            acc_delta: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.acc_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc_grad.is_empty()
    }

    pub fn is_zeroed(&self) -> bool {
        self.acc_grad.iter().chain(&self.acc_delta).all(|v| *v == T::zero())
    }

    /// `E[g^2]` accumulator.
    pub fn grad_accumulator(&self) -> &[T] {
        &self.acc_grad
    }

    /// `E[dx^2]` accumulator.
    pub fn delta_accumulator(&self) -> &[T] {
        &self.acc_delta
    }

    pub fn reset(&mut self) {
        self.acc_grad.fill(T::zero());
        self.acc_delta.fill(T::zero());
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.len() || grad.len() != self.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} slots, got {} parameters and {} gradients",
                self.len(),
                params.len(),
                grad.len()
            )));
        }
        let rho = T::of(self.rho);
        let one_minus = T::of(1.0 - self.rho);
        let eps = T::of(self.epsilon);
        let lr = T::of(self.learning_rate);
        for i in 0..params.len() {
            let g = grad[i];
            let eg = rho * self.acc_grad[i] + one_minus * g * g;
            let delta = -((self.acc_delta[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
            self.acc_grad[i] = eg;
            self.acc_delta[i] = rho * self.acc_delta[i] + one_minus * delta * delta;
            params[i] += lr * delta;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut opt = AdadeltaState::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut opt = AdadeltaState::<f64>::new(1);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        let want = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((p[0] - want).abs() < 1e-15);
        assert!((p[0] + 4.47e-3).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = AdadeltaState::<f32>::new(2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
