use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self::with_betas(n, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        if self.m.len() != params.len() {
            // parameter vector was resized (heads grew): restart the moments
            self.m = vec![T::zero(); params.len()];
            self.v = vec![T::zero(); params.len()];
            self.t = 0;
        }
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 - self.beta1);
        let c2 = T::of(1.0 - self.beta2);
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let step = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + c1 * g;
            self.v[i] = b2 * self.v[i] + c2 * g * g;
            let denom = (self.v[i] * inv_bc2).sqrt() + eps;
            params[i] = params[i] - step * self.m[i] / denom;
        }
    }
}
