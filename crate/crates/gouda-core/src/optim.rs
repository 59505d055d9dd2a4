//! Adam with L2 regularization folded into the gradient.

use crate::error::{GoudaError, Result};

/// Optimizer state for one flat parameter vector (the d×d adapter).
///
/// Weight decay is classic Adam-with-L2: `g' = g + wd·W` *before* the moment
/// updates, so the decay passes through the adaptive scaling. Stated here
/// because the reference traces depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `w` in place.
    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) -> Result<()> {
        if w.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(GoudaError::DimensionMismatch { expected: self.m.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GoudaError::Diverged { iteration: self.step as usize });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..w.len() {
            let g = grad[i] + self.weight_decay * w[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_roughly_lr_times_sign() {
        let mut adam = AdamState::new(1, 0.01, 0.0);
        let mut w = vec![3.0];
        adam.step(&mut w, &[0.4]).unwrap();
        // bias-corrected first step: m̂ = g, v̂ = g² → Δ ≈ −lr·sign(g)
        assert_abs_diff_eq!(w[0], 3.0 - 0.01, epsilon = 1e-6);
        let mut adam = AdamState::new(1, 0.01, 0.0);
        let mut w = vec![3.0];
        adam.step(&mut w, &[-0.4]).unwrap();
        assert_abs_diff_eq!(w[0], 3.0 + 0.01, epsilon = 1e-6);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut adam = AdamState::new(2, 0.01, 0.0);
        let mut w = vec![1.5, -2.0];
        adam.step(&mut w, &[0.0, 0.0]).unwrap();
        assert_eq!(w, vec![1.5, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn two_steps_match_an_independent_reference_trace() {
        // Reference: scalar Adam on f(w) = w² (grad 2w) written out longhand.
        let (lr, wd, b1, b2, eps) = (0.1, 0.05, 0.9, 0.999, 1e-8);
        let mut rw = 1.0_f64;
        let (mut rm, mut rv) = (0.0_f64, 0.0_f64);
        for t in 1..=2 {
            let g = 2.0 * rw + wd * rw;
            rm = b1 * rm + (1.0 - b1) * g;
            rv = b2 * rv + (1.0 - b2) * g * g;
            let m_hat = rm / (1.0 - b1.powi(t));
            let v_hat = rv / (1.0 - b2.powi(t));
            rw -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut adam = AdamState::new(1, lr, wd);
        let mut w = vec![1.0];
        for _ in 0..2 {
            let g = 2.0 * w[0];
            adam.step(&mut w, &[g]).unwrap();
        }
        assert_abs_diff_eq!(w[0], rw, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut adam = AdamState::new(1, 0.01, 0.0);
        let mut w = vec![1.0];
        let err = adam.step(&mut w, &[f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("diverged"), "{err}");
        // the failed step must not advance state
        assert_eq!(adam.step_count(), 0);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn weight_decay_shrinks_even_with_zero_gradient() {
        let mut adam = AdamState::new(1, 0.01, 0.1);
        let mut w = vec![2.0];
        adam.step(&mut w, &[0.0]).unwrap();
        assert!(w[0] < 2.0);
    }
}
