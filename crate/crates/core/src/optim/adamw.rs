//! Decoupled-weight-decay adaptive moment optimizer with global gradient
//! norm clipping.

use crate::real::Real;

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub weight_decay: T,
    m: Vec<T>,
    v: Vec<T>,
    step_count: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(dim: usize, learning_rate: T, betas: (T, T), weight_decay: T) -> Self {
        AdamW {
            learning_rate,
            beta1: betas.0,
            beta2: betas.1,
            epsilon: T::cast(1e-8),
            weight_decay,
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update with an optional learning-rate scale (used when a rejected
    /// step is retried at half rate). Weight decay is decoupled from the
    /// adaptive part.
    pub fn step_scaled(&mut self, params: &mut [T], grad: &[T], lr_scale: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = self.learning_rate * lr_scale;
        let bias1 = T::one() - self.beta1.powi(t);
        let bias2 = T::one() - self.beta2.powi(t);
        for j in 0..params.len() {
            params[j] -= lr * self.weight_decay * params[j];
            self.m[j] = self.beta1 * self.m[j] + (T::one() - self.beta1) * grad[j];
            self.v[j] = self.beta2 * self.v[j] + (T::one() - self.beta2) * grad[j] * grad[j];
            let m_hat = self.m[j] / bias1;
            let v_hat = self.v[j] / bias2;
            params[j] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.step_scaled(params, grad, T::one());
    }

    /// Moment snapshot for step rejection.
    pub fn snapshot(&self) -> (Vec<T>, Vec<T>, u64) {
        (self.m.clone(), self.v.clone(), self.step_count)
    }

    pub fn restore(&mut self, snap: &(Vec<T>, Vec<T>, u64)) {
        self.m.copy_from_slice(&snap.0);
        self.v.copy_from_slice(&snap.1);
        self.step_count = snap.2;
    }
}

/// Scales the gradient so its global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Real>(grad: &mut [T], max_norm: T) -> T {
    let norm = grad
        .iter()
        .map(|&g| g * g)
        .fold(T::zero(), |acc, g| acc + g)
        .sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
