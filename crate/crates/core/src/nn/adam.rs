//! AdamW: Adam with decoupled weight decay and a linear warm-up schedule.

use super::ParamStore;

/// Optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, peak_lr: f64, warmup_steps: usize, weight_decay: f64) -> Self {
        let m = store.iter().map(|p| vec![0.0; p.data.len()]).collect();
        let v = store.iter().map(|p| vec![0.0; p.data.len()]).collect();
        AdamState {
            peak_lr,
            warmup_steps,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Learning rate for the *next* update: `peak · min(step / warmup, 1)`.
    pub fn current_lr(&self) -> f64 {
        if self.warmup_steps == 0 {
            return self.peak_lr;
        }
        self.peak_lr * (self.step as f64 / self.warmup_steps as f64).min(1.0)
    }

    /// One decoupled-weight-decay Adam update over all parameters.
    ///
    /// Stepping with all-zero gradients is permitted (warned, since it is
    /// usually a missing `backward`); decay still shrinks the weights.
    pub fn step(&mut self, store: &mut ParamStore) {
        let all_zero = store.iter().all(|p| p.grad.iter().all(|&g| g == 0.0));
        if all_zero {
            log::warn!("adam step with all-zero gradients (missing backward?)");
        }
        let lr = self.current_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (idx, param) in store.params.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..param.data.len() {
                let g = param.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let w = param.data[i];
                param.data[i] = w - lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * w);
            }
        }
        self.step += 1;
    }
}
