use crate::model::DualPathParams;

/// Adaptive-moment optimizer with decoupled weight decay.
///
/// One step on parameters `θ` with gradient `g`:
/// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`,
/// `θ ← θ − lr·wd·θ − lr·m̂ / (√v̂ + ε)` with bias-corrected `m̂`, `v̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Updates a flat parameter slice in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step_chunks(&mut [params], grad);
    }

    pub fn step_params(&mut self, params: &mut DualPathParams, grad: &DualPathParams) {
        let g = grad.flatten();
        let mut chunks = params.tensors_mut();
        self.step_chunks(&mut chunks, &g);
    }

    fn step_chunks(&mut self, chunks: &mut [&mut [f64]], grad: &[f64]) {
        let n: usize = chunks.iter().map(|c| c.len()).sum();
        assert_eq!(n, grad.len(), "gradient length must match parameter count");
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
            self.step = 0;
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut k = 0;
        for chunk in chunks.iter_mut() {
            for x in chunk.iter_mut() {
                let g = grad[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *x -= self.lr * self.weight_decay * *x + self.lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}
