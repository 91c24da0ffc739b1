//! AdamW with decoupled weight decay, and a linear-warmup cosine schedule.

use crate::{Error, Result};

/// Linear warmup to `peak` over `warmup` steps, then cosine decay to zero at
/// `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, peak: f64, warmup: usize) -> Result<f64> {
    if step > total_steps || warmup >= total_steps {
        return Err(Error::Config(format!(
            "schedule bounds: step {step}, total {total_steps}, warmup {warmup}"
        )));
    }
    if step < warmup {
        return Ok(peak * (step + 1) as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. `params` and `grads` are parallel lists of tensors
    /// flattened in the same order.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let gtotal: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.m.len() || gtotal != total || params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {total} params and {gtotal} grads",
                self.m.len()
            )));
        }
        if let Some(bad) = grads.iter().flat_map(|g| g.iter()).position(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                step: self.t as usize,
                what: format!("non-finite gradient at flat index {bad}"),
            });
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * c.weight_decay;
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (theta, &grad) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = c.beta1 * *m + (1.0 - c.beta1) * grad;
                *v = c.beta2 * *v + (1.0 - c.beta2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta = *theta * decay - lr * m_hat / (v_hat.sqrt() + c.eps);
                k += 1;
            }
        }
        Ok(())
    }
}
