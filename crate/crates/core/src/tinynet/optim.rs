use crate::error::{Error, Result};

use super::model::{Gradients, MlpModel};

/// Learning rate for zero-based `epoch` under a step schedule.
pub fn step_lr(initial: f64, step: usize, decay: f64, epoch: usize) -> f64 {
    initial * decay.powi((epoch / step.max(1)) as i32)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(model: &MlpModel) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f32) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradient at Adam step {}", self.t + 1)));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for l in 0..model.layer_count() {
            let (w, b) = model.layer_mut(l);
            update(w, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(b, &grads.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
        Ok(())
    }
}
