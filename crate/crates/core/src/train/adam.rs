use crate::error::Result;
use crate::model::{LstmParams, ModelTopology};

pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    step: i32,
    m: LstmParams,
    v: LstmParams,
}

impl Adam {
    pub fn new(topology: &ModelTopology, lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Ok(Self {
            lr,
            beta1,
            beta2,
            step: 0,
            m: LstmParams::zeros(topology)?,
            v: LstmParams::zeros(topology)?,
        })
    }

    pub fn update(&mut self, params: &mut LstmParams, grads: &LstmParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr) = (self.beta1, self.beta2, self.lr);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}
