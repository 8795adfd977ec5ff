use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let m: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Adam {
            config,
            lr: config.lr,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Entries whose mask value is zero are left untouched and held at zero.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], masks: Option<&[Option<Tensor>]>) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (idx, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let mask = masks.and_then(|m| m.get(idx)).and_then(Option::as_ref);
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                if let Some(mask) = mask {
                    if mask.data()[k] == 0.0 {
                        *pv = 0.0;
                        continue;
                    }
                }
                m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *pv -= self.lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without a
/// strict improvement, never going below `floor`.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    pub patience: usize,
    pub factor: f64,
    pub floor: f64,
    best: f64,
    stale: usize,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule::new(60, 0.9, 1e-3)
    }
}

impl PlateauSchedule {
    pub fn new(patience: usize, factor: f64, floor: f64) -> Self {
        PlateauSchedule {
            patience,
            factor,
            floor,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Record an epoch loss and return the learning rate to use next.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            return (lr * self.factor).max(self.floor);
        }
        lr
    }
}
