use crate::linalg::RealMatrix;

use super::{DenseLayer, LayerGrad};

pub const ADAM_EPS: f64 = 1e-8;
/// Relative improvement the plateau scheduler requires.
pub const PLATEAU_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug)]
struct Moments {
    m_w: RealMatrix,
    v_w: RealMatrix,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

/// Adam with decoupled weight decay. Decay is applied to the parameter
/// directly (`p ← p − lr·λ·p`), before and independent of the adaptive step;
/// it applies to biases too.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    step: u64,
    /// One entry per layer; `None` for frozen layers.
    moments: Vec<Option<Moments>>,
}

impl AdamW {
    pub fn new(layers: &[DenseLayer], lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        let moments = layers
            .iter()
            .map(|l| {
                l.trainable.then(|| Moments {
                    m_w: RealMatrix::zeros(l.weight.rows(), l.weight.cols()),
                    v_w: RealMatrix::zeros(l.weight.rows(), l.weight.cols()),
                    m_b: vec![0.0; l.bias.len()],
                    v_b: vec![0.0; l.bias.len()],
                })
            })
            .collect();
        AdamW {
            lr,
            beta1,
            beta2,
            weight_decay,
            eps: ADAM_EPS,
            step: 0,
            moments,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, layers: &mut [DenseLayer], grads: &[Option<LayerGrad>]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2_sqrt = (1.0 - self.beta2.powi(t)).sqrt();
        let step_size = self.lr / bc1;
        let decay = 1.0 - self.lr * self.weight_decay;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                p[i] *= decay;
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        };
        for ((layer, grad), mom) in layers.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            let (Some(g), Some(mo)) = (grad, mom) else {
                continue;
            };
            debug_assert!(layer.trainable);
            update(
                layer.weight.as_mut_slice(),
                g.weight.as_slice(),
                mo.m_w.as_mut_slice(),
                mo.v_w.as_mut_slice(),
            );
            update(&mut layer.bias, &g.bias, &mut mo.m_b, &mut mo.v_b);
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has failed
/// to improve (relative threshold [`PLATEAU_THRESHOLD`]) for `patience`
/// consecutive epochs; the counter then restarts.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's loss; returns the (possibly reduced) learning rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - PLATEAU_THRESHOLD) {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return lr * self.factor;
        }
        lr
    }
}
