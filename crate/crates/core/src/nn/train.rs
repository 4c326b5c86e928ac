use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, huber_loss_grad, Loss};
use super::optim::{AdamW, PlateauScheduler};
use super::{argmax_rows, backward, forward_trace, DenseLayer, MlpModel};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::seed;

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub scheduler: Option<SchedulerConfig>,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if let Loss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return bad(format!("huber delta must be positive, got {delta}"));
            }
        }
        if let Some(s) = self.scheduler {
            if !(s.factor > 0.0 && s.factor < 1.0) || s.patience == 0 {
                return bad("scheduler needs 0 < factor < 1 and patience ≥ 1".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses.
    pub loss: f64,
    /// Classification accuracy over the epoch's batches (before each update).
    pub accuracy: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Supervision for a batch: class labels or regression targets.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Labels(&'a [usize]),
    Values(&'a RealMatrix),
}

impl Target<'_> {
    fn len(&self) -> usize {
        match self {
            Target::Labels(l) => l.len(),
            Target::Values(v) => v.rows(),
        }
    }
}

fn loss_and_grad(out: &RealMatrix, target: Target<'_>, loss: Loss) -> Result<(f64, RealMatrix)> {
    match (loss, target) {
        (Loss::CrossEntropy, Target::Labels(l)) => cross_entropy(out, l),
        (Loss::Huber { delta }, Target::Values(v)) => huber_loss_grad(out, v, delta),
        (Loss::Huber { delta }, Target::Labels(_)) => Err(Error::Config(format!(
            "huber loss (delta {delta}) needs regression targets"
        ))),
        (Loss::CrossEntropy, Target::Values(_)) => {
            Err(Error::Config("cross-entropy loss needs class labels".into()))
        }
    }
}

/// Mini-batch AdamW over `layers`; only layers with `trainable = true` change.
fn optimize(
    layers: &mut [DenseLayer],
    inputs: &RealMatrix,
    target: Target<'_>,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    if !layers.iter().any(|l| l.trainable) {
        return Err(Error::InvalidArgument("no trainable layers".into()));
    }
    let n = inputs.rows();
    if n == 0 || n != target.len() {
        return Err(Error::shape(
            "train",
            format!("{n} inputs for {} targets", target.len()),
        ));
    }
    let mut opt = AdamW::new(layers, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
    let mut sched = cfg.scheduler.map(|s| PlateauScheduler::new(s.factor, s.patience));
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport { epochs: Vec::with_capacity(cfg.epochs) };

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive(shuffle_seed, epoch as u64)));
        let lr = opt.lr;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(chunk);
            let labels_buf: Vec<usize>;
            let values_buf: RealMatrix;
            let batch_target = match target {
                Target::Labels(l) => {
                    labels_buf = chunk.iter().map(|&i| l[i]).collect();
                    Target::Labels(&labels_buf)
                }
                Target::Values(v) => {
                    values_buf = v.select_rows(chunk);
                    Target::Values(&values_buf)
                }
            };
            let acts = forward_trace(layers, &x)?;
            let out = acts.last().expect("non-empty layers");
            let (loss, grad) = loss_and_grad(out, batch_target, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if let Target::Labels(l) = batch_target {
                correct += argmax_rows(out).iter().zip(l).filter(|(p, y)| p == y).count();
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = backward(layers, &x, &acts, grad)?;
            opt.step(layers, &grads);
        }
        let epoch_loss = loss_sum / n as f64;
        report.epochs.push(EpochStats {
            epoch,
            loss: epoch_loss,
            accuracy: matches!(target, Target::Labels(_)).then(|| correct as f64 / n as f64),
            lr,
        });
        if let Some(s) = sched.as_mut() {
            opt.lr = s.observe(epoch_loss, opt.lr);
        }
    }
    Ok(report)
}

/// Trains a classifier with cross-entropy. Layers with `trainable = false`
/// keep their parameters bit-for-bit.
pub fn train(
    model: &mut MlpModel,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<TrainReport> {
    if cfg.loss != Loss::CrossEntropy {
        return Err(Error::Config("classifier training uses cross_entropy loss".into()));
    }
    if data.n_features() != model.input_dim() {
        return Err(Error::shape(
            "train",
            format!("dataset has {} features, model expects {}", data.n_features(), model.input_dim()),
        ));
    }
    optimize(&mut model.layers, &data.inputs, Target::Labels(&data.labels), cfg, shuffle_seed)
}

/// Regresses the output of `layers` onto `targets` with the Huber loss.
pub fn fit_regression(
    layers: &mut [DenseLayer],
    inputs: &RealMatrix,
    targets: &RealMatrix,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<TrainReport> {
    if !matches!(cfg.loss, Loss::Huber { .. }) {
        return Err(Error::Config("regression training uses the huber loss".into()));
    }
    optimize(layers, inputs, Target::Values(targets), cfg, shuffle_seed)
}

fn batch_loss(layers: &[DenseLayer], x: &RealMatrix, target: Target<'_>, loss: Loss) -> Result<f64> {
    let acts = forward_trace(layers, x)?;
    Ok(loss_and_grad(acts.last().expect("non-empty"), target, loss)?.0)
}

/// Largest relative disagreement between backprop and central differences
/// over every parameter of `model` (all layers treated as trainable).
pub fn grad_check(model: &MlpModel, x: &RealMatrix, target: Target<'_>, loss: Loss) -> Result<f64> {
    let mut layers = model.layers.clone();
    layers.iter_mut().for_each(|l| l.trainable = true);
    let acts = forward_trace(&layers, x)?;
    let (_, g) = loss_and_grad(acts.last().expect("non-empty"), target, loss)?;
    let grads = backward(&layers, x, &acts, g)?;

    let mut worst: f64 = 0.0;
    let h = GRAD_CHECK_STEP;
    for li in 0..layers.len() {
        let grad = grads[li].as_ref().expect("all layers trainable");
        let n_w = layers[li].weight.as_slice().len();
        for p in 0..n_w + layers[li].bias.len() {
            let analytic = if p < n_w { grad.weight.as_slice()[p] } else { grad.bias[p - n_w] };
            let orig = param(&mut layers[li], p, None);
            param(&mut layers[li], p, Some(orig + h));
            let plus = batch_loss(&layers, x, target, loss)?;
            param(&mut layers[li], p, Some(orig - h));
            let minus = batch_loss(&layers, x, target, loss)?;
            param(&mut layers[li], p, Some(orig));
            let numeric = (plus - minus) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// Reads parameter `p` (weights row-major, then bias), optionally writing it.
fn param(layer: &mut DenseLayer, p: usize, set: Option<f64>) -> f64 {
    let n_w = layer.weight.as_slice().len();
    let slot = if p < n_w {
        &mut layer.weight.as_mut_slice()[p]
    } else {
        &mut layer.bias[p - n_w]
    };
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
