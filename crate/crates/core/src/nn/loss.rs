use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    CrossEntropy,
    Huber { delta: f64 },
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &RealMatrix, labels: &[usize]) -> Result<(f64, RealMatrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} logit rows for {} labels", logits.rows(), labels.len()),
        ));
    }
    let n = logits.rows() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            return Err(Error::InvalidArgument(format!(
                "label {y} with only {} classes",
                logits.cols()
            )));
        }
        let row = grad.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        total += sum.ln() - (logits[(i, y)] - max);
        for v in row.iter_mut() {
            *v /= sum * n;
        }
        row[y] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

#[inline]
fn huber_elem(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Mean Huber loss: `½r²` for `|r| ≤ δ`, `δ(|r| − ½δ)` beyond.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(
            "huber_loss",
            format!("lengths {} and {}", pred.len(), target.len()),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("huber delta must be positive, got {delta}")));
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| huber_elem(p - t, delta)).sum();
    Ok(s / pred.len() as f64)
}

/// Mean Huber loss over all entries and its gradient w.r.t. `pred`.
pub fn huber_loss_grad(pred: &RealMatrix, target: &RealMatrix, delta: f64) -> Result<(f64, RealMatrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "huber_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let loss = huber_loss(pred.as_slice(), target.as_slice(), delta)?;
    let n = pred.as_slice().len() as f64;
    let mut grad = pred.sub(target)?;
    grad.as_mut_slice()
        .iter_mut()
        .for_each(|r| *r = r.clamp(-delta, delta) / n);
    Ok((loss, grad))
}
