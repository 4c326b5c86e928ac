//! Minimal fully-connected network stack: batched forward passes with
//! activation recording, reverse-mode gradients, AdamW and a plateau scheduler.

mod loss;
mod optim;
mod train;

pub use loss::{cross_entropy, huber_loss, huber_loss_grad, Loss, DEFAULT_HUBER_DELTA};
pub use optim::{AdamW, PlateauScheduler, ADAM_EPS, PLATEAU_THRESHOLD};
pub use train::{
    fit_regression, grad_check, train, EpochStats, SchedulerConfig, Target, TrainConfig, TrainReport,
    GRAD_CHECK_STEP,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, gemm_into, RealMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// out × in.
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
    pub apply_relu: bool,
    pub trainable: bool,
}

impl DenseLayer {
    pub fn new(weight: RealMatrix, bias: Vec<f64>, apply_relu: bool) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::shape(
                "DenseLayer::new",
                format!("weight has {} rows but bias has {} entries", weight.rows(), bias.len()),
            ));
        }
        Ok(DenseLayer {
            weight,
            bias,
            apply_relu,
            trainable: true,
        })
    }

    /// Uniform in `±1/√fan_in` for weight and bias (Kaiming-uniform with the
    /// `a = √5` leaky slope, the usual framework default for linear layers).
    pub fn kaiming_uniform(input: usize, output: usize, apply_relu: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = RealMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..bound));
        let bias = (0..output).map(|_| rng.random_range(-bound..bound)).collect();
        DenseLayer {
            weight,
            bias,
            apply_relu,
            trainable: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    /// Pre-activation `x Wᵀ + b` for a batch of row vectors.
    pub fn affine(&self, x: &RealMatrix) -> Result<RealMatrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "DenseLayer::forward",
                format!("input has {} features, layer expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut z = RealMatrix::zeros(x.rows(), self.output_dim());
        for i in 0..z.rows() {
            z.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm_into(1.0, x, false, &self.weight, true, 1.0, &mut z);
        Ok(z)
    }

    pub fn forward(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let mut z = self.affine(x)?;
        if self.apply_relu {
            relu_in_place(&mut z);
        }
        Ok(z)
    }
}

pub fn relu_in_place(z: &mut RealMatrix) {
    z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Runs `layers` in order on a batch, returning the output of every layer.
pub fn forward_trace(layers: &[DenseLayer], x: &RealMatrix) -> Result<Vec<RealMatrix>> {
    let mut acts: Vec<RealMatrix> = Vec::with_capacity(layers.len());
    for layer in layers {
        let next = layer.forward(acts.last().unwrap_or(x))?;
        acts.push(next);
    }
    Ok(acts)
}

pub fn forward_layers(layers: &[DenseLayer], x: &RealMatrix) -> Result<RealMatrix> {
    let mut cur = x.clone();
    for layer in layers {
        cur = layer.forward(&cur)?;
    }
    Ok(cur)
}

/// Parameter gradients of one layer.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
}

/// Backpropagates `grad_out` (gradient w.r.t. the last layer's output)
/// through `layers`. `acts` comes from [`forward_trace`] on input `x`.
/// Frozen layers pass gradients through but get no entry (`None`).
pub fn backward(
    layers: &[DenseLayer],
    x: &RealMatrix,
    acts: &[RealMatrix],
    grad_out: RealMatrix,
) -> Result<Vec<Option<LayerGrad>>> {
    let mut grads: Vec<Option<LayerGrad>> = vec![None; layers.len()];
    let first_trainable = layers.iter().position(|l| l.trainable);
    let Some(first_trainable) = first_trainable else {
        return Ok(grads);
    };
    let mut delta = grad_out;
    for l in (first_trainable..layers.len()).rev() {
        let layer = &layers[l];
        if layer.apply_relu {
            // d relu: zero where the output was clamped.
            for (d, a) in delta.as_mut_slice().iter_mut().zip(acts[l].as_slice()) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = if l == 0 { x } else { &acts[l - 1] };
        if layer.trainable {
            let gw = gemm(1.0, &delta, true, input, false)?;
            let mut gb = vec![0.0; layer.output_dim()];
            for i in 0..delta.rows() {
                for (b, d) in gb.iter_mut().zip(delta.row(i)) {
                    *b += d;
                }
            }
            grads[l] = Some(LayerGrad { weight: gw, bias: gb });
        }
        if l > first_trainable {
            delta = delta.matmul(&layer.weight)?;
        }
    }
    Ok(grads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub seed: u64,
}

impl MlpModel {
    /// Validates dimension compatibility and the linear output layer.
    pub fn new(layers: Vec<DenseLayer>, seed: u64) -> Result<Self> {
        let model = MlpModel { layers, seed };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(Error::InvalidArgument("model has no layers".into()));
        };
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "MlpModel",
                    format!(
                        "layer {i} outputs {} features but layer {} expects {}",
                        pair[0].output_dim(),
                        i + 1,
                        pair[1].input_dim()
                    ),
                ));
            }
        }
        if last.apply_relu {
            return Err(Error::InvalidArgument("output layer must be linear (no ReLU)".into()));
        }
        Ok(())
    }

    /// Kaiming-initialized MLP for widths `[d_0, d_1, …, d_ℓ]`; ReLU on every
    /// layer except the last.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = crate::seed::rng(seed);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| DenseLayer::kaiming_uniform(widths[i], widths[i + 1], i + 1 < n, &mut rng))
            .collect();
        Self::new(layers, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::output_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Single-sample forward: the logits and every layer's output in order.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let input = RealMatrix::from_vec(1, x.len(), x.to_vec())?;
        let acts = forward_trace(&self.layers, &input)?;
        let acts: Vec<Vec<f64>> = acts.into_iter().map(RealMatrix::into_vec).collect();
        let logits = acts.last().cloned().expect("model has layers");
        Ok((logits, acts))
    }

    pub fn forward_batch(&self, x: &RealMatrix) -> Result<RealMatrix> {
        forward_layers(&self.layers, x)
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.layers.iter_mut().for_each(|l| l.trainable = trainable);
    }

    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            layers: self.layers.iter().map(LayerDoc::from).collect(),
            seed: self.seed,
        }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format_version {}",
                doc.format_version
            )));
        }
        let layers = doc.layers.iter().map(LayerDoc::to_layer).collect::<Result<Vec<_>>>()?;
        Self::new(layers, doc.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub rows: usize,
    pub cols: usize,
    pub relu: bool,
    /// Row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&DenseLayer> for LayerDoc {
    fn from(l: &DenseLayer) -> Self {
        LayerDoc {
            rows: l.weight.rows(),
            cols: l.weight.cols(),
            relu: l.apply_relu,
            weight: l.weight.as_slice().to_vec(),
            bias: l.bias.clone(),
        }
    }
}

impl LayerDoc {
    pub fn to_layer(&self) -> Result<DenseLayer> {
        DenseLayer::new(
            RealMatrix::from_vec(self.rows, self.cols, self.weight.clone())?,
            self.bias.clone(),
            self.relu,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format_version: u32,
    pub layers: Vec<LayerDoc>,
    pub seed: u64,
}

/// Anything that maps a batch of inputs to class scores.
pub trait Classifier {
    fn logits(&self, x: &RealMatrix) -> Result<RealMatrix>;
}

impl Classifier for MlpModel {
    fn logits(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.forward_batch(x)
    }
}

/// Index of the first maximal entry of each row.
pub fn argmax_rows(m: &RealMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
