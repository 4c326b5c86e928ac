//! Layer scaling: k square Linear+ReLU layers inserted before a hidden layer of
//! a frozen network and distilled so the composite reproduces the original
//! layer's output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::nn::{
    argmax_rows, fit_regression, forward_layers, Classifier, DenseLayer, LayerDoc, MlpModel,
    ModelDoc, TrainConfig, TrainReport,
};
use crate::seed;

/// Initialization of the inserted layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GInit {
    /// Identity weight, zero bias, plus N(0, sigma²) noise on every entry.
    NearIdentity { sigma: f64 },
    /// The same Kaiming-uniform draw as ordinary layers.
    Kaiming,
}

impl Default for GInit {
    fn default() -> Self {
        GInit::NearIdentity { sigma: 1e-1 }
    }
}

fn init_g_layer(d: usize, init: GInit, rng: &mut impl Rng) -> Result<DenseLayer> {
    match init {
        GInit::Kaiming => Ok(DenseLayer::kaiming_uniform(d, d, true, rng)),
        GInit::NearIdentity { sigma } => {
            if !(sigma >= 0.0) {
                return Err(Error::InvalidArgument(format!("init sigma must be ≥ 0, got {sigma}")));
            }
            let mut w = RealMatrix::identity(d);
            let mut b = vec![0.0; d];
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("sigma is finite and positive");
                w.as_mut_slice().iter_mut().for_each(|v| *v += noise.sample(rng));
                b.iter_mut().for_each(|v| *v += noise.sample(rng));
            }
            DenseLayer::new(w, b, true)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledNetwork {
    /// Frozen original network.
    pub base: MlpModel,
    /// Index of the layer the scaling layers precede (and that a hybrid replaces).
    pub target_index: usize,
    /// Each d1 × d1 with d1 = input dim of the target layer.
    pub g_layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub train: TrainReport,
    pub final_loss: f64,
    /// Task accuracy of the scaled network on the distillation set.
    pub scaled_accuracy: f64,
}

/// Inserts `k` scaling layers before layer `target_index` of `base`.
pub fn insert_scaling(
    base: &MlpModel,
    target_index: usize,
    k: usize,
    init: GInit,
    init_seed: u64,
) -> Result<ScaledNetwork> {
    base.validate()?;
    let n = base.layers.len();
    if target_index >= n {
        return Err(Error::InvalidArgument(format!(
            "target layer {target_index} out of range for a {n}-layer model"
        )));
    }
    if !base.layers[target_index].apply_relu {
        return Err(Error::InvalidArgument(format!(
            "layer {target_index} is the linear output layer; only hidden Linear+ReLU layers can be scaled"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let d1 = base.layers[target_index].input_dim();
    let mut rng = seed::rng(init_seed);
    let g_layers = (0..k).map(|_| init_g_layer(d1, init, &mut rng)).collect::<Result<_>>()?;
    let mut base = base.clone();
    base.set_trainable(false);
    Ok(ScaledNetwork {
        base,
        target_index,
        g_layers,
    })
}

/// The original network, bit-identical to what was scaled.
pub fn ablate(scaled: &ScaledNetwork) -> MlpModel {
    let mut m = scaled.base.clone();
    m.set_trainable(true);
    m
}

impl ScaledNetwork {
    pub fn k(&self) -> usize {
        self.g_layers.len()
    }

    pub fn prefix(&self) -> &[DenseLayer] {
        &self.base.layers[..self.target_index]
    }

    pub fn target(&self) -> &DenseLayer {
        &self.base.layers[self.target_index]
    }

    pub fn suffix(&self) -> &[DenseLayer] {
        &self.base.layers[self.target_index + 1..]
    }

    /// State dimension of the trajectory: input width of the target layer.
    pub fn d1(&self) -> usize {
        self.target().input_dim()
    }

    /// Output width of the target layer.
    pub fn d2(&self) -> usize {
        self.target().output_dim()
    }

    /// The k + 2 states for a batch: prefix output, each scaling layer's
    /// output, and the target layer's output (each batch × width).
    pub fn snapshots(&self, x: &RealMatrix) -> Result<Vec<RealMatrix>> {
        let mut states = Vec::with_capacity(self.k() + 2);
        states.push(forward_layers(self.prefix(), x)?);
        for g in &self.g_layers {
            let next = g.forward(states.last().expect("non-empty"))?;
            states.push(next);
        }
        let out = self.target().forward(states.last().expect("non-empty"))?;
        states.push(out);
        Ok(states)
    }

    pub fn forward_batch(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let mut cur = forward_layers(self.prefix(), x)?;
        cur = forward_layers(&self.g_layers, &cur)?;
        cur = self.target().forward(&cur)?;
        forward_layers(self.suffix(), &cur)
    }

    /// Trains only the scaling layers: Huber loss between
    /// `F_i(G(prefix(x)))` and the frozen teacher `F_i(prefix(x))`.
    pub fn distill(
        &mut self,
        data: &LabeledDataset,
        cfg: &TrainConfig,
        shuffle_seed: u64,
    ) -> Result<DistillReport> {
        let inputs = forward_layers(self.prefix(), &data.inputs)?;
        let teacher = self.target().forward(&inputs)?;
        let mut frozen_target = self.target().clone();
        frozen_target.trainable = false;
        let mut stack: Vec<DenseLayer> = self
            .g_layers
            .iter()
            .cloned()
            .map(|mut g| {
                g.trainable = true;
                g
            })
            .collect();
        stack.push(frozen_target);
        let train = fit_regression(&mut stack, &inputs, &teacher, cfg, shuffle_seed)?;
        stack.pop();
        self.g_layers = stack;
        let pred = argmax_rows(&self.forward_batch(&data.inputs)?);
        let correct = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
        let final_loss = match train.final_loss() {
            Some(l) => l,
            None => distill_loss(self, &inputs, &teacher, cfg)?,
        };
        Ok(DistillReport {
            train,
            final_loss,
            scaled_accuracy: correct as f64 / data.len() as f64,
        })
    }

    pub fn to_doc(&self) -> ScaledDoc {
        let base = self.base.to_doc();
        ScaledDoc {
            format_version: base.format_version,
            layers: base.layers,
            seed: base.seed,
            target_index: self.target_index,
            k: self.k(),
            g_layers: self.g_layers.iter().map(LayerDoc::from).collect(),
        }
    }

    pub fn from_doc(doc: &ScaledDoc) -> Result<Self> {
        let base = MlpModel::from_doc(&ModelDoc {
            format_version: doc.format_version,
            layers: doc.layers.clone(),
            seed: doc.seed,
        })?;
        if doc.k != doc.g_layers.len() {
            return Err(Error::Config(format!(
                "k = {} but {} scaling layers stored",
                doc.k,
                doc.g_layers.len()
            )));
        }
        let mut scaled = insert_scaling(&base, doc.target_index, doc.k.max(1), GInit::Kaiming, 0)?;
        scaled.g_layers = doc.g_layers.iter().map(LayerDoc::to_layer).collect::<Result<_>>()?;
        let d1 = scaled.d1();
        if scaled.g_layers.iter().any(|g| g.input_dim() != d1 || g.output_dim() != d1 || !g.apply_relu) {
            return Err(Error::Config(format!("scaling layers must be {d1}x{d1} Linear+ReLU")));
        }
        Ok(scaled)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

fn distill_loss(
    scaled: &ScaledNetwork,
    inputs: &RealMatrix,
    teacher: &RealMatrix,
    cfg: &TrainConfig,
) -> Result<f64> {
    let delta = match cfg.loss {
        crate::nn::Loss::Huber { delta } => delta,
        crate::nn::Loss::CrossEntropy => {
            return Err(Error::Config("distillation uses the huber loss".into()))
        }
    };
    let student = scaled.target().forward(&forward_layers(&scaled.g_layers, inputs)?)?;
    crate::nn::huber_loss(student.as_slice(), teacher.as_slice(), delta)
}

impl Classifier for ScaledNetwork {
    fn logits(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.forward_batch(x)
    }
}

/// Persisted scaled network: the base model document plus the scaling section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledDoc {
    pub format_version: u32,
    pub layers: Vec<LayerDoc>,
    pub seed: u64,
    pub target_index: usize,
    pub k: usize,
    pub g_layers: Vec<LayerDoc>,
}
