//! Koopman hybrid models: a network whose scaled layer is replaced by one
//! DMD step on the delay window of scaling-layer states.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::koopman::{DmdDoc, DmdModel};
use crate::linalg::RealMatrix;
use crate::nn::{argmax_rows, forward_layers, relu_in_place, Classifier, DenseLayer, LayerDoc, MODEL_FORMAT_VERSION};
use crate::scaling::ScaledNetwork;

/// Rows per chunk when evaluating large datasets.
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    pub prefix: Vec<DenseLayer>,
    pub g_layers: Vec<DenseLayer>,
    pub dmd: DmdModel,
    /// Width handed to the suffix; the remaining d1 − d2 predicted rows are
    /// sentinel positions and are dropped.
    pub d2: usize,
    pub suffix: Vec<DenseLayer>,
    pub target_index: usize,
    /// Re-apply ReLU to the prediction before the suffix.
    pub clamp_relu: bool,
    pub seed: u64,
}

/// Assembles a hybrid from a scaled network and a DMD fitted on its
/// trajectories. The replaced layer's parameters are not carried over.
pub fn build_hybrid(scaled: &ScaledNetwork, dmd: &DmdModel, clamp_relu: bool) -> Result<HybridModel> {
    let (d1, d2, k) = (scaled.d1(), scaled.d2(), scaled.k());
    if dmd.d1 != d1 {
        return Err(Error::shape(
            "build_hybrid",
            format!("DMD state dimension {} but the scaled layer takes {d1}", dmd.d1),
        ));
    }
    if dmd.h == 0 || dmd.h > k {
        return Err(Error::InvalidArgument(format!(
            "delay h = {} needs h ≤ k = {k}: inference has only k + 1 states before the replaced layer",
            dmd.h
        )));
    }
    Ok(HybridModel {
        prefix: scaled.prefix().to_vec(),
        g_layers: scaled.g_layers.clone(),
        dmd: dmd.clone(),
        d2,
        suffix: scaled.suffix().to_vec(),
        target_index: scaled.target_index,
        clamp_relu,
        seed: scaled.base.seed,
    })
}

impl HybridModel {
    pub fn d1(&self) -> usize {
        self.dmd.d1
    }

    pub fn h(&self) -> usize {
        self.dmd.h
    }

    /// The d2-wide replacement for the layer output, per input row.
    pub fn replaced_output(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let (d1, h) = (self.d1(), self.h());
        let mut states = vec![forward_layers(&self.prefix, x)?];
        for g in &self.g_layers {
            let next = g.forward(states.last().expect("non-empty"))?;
            states.push(next);
        }
        let recent = &states[states.len() - h..];
        let mut window = RealMatrix::zeros(x.rows(), h * d1);
        for i in 0..x.rows() {
            let row = window.row_mut(i);
            for (lag, s) in recent.iter().enumerate() {
                row[lag * d1..(lag + 1) * d1].copy_from_slice(s.row(i));
            }
        }
        let pred = self.dmd.predict_batch(&window)?;
        let mut out = pred.columns(0, self.d2);
        if self.clamp_relu {
            relu_in_place(&mut out);
        }
        Ok(out)
    }

    pub fn forward_batch(&self, x: &RealMatrix) -> Result<RealMatrix> {
        forward_layers(&self.suffix, &self.replaced_output(x)?)
    }

    pub fn to_doc(&self) -> HybridDoc {
        HybridDoc {
            format_version: MODEL_FORMAT_VERSION,
            seed: self.seed,
            target_index: self.target_index,
            h: self.h(),
            d2: self.d2,
            clamp_relu: self.clamp_relu,
            prefix: self.prefix.iter().map(LayerDoc::from).collect(),
            g_layers: self.g_layers.iter().map(LayerDoc::from).collect(),
            suffix: self.suffix.iter().map(LayerDoc::from).collect(),
            dmd: self.dmd.to_doc(),
        }
    }

    pub fn from_doc(doc: &HybridDoc) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported hybrid format_version {}",
                doc.format_version
            )));
        }
        let layers = |v: &[LayerDoc]| v.iter().map(LayerDoc::to_layer).collect::<Result<Vec<_>>>();
        let dmd = DmdModel::from_doc(&doc.dmd)?;
        if dmd.h != doc.h {
            return Err(Error::Config(format!("hybrid h = {} but DMD h = {}", doc.h, dmd.h)));
        }
        let model = HybridModel {
            prefix: layers(&doc.prefix)?,
            g_layers: layers(&doc.g_layers)?,
            dmd,
            d2: doc.d2,
            suffix: layers(&doc.suffix)?,
            target_index: doc.target_index,
            clamp_relu: doc.clamp_relu,
            seed: doc.seed,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let d1 = self.d1();
        let bad = |m: String| Err(Error::Config(m));
        if self.prefix.len() != self.target_index {
            return bad(format!("{} prefix layers for target index {}", self.prefix.len(), self.target_index));
        }
        if self.prefix.last().is_some_and(|l| l.output_dim() != d1) {
            return bad(format!("prefix output does not match DMD dimension {d1}"));
        }
        if self.g_layers.iter().any(|g| g.input_dim() != d1 || g.output_dim() != d1) {
            return bad(format!("scaling layers must be {d1}x{d1}"));
        }
        if self.h() > self.g_layers.len() {
            return bad(format!("h = {} exceeds k = {}", self.h(), self.g_layers.len()));
        }
        if self.d2 > d1 || self.suffix.first().is_some_and(|l| l.input_dim() != self.d2) {
            return bad(format!("suffix does not accept the de-augmented width {}", self.d2));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

impl Classifier for HybridModel {
    fn logits(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.forward_batch(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridDoc {
    pub format_version: u32,
    pub seed: u64,
    pub target_index: usize,
    pub h: usize,
    pub d2: usize,
    pub clamp_relu: bool,
    pub prefix: Vec<LayerDoc>,
    pub g_layers: Vec<LayerDoc>,
    pub suffix: Vec<LayerDoc>,
    pub dmd: DmdDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn predict_classes(model: &dyn Classifier, x: &RealMatrix) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.rows());
    let mut start = 0;
    while start < x.rows() {
        let end = (start + EVAL_CHUNK).min(x.rows());
        out.extend(argmax_rows(&model.logits(&x.row_range(start, end))?));
        start = end;
    }
    Ok(out)
}

/// Argmax accuracy and confusion counts.
pub fn evaluate(model: &dyn Classifier, data: &LabeledDataset) -> Result<EvalReport> {
    let pred = predict_classes(model, &data.inputs)?;
    let mut confusion = vec![vec![0; data.n_classes]; data.n_classes];
    let mut correct = 0;
    for (&p, &y) in pred.iter().zip(&data.labels) {
        if p >= data.n_classes {
            return Err(Error::shape(
                "evaluate",
                format!("model predicts class {p} for a {}-class dataset", data.n_classes),
            ));
        }
        confusion[y][p] += 1;
        correct += usize::from(p == y);
    }
    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        confusion,
    })
}
