//! Experiment configuration and the stages shared by the CLI and the
//! acceptance suite: data, baseline training, scaling, DMD fitting and
//! replacement, plus the JSON envelope every artifact is stored in.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::SweepSpec;
use crate::datasets::{generate_yinyang, load_or_fetch_mnist, LabeledDataset};
use crate::error::{Error, Result};
use crate::hybrid::{build_hybrid, HybridModel};
use crate::koopman::{collect_trajectories, fit_dmd, hankelize, DmdModel, RankPolicy};
use crate::nn::{train, Classifier, MlpModel, TrainConfig, TrainReport};
use crate::scaling::{insert_scaling, DistillReport, GInit, ScaledNetwork};
use crate::seed::{derive, SeedLog};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Freshly sampled from the train/test seed streams.
    Yinyang { train_samples: usize, test_samples: usize },
    /// Read from the local cache, downloaded on first use.
    Mnist,
}

impl DatasetConfig {
    pub fn id(&self) -> &'static str {
        match self {
            DatasetConfig::Yinyang { .. } => "yinyang",
            DatasetConfig::Mnist => "mnist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub k: usize,
    /// Layer replaced when a command is not given `--layer`.
    pub target_index: usize,
    #[serde(default)]
    pub init: GInit,
    pub train: TrainConfig,
    /// Per-layer replacements for `train`, keyed by layer index.
    #[serde(default)]
    pub layer_train: BTreeMap<usize, TrainConfig>,
    /// Independent distillations per layer; the lowest final loss is kept.
    #[serde(default = "one")]
    pub restarts: usize,
}

impl ScalingConfig {
    pub fn train_for(&self, layer: usize) -> &TrainConfig {
        self.layer_train.get(&layer).unwrap_or(&self.train)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdConfig {
    pub h: usize,
    pub r: usize,
    #[serde(default)]
    pub rank: RankPolicy,
    #[serde(default)]
    pub clamp_relu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub layers: Vec<usize>,
    #[serde(default = "default_sweep_h")]
    pub h: Vec<usize>,
    #[serde(default = "default_sweep_r")]
    pub r: Vec<usize>,
}

fn default_sweep_h() -> Vec<usize> {
    crate::analysis::DEFAULT_SWEEP_H.to_vec()
}

fn default_sweep_r() -> Vec<usize> {
    crate::analysis::DEFAULT_SWEEP_R.to_vec()
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    /// Layer widths, input first.
    pub architecture: Vec<usize>,
    pub train: TrainConfig,
    /// Independent training runs; the one with the lowest final training
    /// loss is kept.
    #[serde(default = "one")]
    pub restarts: usize,
    pub scaling: ScalingConfig,
    pub dmd: DmdConfig,
    pub sweep: SweepGrid,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.architecture.len() < 2 || self.architecture.contains(&0) {
            return Err(Error::Config(format!("bad architecture {:?}", self.architecture)));
        }
        if self.restarts == 0 || self.scaling.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        self.train.validate()?;
        self.scaling.train.validate()?;
        for t in self.scaling.layer_train.values() {
            t.validate()?;
        }
        if self.scaling.k == 0 {
            return Err(Error::Config("scaling.k must be positive".into()));
        }
        let hidden = 1..self.architecture.len() - 2;
        for layer in std::iter::once(&self.scaling.target_index).chain(&self.sweep.layers) {
            if !hidden.contains(layer) {
                return Err(Error::Config(format!(
                    "layer {layer} is not a replaceable hidden layer (valid: {hidden:?})"
                )));
            }
        }
        if self.dmd.h == 0 || self.dmd.r == 0 {
            return Err(Error::Config("dmd.h and dmd.r must be positive".into()));
        }
        if let DatasetConfig::Yinyang { train_samples, test_samples } = self.dataset {
            if train_samples == 0 || test_samples == 0 {
                return Err(Error::Config("yinyang sample counts must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedLog {
        SeedLog::new(self.seed)
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            dataset: self.dataset.id().to_string(),
            layers: self.sweep.layers.clone(),
            h: self.sweep.h.clone(),
            r: self.sweep.r.clone(),
            rank: self.dmd.rank,
            clamp_relu: self.dmd.clamp_relu,
        }
    }
}

pub fn load_datasets(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let seeds = cfg.seeds();
    let (train, test) = match cfg.dataset {
        DatasetConfig::Yinyang { train_samples, test_samples } => (
            generate_yinyang(train_samples, seeds.train_data)?,
            generate_yinyang(test_samples, seeds.test_data)?,
        ),
        DatasetConfig::Mnist => load_or_fetch_mnist()?,
    };
    let want = cfg.architecture[0];
    if train.n_features() != want {
        return Err(Error::Config(format!(
            "{} has {} features but the architecture starts at {want}",
            cfg.dataset.id(),
            train.n_features()
        )));
    }
    Ok((train, test))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineSummary {
    /// Index of the kept restart.
    pub restart: usize,
    /// Final training loss of every restart.
    pub restart_losses: Vec<f64>,
    pub report: TrainReport,
}

/// Restart i initializes from `derive(init, i)` and shuffles with
/// `derive(shuffle, i)`. Ties keep the earliest restart.
pub fn train_baseline(cfg: &RunConfig, data: &LabeledDataset) -> Result<(MlpModel, BaselineSummary)> {
    let seeds = cfg.seeds();
    let mut best: Option<(f64, usize, MlpModel, TrainReport)> = None;
    let mut losses = Vec::with_capacity(cfg.restarts);
    for i in 0..cfg.restarts {
        let mut model = MlpModel::init(&cfg.architecture, derive(seeds.init, i as u64))?;
        let report = train(&mut model, data, &cfg.train, derive(seeds.shuffle, i as u64))?;
        let loss = report.final_loss().unwrap_or(f64::INFINITY);
        losses.push(loss);
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, i, model, report));
        }
    }
    let (_, restart, model, report) = best.expect("restarts ≥ 1");
    Ok((
        model,
        BaselineSummary {
            restart,
            restart_losses: losses,
            report,
        },
    ))
}

/// Inserts and distills `k` scaling layers before `layer`. Restart 0 seeds
/// from `derive(scaling_init, layer)` and `derive(distill_shuffle, layer)`;
/// restart i > 0 derives stream i from each of those. Ties keep the earliest.
pub fn scale_layer(
    cfg: &RunConfig,
    model: &MlpModel,
    layer: usize,
    data: &LabeledDataset,
) -> Result<(ScaledNetwork, DistillReport)> {
    let seeds = cfg.seeds();
    let init_base = derive(seeds.scaling_init, layer as u64);
    let shuffle_base = derive(seeds.distill_shuffle, layer as u64);
    let pick = |base: u64, i: usize| if i == 0 { base } else { derive(base, i as u64) };
    let mut best: Option<(ScaledNetwork, DistillReport)> = None;
    for i in 0..cfg.scaling.restarts {
        let mut scaled = insert_scaling(model, layer, cfg.scaling.k, cfg.scaling.init, pick(init_base, i))?;
        let report = scaled.distill(data, cfg.scaling.train_for(layer), pick(shuffle_base, i))?;
        if best.as_ref().is_none_or(|b| report.final_loss < b.1.final_loss) {
            best = Some((scaled, report));
        }
    }
    Ok(best.expect("restarts ≥ 1"))
}

/// Exact DMD on the Hankelized trajectories of the first `r` inputs.
pub fn fit_layer(
    scaled: &ScaledNetwork,
    inputs: &crate::linalg::RealMatrix,
    h: usize,
    r: usize,
    rank: RankPolicy,
) -> Result<DmdModel> {
    let batch = collect_trajectories(scaled, inputs, r)?;
    fit_dmd(&hankelize(&batch, h)?, rank)
}

pub fn replace_layer(scaled: &ScaledNetwork, dmd: &DmdModel, clamp_relu: bool) -> Result<HybridModel> {
    build_hybrid(scaled, dmd, clamp_relu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Model,
    Scaled,
    Dmd,
    Hybrid,
    Eval,
}

/// On-disk wrapper of every artifact: its kind, the run's seeds, and
/// identifying parameters (layer, h, r, …) alongside the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub schema_version: u32,
    pub kind: ArtifactKind,
    pub seeds: SeedLog,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub body: serde_json::Value,
}

impl Artifact {
    pub fn new(kind: ArtifactKind, seeds: SeedLog, body: impl Serialize) -> Result<Self> {
        Ok(Artifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            kind,
            seeds,
            meta: BTreeMap::new(),
            body: serde_json::to_value(body)?,
        })
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Result<Self> {
        self.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }

    pub fn model(model: &MlpModel, seeds: SeedLog) -> Result<Self> {
        Self::new(ArtifactKind::Model, seeds, model.to_doc())
    }

    pub fn scaled(scaled: &ScaledNetwork, seeds: SeedLog) -> Result<Self> {
        Self::new(ArtifactKind::Scaled, seeds, scaled.to_doc())?.with("layer", scaled.target_index)
    }

    pub fn dmd(dmd: &DmdModel, layer: usize, r: usize, seeds: SeedLog) -> Result<Self> {
        Self::new(ArtifactKind::Dmd, seeds, dmd.to_doc())?
            .with("layer", layer)?
            .with("h", dmd.h)?
            .with("r", r)
    }

    pub fn hybrid(hybrid: &HybridModel, r: usize, seeds: SeedLog) -> Result<Self> {
        Self::new(ArtifactKind::Hybrid, seeds, hybrid.to_doc())?
            .with("layer", hybrid.target_index)?
            .with("h", hybrid.h())?
            .with("r", r)
    }

    fn expect(&self, kind: ArtifactKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!("expected a {kind:?} artifact, found {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        self.expect(ArtifactKind::Model)?;
        MlpModel::from_doc(&serde_json::from_value(self.body.clone())?)
    }

    pub fn to_scaled(&self) -> Result<ScaledNetwork> {
        self.expect(ArtifactKind::Scaled)?;
        ScaledNetwork::from_doc(&serde_json::from_value(self.body.clone())?)
    }

    pub fn to_dmd(&self) -> Result<DmdModel> {
        self.expect(ArtifactKind::Dmd)?;
        DmdModel::from_doc(&serde_json::from_value(self.body.clone())?)
    }

    pub fn to_hybrid(&self) -> Result<HybridModel> {
        self.expect(ArtifactKind::Hybrid)?;
        HybridModel::from_doc(&serde_json::from_value(self.body.clone())?)
    }

    /// Any evaluable artifact as a classifier.
    pub fn to_classifier(&self) -> Result<Box<dyn Classifier>> {
        Ok(match self.kind {
            ArtifactKind::Model => Box::new(self.to_model()?),
            ArtifactKind::Scaled => Box::new(self.to_scaled()?),
            ArtifactKind::Hybrid => Box::new(self.to_hybrid()?),
            other => {
                return Err(Error::Config(format!("a {other:?} artifact is not a classifier")))
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let art: Artifact = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if art.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("artifact schema_version {}", art.schema_version),
            });
        }
        Ok(art)
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Conventional artifact file names inside the output directory.
pub mod paths {
    use std::path::{Path, PathBuf};

    pub fn model(out: &Path) -> PathBuf {
        out.join("model.json")
    }

    pub fn scaled(out: &Path, layer: usize) -> PathBuf {
        out.join(format!("scaled_L{layer}.json"))
    }

    pub fn dmd(out: &Path, layer: usize, h: usize, r: usize) -> PathBuf {
        out.join(format!("dmd_L{layer}_h{h}_r{r}.json"))
    }

    pub fn hybrid(out: &Path, layer: usize, h: usize, r: usize) -> PathBuf {
        out.join(format!("hybrid_L{layer}_h{h}_r{r}.json"))
    }
}
