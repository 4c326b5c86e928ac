//! Trajectories of a scaled network, delay-coordinate embedding, and
//! dynamic mode decomposition on the embedded snapshots.

mod companion;
mod dmd;

pub use companion::{fit_companion, CompanionModel};
pub use dmd::{
    fit_dmd, fit_dmd_with, rsv_curves, spectrum, Amplitudes, DmdDoc, DmdModel, MatrixDoc, ModesDoc,
    RankPolicy, RsvCurves,
    SpectrumPoint, DEFAULT_ENERGY, IMAG_TOLERANCE, MODE_RCOND, SIGMA_DROP,
};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::scaling::ScaledNetwork;

/// Fills the rows a narrower output layer leaves empty. ReLU outputs are
/// never negative, so the value is unambiguous.
pub const DEFAULT_SENTINEL: f64 = -1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    /// State dimension (input width of the scaled layer).
    pub d1: usize,
    /// Output width of the scaled layer; `d2 ≤ d1`.
    pub d2: usize,
    pub k: usize,
    pub sentinel: f64,
    /// One d1 × (k+2) matrix per sample. Column 0 is the prefix output,
    /// columns 1..=k the scaling layers, column k+1 the layer output padded
    /// with `d1 − d2` sentinels.
    pub per_sample: Vec<RealMatrix>,
}

impl TrajectoryBatch {
    pub fn augment_count(&self) -> usize {
        self.d1 - self.d2
    }

    pub fn snapshots_per_sample(&self) -> usize {
        self.k + 2
    }

    /// `[D_0 D_1 ⋯ D_{r−1}]`, d1 × (k+2)·r.
    pub fn concatenated(&self) -> Result<RealMatrix> {
        RealMatrix::hstack(&self.per_sample)
    }
}

/// Runs the first `r` inputs through the scaled network and records every
/// state along the way.
pub fn collect_trajectories(
    scaled: &ScaledNetwork,
    inputs: &RealMatrix,
    r: usize,
) -> Result<TrajectoryBatch> {
    if r == 0 || r > inputs.rows() {
        return Err(Error::InvalidArgument(format!(
            "r = {r} trajectories requested from {} samples",
            inputs.rows()
        )));
    }
    let (d1, d2, k) = (scaled.d1(), scaled.d2(), scaled.k());
    if d2 > d1 {
        return Err(Error::shape(
            "collect_trajectories",
            format!("layer widens {d1} → {d2}; only d2 ≤ d1 can be augmented"),
        ));
    }
    let states = scaled.snapshots(&inputs.row_range(0, r))?;
    let per_sample = (0..r)
        .map(|j| {
            let mut d = RealMatrix::from_vec(d1, k + 2, vec![DEFAULT_SENTINEL; d1 * (k + 2)])
                .expect("non-empty");
            for (c, s) in states.iter().enumerate() {
                for (i, v) in s.row(j).iter().enumerate() {
                    d[(i, c)] = *v;
                }
            }
            d
        })
        .collect();
    Ok(TrajectoryBatch {
        d1,
        d2,
        k,
        sentinel: DEFAULT_SENTINEL,
        per_sample,
    })
}

/// Per-sample Hankel blocks. Block column `c` stacks snapshots
/// `c, c+1, …, c+h−1` of a single sample.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelEmbedding {
    pub h: usize,
    pub d1: usize,
    /// One (h·d1) × w block per sample, w = snapshots − h + 1.
    pub blocks: Vec<RealMatrix>,
}

impl HankelEmbedding {
    pub fn lifted_dim(&self) -> usize {
        self.h * self.d1
    }

    pub fn windows_per_sample(&self) -> usize {
        self.blocks[0].cols()
    }

    /// All windows side by side.
    pub fn stacked(&self) -> Result<RealMatrix> {
        RealMatrix::hstack(&self.blocks)
    }
}

/// Delay embedding of arbitrary d × T sequences; needs `1 ≤ h ≤ T − 1` so that
/// each sequence yields at least one (window, successor) pair.
pub fn hankelize_sequences(seqs: &[RealMatrix], h: usize) -> Result<HankelEmbedding> {
    let Some(first) = seqs.first() else {
        return Err(Error::InvalidArgument("no sequences to embed".into()));
    };
    let (d, t) = first.shape();
    if seqs.iter().any(|s| s.shape() != (d, t)) {
        return Err(Error::shape("hankelize", "sequences differ in shape"));
    }
    if h == 0 || h + 1 > t {
        return Err(Error::InvalidArgument(format!(
            "delay h = {h} infeasible for {t} snapshots; h must lie in 1..={}",
            t.saturating_sub(1)
        )));
    }
    let w = t - h + 1;
    let blocks = seqs
        .iter()
        .map(|s| {
            let mut b = RealMatrix::zeros(h * d, w);
            for c in 0..w {
                for lag in 0..h {
                    for i in 0..d {
                        b[(lag * d + i, c)] = s[(i, c + lag)];
                    }
                }
            }
            b
        })
        .collect();
    Ok(HankelEmbedding { h, d1: d, blocks })
}

/// Delay embedding of a trajectory batch; the largest feasible `h` is `k + 1`.
pub fn hankelize(batch: &TrajectoryBatch, h: usize) -> Result<HankelEmbedding> {
    if h == 0 || h > batch.k + 1 {
        return Err(Error::InvalidArgument(format!(
            "delay h = {h} infeasible with k = {} scaling layers; max feasible h is {}",
            batch.k,
            batch.k + 1
        )));
    }
    hankelize_sequences(&batch.per_sample, h)
}
