//! Exact DMD on delay-embedded snapshot pairs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::HankelEmbedding;
use crate::error::{Error, Result};
use crate::linalg::{eig_general, gemm, thin_svd, ComplexLeastSquares, ComplexMatrix, RealMatrix};

/// Default fraction of Σσ² the truncation keeps.
pub const DEFAULT_ENERGY: f64 = 0.999_999;
/// Singular values below `SIGMA_DROP · σ_max` are always discarded.
pub const SIGMA_DROP: f64 = 1e-10;
/// Relative pivot threshold of the mode-basis least-squares solve.
pub const MODE_RCOND: f64 = 1e-12;
/// Largest tolerated `|Im|` of a prediction, relative to its norm.
pub const IMAG_TOLERANCE: f64 = 1e-6;

/// How a query window is expressed in the mode basis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitudes {
    /// `ξ = (W Λ)⁻¹ U_rᵀ x`, the coordinates of the window's POD projection in
    /// the eigenbasis of Ã. Then `Φ Λ ξ = B U_rᵀ x` with `B = Φ W⁻¹` real, so
    /// the one-step map is the least-squares operator `X′ X_r⁺`. It is applied
    /// as `B_last U_rᵀ` because W is often badly conditioned.
    #[default]
    Projected,
    /// `ξ = Φ⁺ x`: least squares against the modes themselves.
    ModePinv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RankPolicy {
    /// Keep exactly `p` singular values (capped by the number available).
    Fixed(usize),
    /// Smallest `p` with `Σ_{i<p} σ_i² ≥ τ · Σ σ_i²`.
    Energy(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy(DEFAULT_ENERGY)
    }
}

fn choose_rank(sigma: &[f64], policy: RankPolicy) -> Result<usize> {
    let smax = sigma[0];
    let usable = sigma.iter().take_while(|&&s| s >= SIGMA_DROP * smax && s > 0.0).count();
    let p = match policy {
        RankPolicy::Fixed(p) => {
            if p == 0 {
                return Err(Error::InvalidArgument("fixed rank must be positive".into()));
            }
            p.min(usable)
        }
        RankPolicy::Energy(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidArgument(format!("energy must lie in (0, 1], got {tau}")));
            }
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut p = sigma.len();
            for (i, s) in sigma.iter().enumerate() {
                acc += s * s;
                if acc >= tau * total {
                    p = i + 1;
                    break;
                }
            }
            p.min(usable)
        }
    };
    Ok(p.max(1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmdModel {
    pub h: usize,
    pub d1: usize,
    pub rank: usize,
    /// Descending modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Φ, (h·d1) × rank; column k pairs with `eigenvalues[k]`.
    pub modes: ComplexMatrix,
    /// Mean one-step error ‖prediction − successor‖₂ over the training pairs.
    pub residual: f64,
    /// Every singular value of the snapshot matrix; the first `rank` were kept.
    pub singular_values: Vec<f64>,
    /// U_r, (h·d1) × rank: leading left singular vectors of the snapshot matrix.
    pub projector: RealMatrix,
    /// `B_last = Φ_last W⁻¹`, d1 × rank.
    pub reduced_step: RealMatrix,
    pub amplitudes: Amplitudes,
    /// Last d1 rows of the lifted one-step map, split into real and imaginary parts.
    step_re: RealMatrix,
    step_im: RealMatrix,
}

/// Snapshot pairs: every window but each sample's last, and its successor.
fn pairs(emb: &HankelEmbedding) -> Result<(RealMatrix, RealMatrix)> {
    let w = emb.windows_per_sample();
    if w < 2 {
        return Err(Error::InvalidArgument("each sample needs at least two windows".into()));
    }
    let xs: Vec<RealMatrix> = emb.blocks.iter().map(|b| b.columns(0, w - 1)).collect();
    let ys: Vec<RealMatrix> = emb.blocks.iter().map(|b| b.columns(1, w)).collect();
    Ok((RealMatrix::hstack(&xs)?, RealMatrix::hstack(&ys)?))
}

/// Exact DMD: with `X ≈ U_p Σ_p V_pᵀ`, `Ã = U_pᵀ X′ V_p Σ_p⁻¹ = W Λ W⁻¹` and
/// the exact modes are `Φ = X′ V_p Σ_p⁻¹ W`.
pub fn fit_dmd(emb: &HankelEmbedding, policy: RankPolicy) -> Result<DmdModel> {
    fit_dmd_with(emb, policy, Amplitudes::default())
}

pub fn fit_dmd_with(emb: &HankelEmbedding, policy: RankPolicy, amplitudes: Amplitudes) -> Result<DmdModel> {
    let (x, xp) = pairs(emb)?;
    if x.max_abs() == 0.0 {
        return Err(Error::Degenerate("snapshot matrix X is identically zero".into()));
    }
    let svd = thin_svd(&x)?;
    let p = choose_rank(&svd.sigma, policy)?;
    let u_p = svd.u.columns(0, p);
    let inv_sigma: Vec<f64> = svd.sigma[..p].iter().map(|s| 1.0 / s).collect();
    // B = X′ V_p Σ_p⁻¹
    let b = gemm(1.0, &xp, false, &svd.vt.row_range(0, p), true)?.scale_cols(&inv_sigma);
    let a_tilde = gemm(1.0, &u_p, true, &b, false)?;
    let eig = eig_general(&a_tilde)?;
    let modes = ComplexMatrix::from_real(&b).matmul(&eig.vectors)?;
    let m = emb.lifted_dim();
    let mut model = DmdModel::assemble(
        emb.h,
        emb.d1,
        eig.values,
        modes,
        0.0,
        svd.sigma,
        u_p,
        b.row_range(m - emb.d1, m),
        amplitudes,
    )?;

    let windows = x.transpose();
    let pred = model.predict_batch(&windows)?;
    let truth = xp.row_range(m - emb.d1, m).transpose();
    let diff = pred.sub(&truth)?;
    model.residual = (0..diff.rows()).map(|i| crate::linalg::norm2(diff.row(i))).sum::<f64>()
        / diff.rows() as f64;
    Ok(model)
}

impl DmdModel {
    fn assemble(
        h: usize,
        d1: usize,
        eigenvalues: Vec<Complex64>,
        modes: ComplexMatrix,
        residual: f64,
        singular_values: Vec<f64>,
        projector: RealMatrix,
        reduced_step: RealMatrix,
        amplitudes: Amplitudes,
    ) -> Result<Self> {
        let m = h * d1;
        let rank = eigenvalues.len();
        if modes.rows() != m || modes.cols() != rank {
            return Err(Error::shape(
                "DmdModel",
                format!(
                    "modes are {}x{}, expected {m}x{rank}",
                    modes.rows(),
                    modes.cols()
                ),
            ));
        }
        if projector.shape() != (m, rank) {
            return Err(Error::shape(
                "DmdModel",
                format!("projector is {:?}, expected ({m}, {rank})", projector.shape()),
            ));
        }
        if reduced_step.shape() != (d1, rank) {
            return Err(Error::shape(
                "DmdModel",
                format!("reduced step is {:?}, expected ({d1}, {rank})", reduced_step.shape()),
            ));
        }
        let (step_re, step_im) = match amplitudes {
            Amplitudes::ModePinv => {
                // K = Φ_last Λ; the step operator is K Φ⁺.
                let mut k = modes.row_range(m - d1, m);
                for i in 0..d1 {
                    for (j, lambda) in eigenvalues.iter().enumerate() {
                        k[(i, j)] *= lambda;
                    }
                }
                let step = ComplexLeastSquares::new(&modes, MODE_RCOND)?.left_apply_pinv(&k)?;
                (step.re(), step.im())
            }
            Amplitudes::Projected => (
                gemm(1.0, &reduced_step, false, &projector, true)?,
                RealMatrix::zeros(d1, m),
            ),
        };
        Ok(DmdModel {
            h,
            d1,
            rank,
            eigenvalues,
            modes,
            residual,
            singular_values,
            projector,
            reduced_step,
            amplitudes,
            step_re,
            step_im,
        })
    }

    pub fn lifted_dim(&self) -> usize {
        self.h * self.d1
    }

    /// Real part of the d1 × (h·d1) one-step operator.
    pub fn step_operator(&self) -> &RealMatrix {
        &self.step_re
    }

    /// One step from each row of `windows` (batch × h·d1); returns batch × d1.
    /// Each window is `[x_t; …; x_{t+h−1}]`, the result estimates `x_{t+h}`.
    pub fn predict_batch(&self, windows: &RealMatrix) -> Result<RealMatrix> {
        if windows.cols() != self.lifted_dim() {
            return Err(Error::shape(
                "predict_step",
                format!("window length {} but model lifts to {}", windows.cols(), self.lifted_dim()),
            ));
        }
        let re = gemm(1.0, windows, false, &self.step_re, true)?;
        let im = gemm(1.0, windows, false, &self.step_im, true)?;
        for i in 0..re.rows() {
            let norm = crate::linalg::norm2(re.row(i)).max(f64::MIN_POSITIVE);
            let worst = im.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if worst > IMAG_TOLERANCE * norm.max(1.0) {
                return Err(Error::Degenerate(format!(
                    "prediction {i} has imaginary part {worst:e} against norm {norm:e}"
                )));
            }
        }
        Ok(re)
    }

    /// One step: amplitudes `ξ` of the window (see [`Amplitudes`]), advanced
    /// lifted state `Φ Λ ξ`, real part of its last d1-block.
    pub fn predict_step(&self, window: &[f64]) -> Result<Vec<f64>> {
        let w = RealMatrix::from_vec(1, window.len(), window.to_vec())?;
        Ok(self.predict_batch(&w)?.into_vec())
    }

    pub fn to_doc(&self) -> DmdDoc {
        DmdDoc {
            h: self.h,
            d1: self.d1,
            rank: self.rank,
            eigenvalues: self.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            modes: ModesDoc {
                rows: self.modes.rows(),
                cols: self.modes.cols(),
                re: self.modes.re().into_vec(),
                im: self.modes.im().into_vec(),
            },
            residual: self.residual,
            singular_values: self.singular_values.clone(),
            amplitudes: self.amplitudes,
            projector: MatrixDoc::from(&self.projector),
            reduced_step: MatrixDoc::from(&self.reduced_step),
        }
    }

    pub fn from_doc(doc: &DmdDoc) -> Result<Self> {
        if doc.eigenvalues.len() != doc.rank {
            return Err(Error::Config(format!(
                "rank {} but {} eigenvalues",
                doc.rank,
                doc.eigenvalues.len()
            )));
        }
        let re = RealMatrix::from_vec(doc.modes.rows, doc.modes.cols, doc.modes.re.clone())?;
        let im = RealMatrix::from_vec(doc.modes.rows, doc.modes.cols, doc.modes.im.clone())?;
        let modes = ComplexMatrix::from_parts(&re, &im)?;
        let eigenvalues = doc.eigenvalues.iter().map(|&[a, b]| Complex64::new(a, b)).collect();
        Self::assemble(
            doc.h,
            doc.d1,
            eigenvalues,
            modes,
            doc.residual,
            doc.singular_values.clone(),
            doc.projector.to_matrix()?,
            doc.reduced_step.to_matrix()?,
            doc.amplitudes,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesDoc {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdDoc {
    pub h: usize,
    pub d1: usize,
    pub rank: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub modes: ModesDoc,
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub amplitudes: Amplitudes,
    pub projector: MatrixDoc,
    pub reduced_step: MatrixDoc,
}

/// Row-major real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&RealMatrix> for MatrixDoc {
    fn from(m: &RealMatrix) -> Self {
        MatrixDoc { rows: m.rows(), cols: m.cols(), data: m.as_slice().to_vec() }
    }
}

impl MatrixDoc {
    pub fn to_matrix(&self) -> Result<RealMatrix> {
        RealMatrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

/// Eigenvalues with their moduli, descending modulus.
pub fn spectrum(model: &DmdModel) -> Vec<SpectrumPoint> {
    model
        .eigenvalues
        .iter()
        .map(|z| SpectrumPoint {
            re: z.re,
            im: z.im,
            modulus: z.norm(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RsvCurves {
    /// top × (number of windows); row i is the i-th right singular vector.
    pub vectors: RealMatrix,
    pub sigma: Vec<f64>,
}

/// Leading right singular vectors of the stacked Hankel matrix. Signs are
/// fixed so each vector's largest-magnitude entry is positive.
pub fn rsv_curves(emb: &HankelEmbedding, top: usize) -> Result<RsvCurves> {
    if top == 0 {
        return Err(Error::InvalidArgument("top must be positive".into()));
    }
    let svd = thin_svd(&emb.stacked()?)?;
    let top = top.min(svd.sigma.len());
    let mut vectors = svd.vt.row_range(0, top);
    for i in 0..top {
        let row = vectors.row_mut(i);
        let lead = row.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if lead < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(RsvCurves {
        vectors,
        sigma: svd.sigma[..top].to_vec(),
    })
}
