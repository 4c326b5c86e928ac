//! The historical companion-matrix form of DMD, kept as a small-scale oracle.
//!
//! With snapshots `D = [d_0 ⋯ d_{n−1}]` and `D′ = [d_1 ⋯ d_n]`, `D′ = D C`
//! where C shifts columns (ones on the sub-diagonal) and its last column `c`
//! is the least-squares fit of `d_n` by the earlier snapshots.

use num_complex::Complex64;

use super::HankelEmbedding;
use crate::error::{Error, Result};
use crate::linalg::{eig_general, lstsq, RealMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct CompanionModel {
    /// Last column of C, `c_0 … c_{n−1}`.
    pub coefficients: Vec<f64>,
    /// Eigenvalues of C, descending modulus.
    pub eigenvalues: Vec<Complex64>,
}

impl CompanionModel {
    pub fn companion_matrix(&self) -> RealMatrix {
        let n = self.coefficients.len();
        let mut c = RealMatrix::zeros(n, n);
        for i in 1..n {
            c[(i, i - 1)] = 1.0;
        }
        for (i, v) in self.coefficients.iter().enumerate() {
            c[(i, n - 1)] = *v;
        }
        c
    }
}

/// Fits the companion form to the single trajectory of `emb`.
pub fn fit_companion(emb: &HankelEmbedding) -> Result<CompanionModel> {
    if emb.blocks.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "companion DMD takes one trajectory, got {}",
            emb.blocks.len()
        )));
    }
    let block = &emb.blocks[0];
    let w = block.cols();
    if w < 2 {
        return Err(Error::InvalidArgument("companion DMD needs at least two windows".into()));
    }
    let n = w - 1;
    let d = block.columns(0, n);
    let last = block.columns(n, w);
    let coefficients = lstsq(&d, &last)?.into_vec();
    let mut model = CompanionModel {
        coefficients,
        eigenvalues: Vec::new(),
    };
    model.eigenvalues = eig_general(&model.companion_matrix())?.values;
    Ok(model)
}
