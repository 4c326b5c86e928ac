//! Dense real/complex kernels: thin SVD, nonsymmetric eigendecomposition,
//! pseudoinverse and least squares.

mod cqr;
mod eig;
mod matrix;
mod svd;

pub use cqr::ComplexLeastSquares;
pub use eig::{compare_eigenvalues, eig_general, EigResult, EIG_ITERATIONS_PER_ROW};
pub use matrix::{dot, gemm, gemm_into, norm2, ComplexMatrix, RealMatrix};
pub use svd::{thin_svd, SvdResult, SVD_MAX_SWEEPS, SVD_TOL};

use crate::error::{Error, Result};

/// Moore–Penrose pseudoinverse; singular values below `rcond · σ_max` are
/// treated as zero.
pub fn pinv(a: &RealMatrix, rcond: f64) -> Result<RealMatrix> {
    if !(rcond > 0.0) {
        return Err(Error::InvalidArgument(format!("pinv: rcond must be positive, got {rcond}")));
    }
    let svd = thin_svd(a)?;
    let cutoff = rcond * svd.sigma.first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = svd
        .sigma
        .iter()
        .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    // A⁺ = V Σ⁺ Uᵀ
    let v_scaled = svd.vt.transpose().scale_cols(&inv);
    gemm(1.0, &v_scaled, false, &svd.u, true)
}

/// Default cutoff for [`lstsq`]: machine epsilon scaled by the larger dimension.
pub fn default_rcond(a: &RealMatrix) -> f64 {
    f64::EPSILON * a.rows().max(a.cols()) as f64
}

/// Minimum-norm `X` minimizing `‖A X − B‖_F`, via the SVD pseudoinverse.
pub fn lstsq(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "lstsq",
            format!("A has {} rows but B has {}", a.rows(), b.rows()),
        ));
    }
    pinv(a, default_rcond(a))?.matmul(b)
}
