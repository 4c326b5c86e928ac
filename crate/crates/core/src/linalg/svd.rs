//! Thin SVD by QR-preconditioned one-sided Jacobi.
//!
//! For a tall `A` (m >= n) the columns are first ordered by decreasing norm and
//! reduced with Householder QR, `A P = Q R`. One-sided Jacobi then
//! orthogonalizes the columns of `Rᵀ`, which converges in a handful of sweeps
//! because `Rᵀ` is already close to having orthogonal columns. Wide inputs are
//! handled through the transpose.

use super::matrix::{dot, RealMatrix};
use crate::error::{Error, Result};

/// Pairwise relative off-diagonal threshold below which a column pair counts
/// as orthogonal.
pub const SVD_TOL: f64 = 1e-12;
pub const SVD_MAX_SWEEPS: usize = 100;

/// Squared column norm below which rotations lose all precision (the entries
/// are subnormal). The input is scaled to unit max-abs first, so such a
/// column is numerically zero.
const NEGLIGIBLE_SQ: f64 = f64::MIN_POSITIVE / f64::EPSILON;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// m × p, orthonormal columns.
    pub u: RealMatrix,
    /// Descending, non-negative; length p = min(m, n).
    pub sigma: Vec<f64>,
    /// p × n, orthonormal rows.
    pub vt: RealMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> RealMatrix {
        self.u
            .scale_cols(&self.sigma)
            .matmul(&self.vt)
            .expect("svd factors are conformant")
    }
}

pub fn thin_svd(a: &RealMatrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "thin_svd: {}x{} matrix has non-finite entries",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let s = svd_tall(&a.transpose()).map_err(|e| match e {
            Error::NoConvergence { op, iterations, .. } => Error::NoConvergence {
                op,
                rows: a.rows(),
                cols: a.cols(),
                iterations,
            },
            other => other,
        })?;
        Ok(SvdResult {
            u: s.vt.transpose(),
            sigma: s.sigma,
            vt: s.u.transpose(),
        })
    }
}

fn svd_tall(a: &RealMatrix) -> Result<SvdResult> {
    let (m, n) = a.shape();

    let amax = a.max_abs();
    let scale = if amax > 0.0 && (1.0 / amax).is_finite() { 1.0 / amax } else { 1.0 };

    // Column-major working copy, columns ordered by decreasing norm.
    let mut norms: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, (0..m).map(|i| a[(i, j)] * a[(i, j)] * scale * scale).sum::<f64>()))
        .collect();
    norms.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let perm: Vec<usize> = norms.iter().map(|&(j, _)| j).collect();
    let mut qr = vec![0.0; m * n];
    for (c, &j) in perm.iter().enumerate() {
        for i in 0..m {
            qr[c * m + i] = a[(i, j)] * scale;
        }
    }

    let taus = householder_qr(&mut qr, m, n);

    // X = Rᵀ, column-major: column p of X is row p of R.
    let mut x = vec![0.0; n * n];
    for p in 0..n {
        for i in p..n {
            x[p * n + i] = qr[i * m + p];
        }
    }
    let mut j_acc = vec![0.0; n * n];
    for i in 0..n {
        j_acc[i * n + i] = 1.0;
    }

    one_sided_jacobi(&mut x, &mut j_acc, n, n).map_err(|sweeps| Error::NoConvergence {
        op: "thin_svd",
        rows: m,
        cols: n,
        iterations: sweeps,
    })?;

    let mut sigma: Vec<f64> = (0..n).map(|p| dot(&x[p * n..(p + 1) * n], &x[p * n..(p + 1) * n])).collect();

    // Ũ (n×n, column-major) from the orthogonalized columns.
    let mut ut = vec![0.0; n * n];
    let mut missing = Vec::new();
    for p in 0..n {
        if sigma[p] <= NEGLIGIBLE_SQ {
            sigma[p] = 0.0;
            missing.push(p);
        } else {
            sigma[p] = sigma[p].sqrt();
            let inv = 1.0 / sigma[p];
            for i in 0..n {
                ut[p * n + i] = x[p * n + i] * inv;
            }
        }
    }
    complete_orthonormal(&mut ut, n, &missing);

    // U = Q [J; 0], column-major m×n.
    let mut u = vec![0.0; m * n];
    for c in 0..n {
        u[c * m..c * m + n].copy_from_slice(&j_acc[c * n..(c + 1) * n]);
    }
    apply_q(&qr, &taus, m, n, &mut u, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| sigma[q].total_cmp(&sigma[p]).then(p.cmp(&q)));

    let mut u_out = RealMatrix::zeros(m, n);
    let mut vt_out = RealMatrix::zeros(n, n);
    let mut sigma_out = Vec::with_capacity(n);
    for (k, &p) in order.iter().enumerate() {
        sigma_out.push(sigma[p] / scale);
        for i in 0..m {
            u_out[(i, k)] = u[p * m + i];
        }
        // V[perm[i], k] = Ũ[i, p]
        for i in 0..n {
            vt_out[(k, perm[i])] = ut[p * n + i];
        }
    }
    Ok(SvdResult {
        u: u_out,
        sigma: sigma_out,
        vt: vt_out,
    })
}

/// In-place Householder QR of a column-major m×n matrix (m >= n). On return the
/// upper triangle holds R and the strict lower part holds the reflector tails
/// (implicit leading 1). Returns the reflector scales.
fn householder_qr(a: &mut [f64], m: usize, n: usize) -> Vec<f64> {
    let mut taus = vec![0.0; n];
    for j in 0..n {
        let (head, tail) = a.split_at_mut((j + 1) * m);
        let col = &mut head[j * m + j..(j + 1) * m];
        let norm = dot(col, col).sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = col[0];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        let denom = x0 - alpha;
        if denom == 0.0 {
            continue;
        }
        let inv = 1.0 / denom;
        col[1..].iter_mut().for_each(|v| *v *= inv);
        col[0] = alpha;
        let tau = (alpha - x0) / alpha;
        taus[j] = tau;
        let v_tail = &col[1..];
        for k in 0..(n - j - 1) {
            let other = &mut tail[k * m + j..(k + 1) * m];
            let w = other[0] + dot(v_tail, &other[1..]);
            let f = tau * w;
            other[0] -= f;
            for (o, v) in other[1..].iter_mut().zip(v_tail) {
                *o -= f * v;
            }
        }
    }
    taus
}

/// Applies Q = H_0 H_1 ⋯ H_{n-1} to each of `ncols` column-major columns of length m.
fn apply_q(qr: &[f64], taus: &[f64], m: usize, n: usize, target: &mut [f64], ncols: usize) {
    for j in (0..n).rev() {
        let tau = taus[j];
        if tau == 0.0 {
            continue;
        }
        let v_tail = &qr[j * m + j + 1..(j + 1) * m];
        for c in 0..ncols {
            let col = &mut target[c * m + j..(c + 1) * m];
            let w = col[0] + dot(v_tail, &col[1..]);
            let f = tau * w;
            col[0] -= f;
            for (o, v) in col[1..].iter_mut().zip(v_tail) {
                *o -= f * v;
            }
        }
    }
}

/// Cyclic one-sided Jacobi on the `n` column-major columns (each of length
/// `len`) of `x`, applying the same rotations to the columns of `acc`
/// (each of length `n`). Returns the sweep count on failure.
fn one_sided_jacobi(x: &mut [f64], acc: &mut [f64], len: usize, n: usize) -> Result<(), usize> {
    let mut norms = vec![0.0; n];
    for _ in 0..SVD_MAX_SWEEPS {
        for p in 0..n {
            let c = &x[p * len..(p + 1) * len];
            norms[p] = dot(c, c);
        }
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= NEGLIGIBLE_SQ || beta <= NEGLIGIBLE_SQ {
                    continue;
                }
                let gamma = dot(&x[p * len..(p + 1) * len], &x[q * len..(q + 1) * len]);
                if gamma.abs() <= SVD_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(x, p, q, len, c, s);
                rotate_pair(acc, p, q, n, c, s);
                // The update α − tγ cancels for columns at rounding level.
                let cp = &x[p * len..(p + 1) * len];
                norms[p] = dot(cp, cp);
                let cq = &x[q * len..(q + 1) * len];
                norms[q] = dot(cq, cq);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(SVD_MAX_SWEEPS)
}

#[inline]
fn rotate_pair(buf: &mut [f64], p: usize, q: usize, len: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (lo, hi) = buf.split_at_mut(q * len);
    let a = &mut lo[p * len..(p + 1) * len];
    let b = &mut hi[..len];
    for (ai, bi) in a.iter_mut().zip(b.iter_mut()) {
        let t = *ai;
        *ai = c * t - s * *bi;
        *bi = s * t + c * *bi;
    }
}

/// Fills the listed columns of a column-major n×n matrix with unit vectors
/// orthogonal to every other column.
fn complete_orthonormal(q: &mut [f64], n: usize, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let mut filled: Vec<usize> = (0..n).filter(|c| !missing.contains(c)).collect();
    for &target in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut v = vec![0.0; n];
            v[e] = 1.0;
            // Two passes of Gram-Schmidt for numerical orthogonality.
            for _ in 0..2 {
                for &c in &filled {
                    let col = &q[c * n..(c + 1) * n];
                    let proj = dot(col, &v);
                    v.iter_mut().zip(col).for_each(|(vi, ci)| *vi -= proj * ci);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if best.as_ref().map_or(true, |(b, _)| norm > *b) {
                best = Some((norm, v));
            }
            if norm > 0.7 {
                break;
            }
        }
        let (norm, v) = best.expect("n >= 1");
        for i in 0..n {
            q[target * n + i] = v[i] / norm;
        }
        filled.push(target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(m: &RealMatrix) -> f64 {
        let g = m.transpose().matmul(m).unwrap();
        g.sub(&RealMatrix::identity(g.rows())).unwrap().max_abs()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let s = thin_svd(&RealMatrix::identity(3)).unwrap();
        assert_eq!(s.sigma.len(), 3);
        for v in &s.sigma {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_singular_values_and_vectors() {
        let s = thin_svd(&RealMatrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        for (got, want) in s.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        // Singular vectors are the identity up to sign.
        for i in 0..3 {
            assert!((s.u[(i, i)].abs() - 1.0).abs() < 1e-14);
            assert!((s.vt[(i, i)].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_wide_matrix_reconstructs() {
        let a = random(8, 12, 7);
        let s = thin_svd(&a).unwrap();
        assert_eq!(s.u.shape(), (8, 8));
        assert_eq!(s.vt.shape(), (8, 12));
        let err = s.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm().max(1.0);
        assert!(err < 1e-10, "residual {err}");
        assert!(orthonormality_error(&s.u) < 1e-10);
        assert!(orthonormality_error(&s.vt.transpose()) < 1e-10);
    }

    #[test]
    fn rank_deficient_gets_orthonormal_completion() {
        // Two identical columns and a zero column.
        let a = RealMatrix::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![3.0, 3.0, 0.0],
            vec![4.0, 4.0, 0.0],
        ])
        .unwrap();
        let s = thin_svd(&a).unwrap();
        assert!(s.sigma[1].abs() < 1e-12 && s.sigma[2] == 0.0);
        assert!(orthonormality_error(&s.u) < 1e-10);
        assert!(orthonormality_error(&s.vt.transpose()) < 1e-10);
        let err = s.reconstruct().sub(&a).unwrap().frobenius_norm();
        assert!(err < 1e-10);
    }

    #[test]
    fn zero_matrix() {
        let a = RealMatrix::zeros(3, 2);
        let s = thin_svd(&a).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(orthonormality_error(&s.u) < 1e-12);
        assert!(orthonormality_error(&s.vt.transpose()) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = RealMatrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(thin_svd(&a), Err(Error::InvalidArgument(_))));
    }
}
