//! Complex least squares by Householder QR with column pivoting.

use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Factorization `A P = Q R` of a complex m×n matrix, truncated at the
/// numerical rank. Solves `min ‖A x − b‖₂` for many right-hand sides.
#[derive(Clone, Debug)]
pub struct ComplexLeastSquares {
    m: usize,
    n: usize,
    rank: usize,
    /// Column-major reflectors: column j holds v_j in rows j.. (v_j[0] = 1 implicit).
    reflectors: Vec<Complex64>,
    taus: Vec<f64>,
    /// Upper-triangular R, row-major rank × rank (leading block only).
    r: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLeastSquares {
    /// `rcond`: columns whose remaining norm falls below `rcond · |R₀₀|` are
    /// treated as dependent.
    pub fn new(a: &ComplexMatrix, rcond: f64) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if !(rcond > 0.0) {
            return Err(Error::InvalidArgument(format!("rcond must be positive, got {rcond}")));
        }
        let mut cols = vec![Complex64::new(0.0, 0.0); m * n];
        for j in 0..n {
            for i in 0..m {
                cols[j * m + i] = a[(i, j)];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n).map(|j| sq_norm(&cols[j * m..(j + 1) * m])).collect();
        let mut ref_norms = norms.clone();
        let steps = m.min(n);
        let mut taus = vec![0.0; steps];
        let mut diag = Vec::with_capacity(steps);
        let mut rank = 0;
        let mut r00 = 0.0;

        for j in 0..steps {
            // Pivot: largest remaining column norm.
            let (piv, _) = norms[j..]
                .iter()
                .enumerate()
                .fold((j, -1.0), |best, (k, &v)| if v > best.1 { (j + k, v) } else { best });
            if piv != j {
                for i in 0..m {
                    cols.swap(j * m + i, piv * m + i);
                }
                perm.swap(j, piv);
                norms.swap(j, piv);
                ref_norms.swap(j, piv);
            }

            let (head, tail) = cols.split_at_mut((j + 1) * m);
            let col = &mut head[j * m + j..(j + 1) * m];
            let xnorm = sq_norm(col).sqrt();
            if j == 0 {
                r00 = xnorm;
            }
            if xnorm == 0.0 || xnorm <= rcond * r00 {
                break;
            }
            let x0 = col[0];
            let phase = if x0.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let alpha = -phase * xnorm;
            let v0 = x0 - alpha;
            let inv_v0 = 1.0 / v0;
            for c in col[1..].iter_mut() {
                *c *= inv_v0;
            }
            // H = I - tau v vᴴ with v[0] = 1; tau = 2 / ‖v‖².
            let vnorm2 = 1.0 + sq_norm(&col[1..]);
            let tau = 2.0 / vnorm2;
            col[0] = alpha;
            taus[j] = tau;
            diag.push(alpha);
            rank = j + 1;

            let v_tail = &col[1..];
            for k in 0..(n - j - 1) {
                let other = &mut tail[k * m + j..(k + 1) * m];
                // w = vᴴ other
                let mut w = other[0];
                for (v, o) in v_tail.iter().zip(&other[1..]) {
                    w += v.conj() * o;
                }
                let f = w * tau;
                other[0] -= f;
                for (o, v) in other[1..].iter_mut().zip(v_tail) {
                    *o -= f * v;
                }
                let idx = j + 1 + k;
                // Norm downdate with periodic recomputation.
                let removed = other[0].norm_sqr();
                norms[idx] -= removed;
                if norms[idx] < 1e-8 * ref_norms[idx] {
                    norms[idx] = sq_norm(&other[1..]);
                    ref_norms[idx] = norms[idx];
                }
            }
        }

        let mut r = vec![Complex64::new(0.0, 0.0); rank * rank];
        for i in 0..rank {
            for j in i..rank {
                r[i * rank + j] = cols[j * m + i];
            }
        }
        debug_assert_eq!(diag.len(), rank);
        Ok(ComplexLeastSquares {
            m,
            n,
            rank,
            reflectors: cols,
            taus,
            r,
            perm,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// Applies Qᴴ to a length-m vector in place.
    pub fn apply_qh(&self, b: &mut [Complex64]) {
        let m = self.m;
        for j in 0..self.rank {
            let v_tail = &self.reflectors[j * m + j + 1..(j + 1) * m];
            let seg = &mut b[j..];
            let mut w = seg[0];
            for (v, o) in v_tail.iter().zip(&seg[1..]) {
                w += v.conj() * o;
            }
            let f = w * self.taus[j];
            seg[0] -= f;
            for (o, v) in seg[1..].iter_mut().zip(v_tail) {
                *o -= f * v;
            }
        }
    }

    /// Applies Q to a length-m vector in place.
    pub fn apply_q(&self, b: &mut [Complex64]) {
        let m = self.m;
        for j in (0..self.rank).rev() {
            let v_tail = &self.reflectors[j * m + j + 1..(j + 1) * m];
            let seg = &mut b[j..];
            let mut w = seg[0];
            for (v, o) in v_tail.iter().zip(&seg[1..]) {
                w += v.conj() * o;
            }
            let f = w * self.taus[j];
            seg[0] -= f;
            for (o, v) in seg[1..].iter_mut().zip(v_tail) {
                *o -= f * v;
            }
        }
    }

    /// Solves `R y = c` for the leading `rank` entries (back substitution).
    pub fn solve_r(&self, c: &mut [Complex64]) {
        let k = self.rank;
        for i in (0..k).rev() {
            let mut s = c[i];
            for j in i + 1..k {
                s -= self.r[i * k + j] * c[j];
            }
            c[i] = s / self.r[i * k + i];
        }
    }

    /// Solves `Xᵀ R = cᵀ` i.e. `y R = c` for a row vector, forward substitution.
    pub fn solve_r_row(&self, c: &mut [Complex64]) {
        let k = self.rank;
        for j in 0..k {
            let mut s = c[j];
            for i in 0..j {
                s -= c[i] * self.r[i * k + j];
            }
            c[j] = s / self.r[j * k + j];
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Basic least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.m {
            return Err(Error::shape(
                "ComplexLeastSquares::solve",
                format!("rhs length {} for {} rows", b.len(), self.m),
            ));
        }
        let mut work = b.to_vec();
        self.apply_qh(&mut work);
        self.solve_r(&mut work[..self.rank]);
        let mut x = vec![Complex64::new(0.0, 0.0); self.n];
        for (k, &p) in self.perm.iter().take(self.rank).enumerate() {
            x[p] = work[k];
        }
        Ok(x)
    }

    /// Explicit `K A⁺` for a k×n left factor `K`, returned as k×m.
    /// Row by row: `K P R⁻¹ [I 0] Qᴴ`.
    pub fn left_apply_pinv(&self, k_mat: &ComplexMatrix) -> Result<ComplexMatrix> {
        if k_mat.cols() != self.n {
            return Err(Error::shape(
                "ComplexLeastSquares::left_apply_pinv",
                format!("left factor has {} columns, expected {}", k_mat.cols(), self.n),
            ));
        }
        let mut out = ComplexMatrix::zeros(k_mat.rows(), self.m);
        let mut row = vec![Complex64::new(0.0, 0.0); self.m];
        for i in 0..k_mat.rows() {
            let src = k_mat.row(i);
            row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            // Permute columns into pivot order, then y R = k.
            let mut y: Vec<Complex64> = self.perm.iter().take(self.rank).map(|&p| src[p]).collect();
            self.solve_r_row(&mut y);
            row[..self.rank].copy_from_slice(&y);
            // (y [I 0]) Qᴴ = (Q (y [I 0])ᴴ)ᴴ
            row.iter_mut().for_each(|z| *z = z.conj());
            self.apply_q(&mut row);
            for (j, z) in row.iter().enumerate() {
                out[(i, j)] = z.conj();
            }
        }
        Ok(out)
    }
}

#[inline]
fn sq_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
