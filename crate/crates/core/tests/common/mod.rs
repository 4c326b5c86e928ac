//! Independent checkers shared by the property tests and the acceptance
//! binary. Each returns an error measure; callers own the tolerance.
#![allow(dead_code)]

use koopnet::koopman::{fit_companion, fit_dmd, hankelize_sequences, DmdModel, HankelEmbedding, RankPolicy};
use koopnet::linalg::{eig_general, pinv, thin_svd, ComplexMatrix, RealMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> RealMatrix {
    RealMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Rank-`r` product with a zeroed row and a duplicated column thrown in,
/// the patterns dead ReLUs produce.
pub fn random_rank_deficient(rng: &mut ChaCha8Rng, m: usize, n: usize, r: usize) -> RealMatrix {
    let b = random_matrix(rng, m, r);
    let c = random_matrix(rng, r, n);
    let mut a = b.matmul(&c).unwrap();
    if m > 1 {
        let zero = rng.random_range(0..m);
        a.row_mut(zero).iter_mut().for_each(|v| *v = 0.0);
    }
    if n > 1 {
        let src = rng.random_range(0..n);
        let dst = (src + 1) % n;
        for i in 0..m {
            a[(i, dst)] = a[(i, src)];
        }
    }
    a
}

pub fn load_fixture(name: &str) -> RealMatrix {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let (rows, cols, data): (usize, usize, Vec<f64>) =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    RealMatrix::from_vec(rows, cols, data).unwrap()
}

fn gram_error(m: &RealMatrix) -> f64 {
    let g = m.transpose().matmul(m).unwrap();
    g.sub(&RealMatrix::identity(g.rows())).unwrap().max_abs()
}

pub struct SvdCheck {
    /// max |A − U Σ Vᵀ| / max |A|
    pub reconstruction: f64,
    /// max |UᵀU − I|
    pub orth_u: f64,
    /// max |V Vᵀ − I|
    pub orth_v: f64,
    pub descending: bool,
}

impl SvdCheck {
    pub fn worst(&self) -> f64 {
        self.reconstruction.max(self.orth_u).max(self.orth_v)
    }
}

pub fn svd_check(a: &RealMatrix) -> SvdCheck {
    let s = thin_svd(a).unwrap();
    let back = s.u.scale_cols(&s.sigma).matmul(&s.vt).unwrap();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    SvdCheck {
        reconstruction: back.sub(a).unwrap().max_abs() / scale,
        orth_u: gram_error(&s.u),
        orth_v: gram_error(&s.vt.transpose()),
        descending: s.sigma.windows(2).all(|w| w[0] >= w[1]) && s.sigma.iter().all(|&v| v >= 0.0),
    }
}

/// max_k ‖A v_k − λ_k v_k‖₂ / (‖A‖_F ‖v_k‖₂)
pub fn eig_residual(a: &RealMatrix) -> f64 {
    let e = eig_general(a).unwrap();
    let ac = ComplexMatrix::from_real(a);
    let fro = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (k, lambda) in e.values.iter().enumerate() {
        let v: Vec<Complex64> = (0..a.rows()).map(|i| e.vectors[(i, k)]).collect();
        let av = ac.matvec(&v).unwrap();
        let r: f64 = av.iter().zip(&v).map(|(x, y)| (x - lambda * y).norm_sqr()).sum::<f64>().sqrt();
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(r / (fro * vn));
    }
    worst
}

/// Largest relative violation of the four Moore–Penrose conditions.
pub fn pinv_check(a: &RealMatrix, rcond: f64) -> f64 {
    let p = pinv(a, rcond).unwrap();
    let ap = a.matmul(&p).unwrap();
    let pa = p.matmul(a).unwrap();
    let na = a.max_abs().max(f64::MIN_POSITIVE);
    let np = p.max_abs().max(f64::MIN_POSITIVE);
    let c1 = ap.matmul(a).unwrap().sub(a).unwrap().max_abs() / na;
    let c2 = pa.matmul(&p).unwrap().sub(&p).unwrap().max_abs() / np;
    let c3 = ap.transpose().sub(&ap).unwrap().max_abs();
    let c4 = pa.transpose().sub(&pa).unwrap().max_abs();
    c1.max(c2).max(c3).max(c4)
}

/// Greedy nearest matching; returns the largest distance.
pub fn spectral_distance(want: &[Complex64], got: &[Complex64]) -> f64 {
    if want.len() != got.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; got.len()];
    let mut worst: f64 = 0.0;
    for w in want {
        let (j, d) = got
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, g)| (j, (g - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Eigenvalues whose pairwise gaps are at least `gap`, inside the unit disk;
/// about half come as complex-conjugate pairs.
pub fn random_stable_spectrum(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<Complex64> {
    loop {
        let mut vals = Vec::with_capacity(n);
        while vals.len() < n {
            let rho = rng.random_range(0.3..0.95);
            if n - vals.len() >= 2 && rng.random_bool(0.5) {
                let theta = rng.random_range(0.3..2.8);
                let z = Complex64::from_polar(rho, theta);
                vals.push(z);
                vals.push(z.conj());
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                vals.push(Complex64::new(sign * rho, 0.0));
            }
        }
        let separated = (0..n).all(|i| (i + 1..n).all(|j| (vals[i] - vals[j]).norm() >= gap));
        if separated {
            return vals;
        }
    }
}

/// Real matrix `S D S⁻¹` with the given spectrum (conjugate pairs adjacent).
pub fn matrix_with_spectrum(rng: &mut ChaCha8Rng, spectrum: &[Complex64]) -> RealMatrix {
    let n = spectrum.len();
    let mut d = RealMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let z = spectrum[i];
        if z.im == 0.0 {
            d[(i, i)] = z.re;
            i += 1;
        } else {
            d[(i, i)] = z.re;
            d[(i, i + 1)] = -z.im;
            d[(i + 1, i)] = z.im;
            d[(i + 1, i + 1)] = z.re;
            i += 2;
        }
    }
    // Well-conditioned similarity: identity plus a modest perturbation.
    let noise = random_matrix(rng, n, n);
    let s = RealMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.3 * noise[(i, j)]);
    let s_inv = pinv(&s, 1e-14).unwrap();
    s.matmul(&d).unwrap().matmul(&s_inv).unwrap()
}

/// Simulates `n` trajectories of `x ↦ A x` from random starts and fits exact
/// DMD at full rank; returns the spectral distance to the truth.
pub fn stable_system_trial(rng: &mut ChaCha8Rng, n: usize) -> f64 {
    let spectrum = random_stable_spectrum(rng, n, 0.05);
    let a = matrix_with_spectrum(rng, &spectrum);
    let steps = n + 2;
    let seqs: Vec<RealMatrix> = (0..n)
        .map(|_| {
            let mut cols = vec![(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()];
            for _ in 1..steps {
                let prev = RealMatrix::from_vec(n, 1, cols.last().unwrap().clone()).unwrap();
                cols.push(a.matmul(&prev).unwrap().into_vec());
            }
            RealMatrix::from_columns(&cols).unwrap()
        })
        .collect();
    let dmd = fit_dmd(&hankelize_sequences(&seqs, 1).unwrap(), RankPolicy::Fixed(n)).unwrap();
    spectral_distance(&spectrum, &dmd.eigenvalues)
}

/// A noiseless scalar signal `Σ c_j λ_j^t` with `d` modes, embedded with
/// h = d over 2d samples so both fits are square. Returns the distance
/// between the companion and exact-DMD spectra, and the distance of the
/// exact-DMD spectrum to the truth.
pub fn companion_trial(rng: &mut ChaCha8Rng, d: usize) -> (f64, f64) {
    let spectrum = random_stable_spectrum(rng, d, 0.1);
    let coeffs: Vec<Complex64> = {
        let mut c = Vec::with_capacity(d);
        let mut i = 0;
        while i < d {
            let z = Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
            if spectrum[i].im == 0.0 {
                c.push(Complex64::new(z.re, 0.0));
                i += 1;
            } else {
                c.push(z);
                c.push(z.conj());
                i += 2;
            }
        }
        c
    };
    let t_len = 2 * d;
    let signal: Vec<f64> = (0..t_len)
        .map(|t| {
            spectrum
                .iter()
                .zip(&coeffs)
                .map(|(l, c)| c * l.powu(t as u32))
                .sum::<Complex64>()
                .re
        })
        .collect();
    let seq = RealMatrix::from_vec(1, t_len, signal).unwrap();
    let emb = hankelize_sequences(&[seq], d).unwrap();
    let companion = fit_companion(&emb).unwrap();
    let exact = fit_dmd(&emb, RankPolicy::Fixed(d)).unwrap();
    (
        spectral_distance(&companion.eigenvalues, &exact.eigenvalues),
        spectral_distance(&spectrum, &exact.eigenvalues),
    )
}

/// Largest distance from an eigenvalue's conjugate to its nearest
/// neighbour in the spectrum, relative to max(1, |λ|).
pub fn conjugate_symmetry_error(values: &[Complex64]) -> f64 {
    values
        .iter()
        .map(|z| {
            let c = z.conj();
            values.iter().map(|w| (w - c).norm()).fold(f64::INFINITY, f64::min) / z.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Recomputes the mean one-step training error with the full-rank
/// least-squares operator `X′_last X⁺` and plain loops, and returns its
/// difference from the fitted model's `residual` relative to the mean
/// target norm. Only meaningful
/// when the fit kept every usable singular value.
pub fn residual_consistency(emb: &HankelEmbedding, dmd: &DmdModel) -> f64 {
    let m = emb.lifted_dim();
    let w = emb.windows_per_sample();
    let x = RealMatrix::hstack(&emb.blocks.iter().map(|b| b.columns(0, w - 1)).collect::<Vec<_>>()).unwrap();
    let xp = RealMatrix::hstack(&emb.blocks.iter().map(|b| b.columns(1, w)).collect::<Vec<_>>()).unwrap();
    let x_pinv = pinv(&x, 1e-10).unwrap();
    let op = xp.row_range(m - emb.d1, m).matmul(&x_pinv).unwrap();
    let mut total = 0.0;
    let mut target = 0.0;
    for c in 0..x.cols() {
        let mut sq = 0.0;
        target += (0..emb.d1).map(|i| xp[(m - emb.d1 + i, c)].powi(2)).sum::<f64>().sqrt();
        for i in 0..emb.d1 {
            let pred: f64 = (0..m).map(|j| op[(i, j)] * x[(j, c)]).sum();
            let d = pred - xp[(m - emb.d1 + i, c)];
            sq += d * d;
        }
        total += sq.sqrt();
    }
    let recomputed = total / x.cols() as f64;
    let scale = (target / x.cols() as f64).max(f64::MIN_POSITIVE);
    (recomputed - dmd.residual).abs() / scale
}
