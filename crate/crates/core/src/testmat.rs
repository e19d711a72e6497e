//! Seeded SPD test matrices.

use crate::sparse::SparseSym;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `tridiag(-1, 2, -1)` of size `n`.
pub fn laplacian_1d(n: usize) -> SparseSym {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    SparseSym::from_triplets(n, &t).expect("1D Laplacian is SPD")
}

/// Five-point Laplacian on a `k × k` grid.
pub fn laplacian_2d(k: usize) -> SparseSym {
    let idx = |i: usize, j: usize| i * k + j;
    let mut t = Vec::with_capacity(5 * k * k);
    for i in 0..k {
        for j in 0..k {
            t.push((idx(i, j), idx(i, j), 4.0));
            if i + 1 < k {
                t.push((idx(i, j), idx(i + 1, j), -1.0));
                t.push((idx(i + 1, j), idx(i, j), -1.0));
            }
            if j + 1 < k {
                t.push((idx(i, j), idx(i, j + 1), -1.0));
                t.push((idx(i, j + 1), idx(i, j), -1.0));
            }
        }
    }
    SparseSym::from_triplets(k * k, &t).expect("2D Laplacian is SPD")
}

/// Random symmetric sparsity with a strictly dominant positive diagonal.
pub fn random_sparse_spd(n: usize, density: f64, seed: u64) -> SparseSym {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rowsum = vec![0.0; n];
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if rng.random::<f64>() < density {
                let v = rng.random::<f64>() - 0.5;
                t.push((i, j, v));
                t.push((j, i, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for (i, s) in rowsum.iter().enumerate() {
        t.push((i, i, s + 0.1 + rng.random::<f64>()));
    }
    SparseSym::from_triplets(n, &t).expect("diagonally dominant matrix is SPD")
}

/// `n` values spaced evenly in log scale between `lo` and `hi`.
pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` values spaced evenly between `lo` and `hi`.
pub fn lin_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Orthogonal factor of a seeded Gaussian matrix.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Dense `Q·diag(eigs)·Qᵀ` for a seeded random orthogonal `Q`.
pub fn spd_with_spectrum_dense(eigs: &[f64], seed: u64) -> DMatrix<f64> {
    let n = eigs.len();
    let q = random_orthogonal(n, seed);
    let mut qd = q.clone();
    for (j, &l) in eigs.iter().enumerate() {
        qd.column_mut(j).scale_mut(l);
    }
    let a = qd * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// [`spd_with_spectrum_dense`] stored as a (dense-pattern) [`SparseSym`].
pub fn spd_with_spectrum(eigs: &[f64], seed: u64) -> SparseSym {
    SparseSym::from_dense(&spd_with_spectrum_dense(eigs, seed)).expect("constructed matrix is SPD")
}

/// Random SPD matrix with log-spaced spectrum in `[1, kappa]`.
pub fn random_spd(n: usize, kappa: f64, seed: u64) -> SparseSym {
    spd_with_spectrum(&log_spaced(n, 1.0, kappa), seed)
}

/// Random SPD matrix with evenly spaced spectrum in `[1, kappa]`.
pub fn random_spd_linear(n: usize, kappa: f64, seed: u64) -> SparseSym {
    spd_with_spectrum(&lin_spaced(n, 1.0, kappa), seed)
}

/// `diag(d)`; used for small hand checks.
pub fn diagonal(d: &[f64]) -> SparseSym {
    let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
    SparseSym::from_triplets(d.len(), &t).expect("positive diagonal")
}

/// Spectrum of a dense symmetric matrix, ascending.
pub fn eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut e = a.clone().symmetric_eigenvalues();
    e.as_mut_slice().sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}
