//! Small dense linear-algebra helpers shared by the simulator.
//!
//! Stacked agent states are `n x p` matrices (one row per agent). All
//! averages that feed metrics or gradients go through pairwise summation so
//! the rounding pattern only depends on the operand order, never on how
//! the work was scheduled.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of equally sized vectors produced by `item(k)` for `k in 0..count`.
pub fn pairwise_sum_vectors<F>(count: usize, dim: usize, item: &F) -> Vector
where
    F: Fn(usize) -> Vector,
{
    fn rec<F: Fn(usize) -> Vector>(lo: usize, hi: usize, dim: usize, item: &F) -> Vector {
        let len = hi - lo;
        if len == 0 {
            return Vector::zeros(dim);
        }
        if len <= PAIRWISE_BLOCK {
            let mut acc = item(lo);
            for k in lo + 1..hi {
                acc += item(k);
            }
            return acc;
        }
        let mid = lo + len / 2;
        rec(lo, mid, dim, item) + rec(mid, hi, dim, item)
    }
    rec(0, count, dim, item)
}

/// Row average of an `n x p` matrix, i.e. the network-average iterate.
pub fn mean_row(x: &Mat) -> Vector {
    let n = x.nrows();
    let sum = pairwise_sum_vectors(n, x.ncols(), &|i| x.row(i).transpose());
    sum / n as f64
}

/// `1 x̄ᵀ` for an average row `xbar`.
pub fn broadcast_row(xbar: &Vector, n: usize) -> Mat {
    Mat::from_fn(n, xbar.len(), |_, j| xbar[j])
}

/// Squared Frobenius norm of `x - 1 x̄ᵀ`.
pub fn consensus_error_sq(x: &Mat) -> f64 {
    let xbar = mean_row(x);
    let mut terms = Vec::with_capacity(x.nrows() * x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let d = x[(i, j)] - xbar[j];
            terms.push(d * d);
        }
    }
    pairwise_sum(&terms)
}

pub fn frobenius_sq(x: &Mat) -> f64 {
    let terms: Vec<f64> = x.iter().map(|v| v * v).collect();
    pairwise_sum(&terms)
}

/// Largest entrywise deviation of `a` from `b`, relative to `max(1, |b|_max)`.
pub fn max_rel_deviation(a: &Mat, b: &Mat) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sym_eigen_desc(w: &Mat) -> (Vec<f64>, Mat) {
    let n = w.nrows();
    let eig = SymmetricEigen::new(w.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// `U diag(f(λ)) Uᵀ` for an orthonormal eigenbasis `U`.
pub fn spectral_function<F: Fn(f64) -> f64>(u: &Mat, values: &[f64], f: F) -> Mat {
    let d = Vector::from_iterator(values.len(), values.iter().map(|&v| f(v)));
    let scaled = Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * d[j]);
    scaled * u.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 5050.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_row_and_consensus() {
        let x = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let m = mean_row(&x);
        assert_eq!(m.as_slice(), &[2.0, 3.0]);
        assert_eq!(consensus_error_sq(&x), 4.0);
    }

    #[test]
    fn eigen_sorted_descending_and_reconstructs() {
        let w = Mat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let (vals, u) = sym_eigen_desc(&w);
        assert!(vals.windows(2).all(|p| p[0] >= p[1]));
        let rec = spectral_function(&u, &vals, |v| v);
        assert!((rec - w).norm() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -3.0, 1.0]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-14);
    }
}
