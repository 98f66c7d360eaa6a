//! Small dense linear-algebra routines: cyclic Jacobi eigendecomposition for
//! symmetric matrices, modified Gram-Schmidt orthonormalization, Cholesky
//! least squares, and a truncated eigenbasis of a column covariance.
//!
//! Sizes here are small (Gram matrices over feature blocks, subspace bases of
//! rank <= 64), so plain loops beat pulling in a LAPACK binding.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::rng::rng_for;

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns eigenvalues descending with matching eigenvector columns.
pub fn jacobi_eigh(m: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    let mut a = m.to_owned();
    let mut v = Array2::eye(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off_diag: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off_diag += a[(p, q)] * a[(p, q)];
            }
        }
        if off_diag.sqrt() <= 1e-13 * (1.0 + frobenius(&a.view())) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                // stable tangent of the rotation angle
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        eigenvectors.column_mut(new_col).assign(&v.column(old_col));
    }
    (eigenvalues, eigenvectors)
}

fn frobenius(m: &ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// In-place modified Gram-Schmidt; returns the number of independent columns
/// kept (dependent columns are zeroed and moved to the back).
pub fn orthonormalize_columns(m: &mut Array2<f64>) -> usize {
    let (rows, cols) = m.dim();
    let mut rank = 0;
    for j in 0..cols {
        if rank != j {
            let col = m.column(j).to_owned();
            m.column_mut(rank).assign(&col);
        }
        for i in 0..rank {
            let proj = m.column(rank).dot(&m.column(i));
            let qi = m.column(i).to_owned();
            m.column_mut(rank).zip_mut_with(&qi, |x, &q| *x -= proj * q);
        }
        let norm = m.column(rank).dot(&m.column(rank)).sqrt();
        if norm > 1e-10 {
            m.column_mut(rank).mapv_inplace(|x| x / norm);
            rank += 1;
        }
    }
    for j in rank..cols.min(rows) {
        m.column_mut(j).fill(0.0);
    }
    rank
}

/// Solve `(X^T X + ridge I) w = X^T y` by Cholesky. The tiny ridge keeps the
/// factorization alive on rank-deficient designs.
pub fn least_squares(x: &ArrayView2<f64>, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let d = x.ncols();
    let mut gram = x.t().dot(x);
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let xty: Vec<f64> = (0..d).map(|j| x.column(j).dot(&Array1::from_vec(y.to_vec()))).collect();
    cholesky_solve(&gram, &xty)
}

fn cholesky_solve(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(CoreError::NonFinite("cholesky pivot <= 0".into()));
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    // forward then back substitution
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * z[k];
        }
        z[i] = sum / l[(i, i)];
    }
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in (i + 1)..n {
            sum -= l[(k, i)] * w[k];
        }
        w[i] = sum / l[(i, i)];
    }
    Ok(w)
}

/// Truncated eigenbasis of the column covariance `(1/d) C C^T` of a centered
/// n×d matrix, keeping at most `rank` pairs. Eigenvalues are clamped to >= 0.
///
/// The decomposition routes through a d×d Gram matrix when d is small and a
/// seeded randomized range finder otherwise, so the n×n covariance is never
/// materialized.
pub struct CovarianceBasis {
    /// Orthonormal directions, one column per kept eigenpair (n × r).
    pub basis: Array2<f64>,
    /// Covariance eigenvalues, descending, clamped to >= 0.
    pub eigenvalues: Vec<f64>,
}

const GRAM_DIRECT_LIMIT: usize = 192;
const OVERSAMPLE: usize = 8;
const POWER_ITERATIONS: usize = 2;

pub fn covariance_eigenbasis(centered: &ArrayView2<f64>, rank: usize, seed: u64) -> CovarianceBasis {
    let (n, d) = centered.dim();
    let rank = rank.min(n).min(d).max(1);
    if d <= GRAM_DIRECT_LIMIT {
        // exact: eigenpairs of C^T C lift to the column space through C
        let gram = centered.t().dot(centered);
        let (vals, vecs) = jacobi_eigh(&gram.view());
        let mut basis = Array2::zeros((n, rank));
        let mut eigenvalues = Vec::with_capacity(rank);
        for j in 0..rank {
            let lambda = vals[j].max(0.0);
            eigenvalues.push(lambda / d as f64);
            if lambda > 1e-12 {
                let u = centered.dot(&vecs.column(j)) / lambda.sqrt();
                basis.column_mut(j).assign(&u);
            }
        }
        CovarianceBasis { basis, eigenvalues }
    } else {
        // randomized range finder with power iterations
        let probe = rank + OVERSAMPLE;
        let mut rng = rng_for(seed, &[0x52414e47]); // "RANG"
        let omega = Array2::from_shape_fn((d, probe), |_| rng.sample::<f64, _>(StandardNormal));
        let mut q = centered.dot(&omega);
        orthonormalize_columns(&mut q);
        for _ in 0..POWER_ITERATIONS {
            let mut z = centered.t().dot(&q);
            orthonormalize_columns(&mut z);
            q = centered.dot(&z);
            orthonormalize_columns(&mut q);
        }
        let b = q.t().dot(centered); // probe × d
        let small = b.dot(&b.t());
        let (vals, vecs) = jacobi_eigh(&small.view());
        let mut basis = Array2::zeros((n, rank));
        let mut eigenvalues = Vec::with_capacity(rank);
        for j in 0..rank {
            let lambda = vals[j].max(0.0);
            eigenvalues.push(lambda / d as f64);
            if lambda > 1e-12 {
                let u = q.dot(&vecs.column(j));
                basis.column_mut(j).assign(&u);
            }
        }
        CovarianceBasis { basis, eigenvalues }
    }
}

/// Mean of each row across columns (the "typical column" of an n×d matrix).
pub fn column_mean(m: &ArrayView2<f64>) -> Array1<f64> {
    m.mean_axis(Axis(1)).unwrap_or_else(|| Array1::zeros(m.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigh(&m.view());
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // reconstruct
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (a, b) in recon.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let mut rng = rng_for(99, &[1]);
        let n = 12;
        let raw = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        let sym = &raw + &raw.t();
        let (vals, vecs) = jacobi_eigh(&sym.view());
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (a, b) in recon.iter().zip(sym.iter()) {
            assert!((a - b).abs() < 1e-8, "reconstruction error {}", (a - b).abs());
        }
        // orthonormal eigenvectors
        let gram = vecs.t().dot(&vecs);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        let w_true = [3.0, -2.0];
        let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] * w_true[0] + r[1] * w_true[1]).collect();
        let w = least_squares(&x.view(), &y, 1e-10).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-6);
        assert!((w[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn covariance_basis_captures_dominant_direction() {
        // columns = a + noise, dominant direction is a
        let mut rng = rng_for(5, &[2]);
        let n = 30;
        let d = 40;
        let a = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let mut m = Array2::zeros((n, d));
        for j in 0..d {
            let scale: f64 = rng.sample::<f64, _>(StandardNormal);
            for i in 0..n {
                let eps: f64 = rng.sample::<f64, _>(StandardNormal);
                m[(i, j)] = scale * a[i] + 0.01 * eps;
            }
        }
        let mean = column_mean(&m.view());
        let mut centered = m.clone();
        for j in 0..d {
            let mut col = centered.column_mut(j);
            col -= &mean;
        }
        let cb = covariance_eigenbasis(&centered.view(), 5, 0);
        assert!(cb.eigenvalues[0] > 0.0);
        // leading basis vector should be parallel to a (after centering direction)
        let u0 = cb.basis.column(0);
        let cos = u0.dot(&a).abs() / (a.dot(&a)).sqrt();
        assert!(cos > 0.99, "cosine similarity {}", cos);
    }

    #[test]
    fn randomized_path_agrees_with_gram_path() {
        let mut rng = rng_for(17, &[3]);
        let n = 25;
        let d = 300; // force randomized path
        let mut m = Array2::zeros((n, d));
        // rank-3 structure
        let dirs: Vec<Array1<f64>> = (0..3)
            .map(|_| Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        for j in 0..d {
            let c0: f64 = rng.sample::<f64, _>(StandardNormal);
            let c1: f64 = rng.sample::<f64, _>(StandardNormal);
            let c2: f64 = rng.sample::<f64, _>(StandardNormal);
            for i in 0..n {
                m[(i, j)] = 3.0 * c0 * dirs[0][i] + 2.0 * c1 * dirs[1][i] + c2 * dirs[2][i];
            }
        }
        let rand_basis = covariance_eigenbasis(&m.view(), 3, 0);
        let gram = m.t().dot(&m);
        let (vals, _) = jacobi_eigh(&gram.view());
        for j in 0..3 {
            let exact = vals[j].max(0.0) / d as f64;
            let rel = (rand_basis.eigenvalues[j] - exact).abs() / exact.max(1e-12);
            assert!(rel < 1e-6, "eigenvalue {} off by {}", j, rel);
        }
    }
}
