//! Minimal dense linear algebra for the small symmetric systems this
//! crate needs (parameter covariance matrices of order ~10-20). Matrices
//! are `Vec<f64>` in row-major order.

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve L L^T x = b given the lower factor `l`.
pub fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        let col = chol_solve(&l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    // Symmetrize against roundoff.
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    Some(inv)
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues, eigenvectors as columns), unordered.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m, n)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    (vals, v)
}

fn frobenius(a: &[f64], n: usize) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt() / n as f64
}

/// Pseudo-inverse of a symmetric positive-semidefinite matrix: eigenvalues
/// below `rel_tol * max_eig` are treated as zero.
pub fn psd_pseudo_inverse(a: &[f64], n: usize, rel_tol: f64) -> Vec<f64> {
    let (vals, vecs) = jacobi_eigen(a, n);
    let max_eig = vals.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_tol * max_eig.max(1e-300);
    let mut inv = vec![0.0; n * n];
    for k in 0..n {
        if vals[k] <= cut {
            continue;
        }
        let w = 1.0 / vals[k];
        for i in 0..n {
            for j in 0..n {
                inv[i * n + j] += w * vecs[i * n + k] * vecs[j * n + k];
            }
        }
    }
    inv
}

/// Symmetric square root factor of a PSD matrix (columns scaled by
/// sqrt eigenvalues); negative eigenvalues are clipped to zero. The
/// returned `S` satisfies `S S^T = A` up to the clipping.
pub fn psd_sqrt(a: &[f64], n: usize) -> Vec<f64> {
    let (vals, vecs) = jacobi_eigen(a, n);
    let mut s = vec![0.0; n * n];
    for k in 0..n {
        let w = vals[k].max(0.0).sqrt();
        for i in 0..n {
            s[i * n + k] = w * vecs[i * n + k];
        }
    }
    s
}

/// y = A x for a square row-major matrix.
pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += a[i * n + j] * x[j];
        }
        y[i] = s;
    }
    y
}

/// Invert a symmetric matrix that should be positive definite, falling
/// back to a pseudo-inverse when it is only semidefinite. The flag in the
/// result reports whether the strict Cholesky path succeeded.
pub fn symmetric_inverse(a: &[f64], n: usize) -> Result<(Vec<f64>, bool)> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::degenerate("matrix has non-finite entries"));
    }
    if let Some(inv) = spd_inverse(a, n) {
        return Ok((inv, true));
    }
    Ok((psd_pseudo_inverse(a, n, 1e-12), false))
}
