//! Small dense symmetric-matrix helpers: Jacobi eigendecomposition, SPD square
//! roots, and a pivoted linear solve. Sized for mediator-dimension matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, so that
/// `a = V diag(w) V^T`.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let w = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    (w, v)
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Principal square root of a symmetric PSD matrix, clamping eigenvalues at 0.
pub fn spd_sqrt(a: &Array2<f64>) -> Array2<f64> {
    map_eigenvalues(a, |w| w.max(0.0).sqrt())
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn spd_inv_sqrt(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (w, _) = sym_eigen(a);
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if w.iter().any(|&x| x <= 1e-12 * scale.max(1.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(map_eigenvalues(a, |w| 1.0 / w.sqrt()))
}

fn map_eigenvalues(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = a.nrows();
    let (w, v) = sym_eigen(a);
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v[[i, k]] * f(w[k]) * v[[j, k]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            left: a.ncols(),
            right: b.len(),
        });
    }
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[[r, col]].abs() > m[[piv, col]].abs() {
                piv = r;
            }
        }
        if m[[piv, col]].abs() < 1e-300 {
            return Err(Error::NotPositiveDefinite);
        }
        if piv != col {
            for c in 0..n {
                m.swap([col, c], [piv, c]);
            }
            x.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[[r, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[r, c]] -= f * m[[col, c]];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for c in (col + 1)..n {
            s -= m[[col, c]] * x[c];
        }
        x[col] = s / m[[col, col]];
    }
    Ok(x)
}
