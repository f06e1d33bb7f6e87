//! Small dense linear-algebra helpers shared by the trackers and the oracles.
//!
//! Matrices are `nalgebra` types throughout; the full symmetric
//! eigendecomposition is delegated to `faer`, which is several times faster
//! than the pure-nalgebra routine at the p ~ 500 sizes the perturbation
//! tracker needs every step.

use nalgebra::{DMatrix, DVector};

use crate::error::{OssirError, Result};

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymEigen> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(OssirError::InvalidData(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            n,
            s.ncols()
        )));
    }
    if n == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(OssirError::InvalidData("non-finite matrix entry".into()));
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| s[(i, j)]);
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| OssirError::Degenerate(format!("eigendecomposition failed: {e:?}")))?;
    let vals = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));

    let values = DVector::from_iterator(n, order.iter().map(|&k| vals[k]));
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

pub fn is_symmetric(s: &DMatrix<f64>, tol: f64) -> bool {
    if !s.is_square() {
        return false;
    }
    let scale = s.amax().max(1.0);
    for i in 0..s.nrows() {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Copies the lower triangle onto the upper one so the result is exactly symmetric.
pub fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}

/// Thin QR orthonormal basis of the column span of `b`.
///
/// Returns the basis and whether `b` was numerically rank deficient
/// (some |R_kk| below `1e-10` times the largest).
pub fn orthonormal_basis(b: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (p, d) = b.shape();
    if d == 0 || p == 0 {
        return (b.clone(), true);
    }
    let qr = b.clone().qr();
    let r = qr.r();
    let rmax = (0..d.min(p)).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    let deficient =
        d > p || rmax == 0.0 || (0..d).any(|k| r[(k, k)].abs() <= 1e-10 * rmax) || !rmax.is_finite();
    (qr.q(), deficient)
}

/// In-place modified Gram-Schmidt on the columns of `m`.
///
/// A column that collapses to (numerically) zero is left as zero.
pub fn gram_schmidt(m: &mut DMatrix<f64>) {
    let d = m.ncols();
    for j in 0..d {
        for i in 0..j {
            let proj = m.column(i).dot(&m.column(j));
            let ci = m.column(i).clone_owned();
            m.column_mut(j).axpy(-proj, &ci, 1.0);
        }
        let norm = m.column(j).norm();
        if norm > 1e-300 {
            m.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}
