//! Small dense helpers shared by the geometry, PCA and logistic code.
//!
//! Data lives in `ndarray`; symmetric eigendecompositions, QR and Cholesky
//! go through `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

pub(crate) fn column_mean(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(x.ncols()))
}

pub(crate) fn centered(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = column_mean(x);
    let xc = &x - &mean;
    (xc, mean)
}

/// Unbiased sample covariance `Xcᵀ Xc / (n − 1)`.
#[cfg(test)]
pub(crate) fn covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let (xc, _) = centered(x);
    let n = x.nrows().max(2) as f64;
    xc.t().dot(&xc) / (n - 1.0)
}

pub(crate) fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
/// Eigenvectors are the columns of the returned matrix.
pub(crate) fn sym_eigen_desc(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((a.nrows(), order.len()), |(r, c)| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Orthonormal basis for the column space of `a` (thin QR).
pub(crate) fn orthonormal_columns(a: &Array2<f64>) -> Array2<f64> {
    let qr = to_na(a).qr();
    from_na(&qr.q())
}

/// Solves `h x = g` for symmetric positive definite `h`.
pub(crate) fn solve_spd(h: &Array2<f64>, g: &Array1<f64>) -> Result<Array1<f64>> {
    let chol = to_na(h)
        .cholesky()
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    let x = chol.solve(&DVector::from_iterator(g.len(), g.iter().copied()));
    Ok(Array1::from_iter(x.iter().copied()))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a 0/1 target.
pub(crate) fn bce_with_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}
