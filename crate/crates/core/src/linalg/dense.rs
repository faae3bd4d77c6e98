use faer::{Mat, Side};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

fn to_faer_c(a: ArrayView2<C64>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_faer_r(a: ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix (lower triangle referenced), ascending.
pub fn hermitian_eigenvalues(a: ArrayView2<C64>) -> Vec<f64> {
    to_faer_c(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigensolver failed")
}

/// Eigenpairs of a Hermitian matrix, ascending; eigenvectors are columns.
pub fn hermitian_eigen(a: ArrayView2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let evd = to_faer_c(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("{e:?}")))?;
    let n = a.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i].re).collect();
    Ok((vals, Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)])))
}

pub fn symmetric_eigenvalues(a: ArrayView2<f64>) -> Result<Vec<f64>> {
    to_faer_r(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("{e:?}")))
}

pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let evd = to_faer_r(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("{e:?}")))?;
    let n = a.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i]).collect();
    Ok((vals, Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)])))
}

/// Eigenpairs of a general complex matrix; eigenvectors are unit-norm columns.
pub fn general_eigen(a: ArrayView2<C64>) -> Result<(Vec<C64>, Array2<C64>)> {
    let evd = to_faer_c(a).eigen().map_err(|e| Error::NoConvergence(format!("{e:?}")))?;
    let n = a.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i]).collect();
    let mut v = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    for mut col in v.columns_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            col.mapv_inplace(|z| z / nrm);
        }
    }
    Ok((vals, v))
}

pub fn general_eigenvalues(a: ArrayView2<C64>) -> Result<Vec<C64>> {
    to_faer_c(a).eigenvalues().map_err(|e| Error::NoConvergence(format!("{e:?}")))
}

pub fn real_eigenvalues(a: ArrayView2<f64>) -> Result<Vec<C64>> {
    to_faer_r(a).eigenvalues().map_err(|e| Error::NoConvergence(format!("{e:?}")))
}
