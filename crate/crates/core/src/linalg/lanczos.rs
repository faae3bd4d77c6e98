//! Lanczos iteration with full reorthogonalization for real symmetric
//! operators, returning the algebraically largest eigenpairs.

use ndarray::Array2;

use super::dense::symmetric_eigen;
use super::start_vector;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    /// Unit eigenvectors, one per value.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Largest `k` eigenpairs of the symmetric operator `apply` on ℝⁿ.
pub fn largest<F>(apply: F, n: usize, k: usize, tol: f64) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    let k = k.min(n);
    let mut m = (2 * k + 20).min(n);
    loop {
        let res = run(&apply, n, k, m, tol)?;
        if let Some(r) = res {
            return Ok(r);
        }
        if m == n {
            return Err(Error::NoConvergence(format!("Lanczos: {k} pairs not converged at full dimension {n}")));
        }
        m = (2 * m).min(n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn run<F>(apply: &F, n: usize, k: usize, m: usize, tol: f64) -> Result<Option<LanczosResult>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut q = start_vector(n, 1);
    let nrm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nrm);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = vec![];
    let mut beta: Vec<f64> = vec![];
    let mut w = vec![0.0; n];
    let mut last_beta = 0.0;
    for j in 0..m {
        apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        last_beta = b;
        let scale = alpha.iter().map(|x: &f64| x.abs()).fold(0.0, f64::max).max(1e-300);
        if j + 1 == m || b <= 1e-13 * scale {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let msz = alpha.len();
    let mut t = Array2::<f64>::zeros((msz, msz));
    for i in 0..msz {
        t[[i, i]] = alpha[i];
        if i + 1 < msz {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (vals, vecs) = symmetric_eigen(t.view())?;
    let kk = k.min(msz);
    let breakdown = msz < m || msz == n;
    let mut out = LanczosResult { values: vec![], vectors: vec![], residuals: vec![] };
    for idx in (msz - kk..msz).rev() {
        let theta = vals[idx];
        let resid = (last_beta * vecs[[msz - 1, idx]]).abs();
        if !breakdown && resid > tol * theta.abs().max(1e-300) {
            return Ok(None);
        }
        let mut x = vec![0.0; n];
        for (i, v) in basis.iter().enumerate().take(msz) {
            let c = vecs[[i, idx]];
            x.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|a| *a /= nx);
        out.values.push(theta);
        out.vectors.push(x);
        out.residuals.push(if breakdown { 0.0 } else { resid });
    }
    if out.values.len() < k {
        return Err(Error::NoConvergence(format!("Lanczos: invariant subspace of size {msz} < {k}")));
    }
    Ok(Some(out))
}
