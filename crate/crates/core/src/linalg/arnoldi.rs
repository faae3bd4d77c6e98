//! Explicitly restarted Arnoldi iteration for the dominant eigenpairs of a
//! complex linear operator (used on shift-inverted Liouvillians).

use ndarray::Array2;
use num_complex::Complex64 as C64;

use super::dense::general_eigen;
use super::start_vector;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct ArnoldiOptions {
    pub k: usize,
    pub krylov_dim: usize,
    pub tol: f64,
    pub max_restarts: usize,
}

impl ArnoldiOptions {
    pub fn new(k: usize) -> Self {
        Self { k, krylov_dim: (3 * k + 20).max(40), tol: 1e-10, max_restarts: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct ArnoldiResult {
    /// Ritz values ordered by decreasing magnitude.
    pub values: Vec<C64>,
    pub vectors: Vec<Vec<C64>>,
    /// Relative residual estimates |h_{m+1,m} y_m| / |θ|.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub restarts: usize,
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest-magnitude `opts.k` eigenpairs of `apply` on ℂⁿ.
pub fn dominant<F>(apply: F, n: usize, opts: &ArnoldiOptions) -> Result<ArnoldiResult>
where
    F: Fn(&[C64], &mut [C64]),
{
    let k = opts.k.min(n);
    let m = opts.krylov_dim.clamp(k + 1, n.max(k + 1)).min(n);
    let mut v0: Vec<C64> = start_vector(n, 7).into_iter().map(|x| C64::new(x, 0.0)).collect();
    let mut best: Option<ArnoldiResult> = None;
    for restart in 0..=opts.max_restarts {
        let (vals, vecs, res) = cycle(&apply, &v0, n, m, k)?;
        let converged = res.iter().take(k).all(|&r| r <= opts.tol);
        let out = ArnoldiResult { values: vals, vectors: vecs, residuals: res, converged, restarts: restart };
        if converged {
            return Ok(out);
        }
        // restart from the residual-weighted sum of wanted Ritz vectors
        let mut next = vec![C64::new(0.0, 0.0); n];
        for (x, r) in out.vectors.iter().zip(&out.residuals) {
            let w = r.max(1e-3);
            next.iter_mut().zip(x).for_each(|(a, b)| *a += *b * w);
        }
        let nn = norm(&next);
        next.iter_mut().for_each(|a| *a /= nn);
        v0 = next;
        best = Some(out);
    }
    Ok(best.expect("at least one cycle"))
}

type Cycle = (Vec<C64>, Vec<Vec<C64>>, Vec<f64>);

fn cycle<F>(apply: &F, v0: &[C64], n: usize, m: usize, k: usize) -> Result<Cycle>
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    let n0 = norm(v0);
    basis.push(v0.iter().map(|z| z / n0).collect());
    let mut h = Array2::<C64>::zeros((m + 1, m));
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut size = m;
    for j in 0..m {
        apply(&basis[j], &mut w);
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dotc(v, &w);
                h[[i, j]] += c;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
        }
        let b = norm(&w);
        h[[j + 1, j]] = C64::new(b, 0.0);
        let scale = (0..=j).map(|i| h[[i, j]].norm()).fold(0.0, f64::max).max(1e-300);
        if b <= 1e-14 * scale {
            size = j + 1;
            break;
        }
        if j + 1 < m {
            basis.push(w.iter().map(|z| z / b).collect());
        }
    }
    let hm = h.slice(ndarray::s![0..size, 0..size]).to_owned();
    let beta = h[[size, size - 1]].norm();
    let (vals, y) = general_eigen(hm.view())?;
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| vals[b].norm().partial_cmp(&vals[a].norm()).unwrap());
    let kk = k.min(size);
    let mut out_vals = vec![];
    let mut out_vecs = vec![];
    let mut out_res = vec![];
    for &idx in order.iter().take(kk) {
        let theta = vals[idx];
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (i, v) in basis.iter().enumerate().take(size) {
            let c = y[[i, idx]];
            x.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|a| *a /= nx);
        out_res.push(beta * y[[size - 1, idx]].norm() / theta.norm().max(1e-300));
        out_vals.push(theta);
        out_vecs.push(x);
    }
    Ok((out_vals, out_vecs, out_res))
}
