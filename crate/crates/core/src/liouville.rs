//! Vectorized Liouvillian, its slow spectrum, and gap tracking across drive
//! sweeps.
//!
//! Vectorization is column-stacked: vec(ρ)[i + d·j] = ρ_{ij}.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::linalg::arnoldi::{dominant, ArnoldiOptions};
use crate::linalg::dense::{general_eigen, hermitian_eigen};
use crate::linalg::splu::{SparseLu, SparseLuReal};
use crate::model::{build_space, hamiltonian_upper, DensityMatrix, HilbertSpace, ModelParams, OperatorMatrix};
use crate::par::Exec;

/// Largest d² accepted by [`build_liouvillian`] and the solvers built on it.
pub const LIOUVILLE_DIM_BUDGET: usize = 1 << 20;

pub fn vectorize(rho: &Array2<C64>) -> Vec<C64> {
    let d = rho.nrows();
    let mut v = vec![C64::new(0.0, 0.0); d * d];
    for j in 0..d {
        for i in 0..d {
            v[i + d * j] = rho[[i, j]];
        }
    }
    v
}

pub fn unvectorize(v: &[C64], d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(i, j)| v[i + d * j])
}

fn check_budget(space: &HilbertSpace) -> Result<usize> {
    let d = space.total_dim;
    let dd = d * d;
    if dd > LIOUVILLE_DIM_BUDGET {
        return Err(Error::Budget { dim: dd, budget: LIOUVILLE_DIM_BUDGET });
    }
    Ok(d)
}

/// Calls `f(row, col, value)` for every entry of ℒ = −i[H, ·] +
/// κ(2a·a† − a†a· − ·a†a) in the column-stacked basis; entries may repeat.
fn for_each_entry<F: FnMut(usize, usize, C64)>(params: &ModelParams, space: &HilbertSpace, mut f: F) -> Result<()> {
    params.validate()?;
    let d = check_budget(space)?;
    let mut h: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
    for (i, j, v) in hamiltonian_upper(params, space) {
        h[i].push((j, v));
        if i != j {
            h[j].push((i, v));
        }
    }
    let k = params.kappa;
    let nph: Vec<f64> = (0..d).map(|i| space.photons_of(i) as f64).collect();
    let up: Vec<f64> = (0..d)
        .map(|i| {
            let n = space.photons_of(i);
            if n + 1 < space.field_dim {
                ((n + 1) as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for j in 0..d {
        for i in 0..d {
            let c = i + d * j;
            // −i(Hρ)_{ij} = −i Σ_k H_ik ρ_kj
            for &(kk, v) in &h[i] {
                f(c, kk + d * j, C64::new(0.0, -v));
            }
            // +i(ρH)_{ij} = +i Σ_k ρ_ik H_kj  (H symmetric)
            for &(kk, v) in &h[j] {
                f(c, i + d * kk, C64::new(0.0, v));
            }
            f(c, c, C64::new(-k * (nph[i] + nph[j]), 0.0));
            if up[i] != 0.0 && up[j] != 0.0 {
                f(c, (i + 1) + d * (j + 1), C64::new(2.0 * k * up[i] * up[j], 0.0));
            }
        }
    }
    Ok(())
}

/// Triplets of ℒ in the column-stacked basis, duplicates allowed.
pub fn liouvillian_triplets(params: &ModelParams, space: &HilbertSpace) -> Result<Vec<(usize, usize, C64)>> {
    let d = check_budget(space)?;
    let mut t = Vec::with_capacity(12 * d * d);
    for_each_entry(params, space, |r, c, v| t.push((r, c, v)))?;
    Ok(t)
}

/// Sparse d² × d² Liouvillian acting on column-stacked vec(ρ).
pub fn build_liouvillian(params: &ModelParams, space: &HilbertSpace) -> Result<OperatorMatrix> {
    let d = check_budget(space)?;
    let t = liouvillian_triplets(params, space)?;
    Ok(OperatorMatrix::from_triplets_summed(d * d, d * d, t))
}

/// Hermitizes, clips negative eigenvalues to zero and normalizes the trace.
pub fn physical_projection(rho: Array2<C64>) -> Result<DensityMatrix> {
    let mut dm = DensityMatrix(rho);
    dm.hermitize();
    let tr = dm.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::Domain("null mode has zero trace".into()));
    }
    dm.0.mapv_inplace(|z| z / tr);
    dm.hermitize();
    let (vals, vecs) = hermitian_eigen(dm.0.view())?;
    if vals.iter().all(|&v| v >= 0.0) {
        dm.normalize();
        return Ok(dm);
    }
    let d = dm.dim();
    let mut out = Array2::<C64>::zeros((d, d));
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for i in 0..d {
            let a = vecs[[i, k]] * lam;
            for j in 0..d {
                out[[i, j]] += a * vecs[[j, k]].conj();
            }
        }
    }
    let mut dm = DensityMatrix(out);
    dm.hermitize();
    dm.normalize();
    Ok(dm)
}

/// Steady state from one complex sparse direct solve on the full d² space:
/// the row of ℒ for ρ₀₀ is replaced by the trace functional, which makes the
/// system regular when the null space is one-dimensional.
pub fn steady_from_linear_solve_full(params: &ModelParams) -> Result<DensityMatrix> {
    let space = build_space(params)?;
    let d = check_budget(&space)?;
    let mut t = Vec::with_capacity(12 * d * d);
    for_each_entry(params, &space, |r, c, v| {
        if r != 0 {
            t.push((r, c, v))
        }
    })?;
    for i in 0..d {
        t.push((0, i + d * i, C64::new(1.0, 0.0)));
    }
    let lu = SparseLu::factor(d * d, &t)?;
    let mut b = vec![C64::new(0.0, 0.0); d * d];
    b[0] = C64::new(1.0, 0.0);
    lu.solve_in_place(&mut b);
    if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Factorization("non-finite steady-state solution".into()));
    }
    physical_projection(unvectorize(&b, d))
}

/// Coordinates of the real subspace of Hermitian ρ with Pρ*P = ρ, where
/// P = (−1)^{a†a}. Because H is real and PHP = −H, the map ρ → Pρ*P commutes
/// with ℒ, so a unique steady state lies in this subspace. One real unknown
/// per pair i ≤ j: ρ_ij itself when n_i + n_j is even, Im ρ_ij when odd.
struct EvenHermitian {
    d: usize,
    odd: Vec<bool>,
}

impl EvenHermitian {
    fn new(space: &HilbertSpace) -> Self {
        let d = space.total_dim;
        Self { d, odd: (0..d).map(|i| space.photons_of(i) % 2 == 1).collect() }
    }

    fn len(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        // rows 0..i of the upper triangle hold d, d−1, … entries
        i * self.d - i * i.saturating_sub(1) / 2 + (j - i)
    }

    fn is_odd(&self, i: usize, j: usize) -> bool {
        self.odd[i] ^ self.odd[j]
    }

    /// Entry (k, l) of the basis matrix of unknown (min(k,l), max(k,l)).
    fn basis_entry(&self, k: usize, l: usize) -> C64 {
        if !self.is_odd(k, l) {
            C64::new(1.0, 0.0)
        } else if k < l {
            C64::new(0.0, 1.0)
        } else {
            C64::new(0.0, -1.0)
        }
    }

    fn to_matrix(&self, x: &[f64]) -> Array2<C64> {
        let d = self.d;
        let mut rho = Array2::<C64>::zeros((d, d));
        for i in 0..d {
            for j in i..d {
                let v = x[self.index(i, j)];
                if self.is_odd(i, j) {
                    rho[[i, j]] = C64::new(0.0, v);
                    rho[[j, i]] = C64::new(0.0, -v);
                } else {
                    rho[[i, j]] = C64::new(v, 0.0);
                    rho[[j, i]] = C64::new(v, 0.0);
                }
            }
        }
        rho
    }
}

/// Steady state from a real sparse direct solve restricted to the
/// parity-even Hermitian subspace (d(d+1)/2 real unknowns instead of d²
/// complex ones). The equation for ρ₀₀ is replaced by Tr ρ = 1.
pub fn steady_from_linear_solve(params: &ModelParams) -> Result<DensityMatrix> {
    let space = build_space(params)?;
    let d = check_budget(&space)?;
    let sub = EvenHermitian::new(&space);
    let n = sub.len();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(12 * n);
    for_each_entry(params, &space, |r, c, v| {
        let (i, j) = (r % d, r / d);
        if i > j || (i == 0 && j == 0) {
            return;
        }
        let (k, l) = (c % d, c / d);
        let z = v * sub.basis_entry(k, l);
        let val = if sub.is_odd(i, j) { z.im } else { z.re };
        if val != 0.0 {
            t.push((sub.index(i, j), sub.index(k.min(l), k.max(l)), val));
        }
    })?;
    for i in 0..d {
        t.push((sub.index(0, 0), sub.index(i, i), 1.0));
    }
    let lu = SparseLuReal::factor(n, &t)?;
    let mut b = vec![0.0; n];
    b[sub.index(0, 0)] = 1.0;
    lu.solve_in_place(&mut b);
    if b.iter().any(|z| !z.is_finite()) {
        return Err(Error::Factorization("non-finite steady-state solution".into()));
    }
    physical_projection(sub.to_matrix(&b))
}

#[derive(Clone, Debug)]
pub struct ModeOptions {
    pub k: usize,
    /// Shift for shift-invert; must not be an eigenvalue. Positive real
    /// shifts keep ℒ − σ regular because Re λ ≤ 0.
    pub sigma: f64,
    /// Dense eigensolve when d ≤ this. The dense complex eigensolve of a
    /// 4096² matrix takes minutes on one core, so the default stays small.
    pub dense_max_dim: usize,
    pub tol: f64,
    /// Extra Ritz pairs requested beyond `k`, so that the |Re λ| ordering is
    /// not biased by the distance-to-σ ordering of shift-invert.
    pub oversample: usize,
}

impl ModeOptions {
    pub fn new(k: usize) -> Self {
        Self { k, sigma: 0.05, dense_max_dim: 16, tol: 1e-11, oversample: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct LiouvilleModes {
    /// Sorted by |Re λ|, ties broken by |Im λ|.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm right eigenvectors, column-stacked.
    pub vectors: Vec<Vec<C64>>,
    /// ‖ℒv − λv‖ for each pair.
    pub residuals: Vec<f64>,
    pub null_mode: DensityMatrix,
    /// Number of eigenvalues with |λ| < 1e−9; more than one flags a
    /// degenerate null space.
    pub null_count: usize,
    pub dim: usize,
    pub dense: bool,
    pub converged: bool,
}

impl LiouvilleModes {
    /// Largest computed Re λ.
    pub fn max_re(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of distinct decay modes: λ₀ excluded and only the member with
    /// Im λ ≥ 0 kept from each conjugate pair.
    pub fn distinct_slow(&self) -> Vec<usize> {
        (1..self.eigenvalues.len()).filter(|&i| self.eigenvalues[i].im >= -1e-9).collect()
    }

    /// Max distance from each eigenvalue to the conjugate of another one,
    /// ignoring the slowest-to-cut tail.
    pub fn conjugation_error(&self) -> f64 {
        let n = self.eigenvalues.len().saturating_sub(2);
        self.eigenvalues
            .iter()
            .take(n)
            .map(|z| self.eigenvalues.iter().map(|w| (w.conj() - z).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }
}

fn sort_modes(vals: Vec<C64>, vecs: Vec<Vec<C64>>) -> (Vec<C64>, Vec<Vec<C64>>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        let ka = (vals[a].re.abs(), vals[a].im.abs(), -vals[a].im);
        let kb = (vals[b].re.abs(), vals[b].im.abs(), -vals[b].im);
        ka.partial_cmp(&kb).unwrap()
    });
    let v = idx.iter().map(|&i| vals[i]).collect();
    let x = idx.iter().map(|&i| vecs[i].clone()).collect();
    (v, x)
}

/// The `k` eigenpairs of ℒ nearest Re λ = 0. Off the dense route these are
/// picked from the `k + oversample` eigenvalues closest to σ in the complex
/// plane, so a mode with small |Re λ| but large |Im λ| can be missed.
pub fn low_modes(params: &ModelParams, k: usize) -> Result<LiouvilleModes> {
    low_modes_with(params, &ModeOptions::new(k))
}

pub fn low_modes_with(params: &ModelParams, opts: &ModeOptions) -> Result<LiouvilleModes> {
    if opts.k < 2 {
        return Err(invalid("k", "need at least two modes"));
    }
    let space = build_space(params)?;
    let d = check_budget(&space)?;
    let n = d * d;
    let l = build_liouvillian(params, &space)?;
    let want = (opts.k + opts.oversample).min(n);
    let (vals, vecs, converged, dense) = if d <= opts.dense_max_dim {
        let (v, x) = general_eigen(l.to_dense().view())?;
        let cols = (0..v.len()).map(|c| x.column(c).to_vec()).collect();
        (v, cols, true, true)
    } else {
        let mut t = liouvillian_triplets(params, &space)?;
        for c in 0..n {
            t.push((c, c, C64::new(-opts.sigma, 0.0)));
        }
        let lu = SparseLu::factor(n, &t)?;
        let apply = |x: &[C64], y: &mut [C64]| {
            y.copy_from_slice(x);
            lu.solve_in_place(y);
        };
        let mut ao = ArnoldiOptions::new(want);
        ao.tol = opts.tol;
        let r = dominant(apply, n, &ao)?;
        let vals = r.values.iter().map(|th| C64::new(opts.sigma, 0.0) + 1.0 / th).collect();
        (vals, r.vectors, r.converged, false)
    };
    let (mut vals, mut vecs) = sort_modes(vals, vecs);
    vals.truncate(opts.k);
    vecs.truncate(opts.k);
    let mut residuals = Vec::with_capacity(vals.len());
    let mut lv = vec![C64::new(0.0, 0.0); n];
    for (lam, v) in vals.iter().zip(&vecs) {
        l.matvec_into(v, &mut lv);
        let r: f64 = lv.iter().zip(v).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
        residuals.push(r);
    }
    let null_count = vals.iter().filter(|z| z.norm() < 1e-9).count();
    let null_mode = physical_projection(unvectorize(&vecs[0], d))?;
    Ok(LiouvilleModes { eigenvalues: vals, vectors: vecs, residuals, null_mode, null_count, dim: d, dense, converged })
}

/// ρ_ss = ρ₀/Tr ρ₀, Hermitized and clipped to the positive cone. Errors when
/// the null space is degenerate.
pub fn steady_from_null(modes: &LiouvilleModes) -> Result<DensityMatrix> {
    if modes.null_count > 1 {
        return Err(Error::Domain(format!("null space has dimension {}", modes.null_count)));
    }
    physical_projection(unvectorize(&modes.vectors[0], modes.dim))
}

/// One tracked decay branch across a sweep.
#[derive(Clone, Debug)]
pub struct ModeTrack {
    pub values: Vec<C64>,
    /// |⟨v_prev|v⟩| at each continuation step (1 at the first point).
    pub overlaps: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GapSweep {
    pub eps_grid: Vec<f64>,
    pub modes: Vec<LiouvilleModes>,
    /// Branches started from the first two distinct slow modes (λ₁, λ₂).
    pub tracks: Vec<ModeTrack>,
}

impl GapSweep {
    /// |Re λ₁| per sweep point (λ₁ = first distinct decay rate).
    pub fn gap(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| m.distinct_slow().first().map(|&i| m.eigenvalues[i].re.abs()).unwrap_or(f64::NAN))
            .collect()
    }

    /// First sweep index at which the branch that started as λ₁ decays
    /// faster than the branch that started as λ₂.
    pub fn ordering_swap(&self) -> Option<usize> {
        if self.tracks.len() < 2 {
            return None;
        }
        let (a, b) = (&self.tracks[0], &self.tracks[1]);
        (0..self.eps_grid.len()).find(|&i| a.values[i].re.abs() > b.values[i].re.abs())
    }
}

fn overlap(a: &[C64], b: &[C64]) -> f64 {
    let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() / (na * nb)
}

/// Low modes over a drive sweep with λ₁ and λ₂ followed by eigenvector
/// overlap. Points run under `exec`; tracking is a sequential pass.
pub fn gap_sweep(params: &ModelParams, eps_grid: &[f64], opts: &ModeOptions, exec: Exec) -> Result<GapSweep> {
    if eps_grid.is_empty() {
        return Err(invalid("eps_grid", "empty sweep"));
    }
    let modes: Vec<LiouvilleModes> = exec
        .map_slice(eps_grid, |&e| low_modes_with(&params.with_epsilon(e), opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let first = modes[0].distinct_slow();
    let mut tracks = Vec::new();
    for &start in first.iter().take(2) {
        let mut values = vec![modes[0].eigenvalues[start]];
        let mut overlaps = vec![1.0];
        let mut prev = modes[0].vectors[start].clone();
        for m in &modes[1..] {
            let (best, ov) = m
                .distinct_slow()
                .into_iter()
                .map(|i| (i, overlap(&prev, &m.vectors[i])))
                .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == usize::MAX {
                return Err(Error::NoConvergence("no slow modes to continue a branch".into()));
            }
            values.push(m.eigenvalues[best]);
            overlaps.push(ov);
            prev = m.vectors[best].clone();
        }
        tracks.push(ModeTrack { values, overlaps });
    }
    Ok(GapSweep { eps_grid: eps_grid.to_vec(), modes, tracks })
}
