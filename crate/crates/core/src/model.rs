//! Hilbert space, collective operators, the interaction-picture Hamiltonian and
//! the Lindblad right-hand side.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest total dimension [`build_space`] accepts.
pub const DEFAULT_DIM_BUDGET: usize = 1 << 18;

/// Physical and numerical parameters. Rates are in units of κ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_at: usize,
    pub omega: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Bare cavity frequency. Kept for provenance only: it drops out of the
    /// interaction picture and never enters a computation.
    #[serde(default)]
    pub omega0: f64,
    pub n_max: usize,
}

fn one() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(n_at: usize, omega: f64, epsilon: f64, n_max: usize) -> Self {
        Self { n_at, omega, epsilon, kappa: 1.0, omega0: 0.0, n_max }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    pub fn with_n_max(&self, n_max: usize) -> Self {
        Self { n_max, ..self.clone() }
    }

    /// Total spin s = n_at/2.
    pub fn s(&self) -> f64 {
        self.n_at as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        (self.n_at + 1) * (self.n_max + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_at == 0 {
            return Err(invalid("n_at", "must be at least 1"));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(invalid("omega", format!("must be finite and non-negative, got {}", self.omega)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid("epsilon", format!("must be finite and non-negative, got {}", self.epsilon)));
        }
        if self.kappa != 1.0 {
            return Err(invalid("kappa", format!("rates are in units of kappa, so it must be 1, got {}", self.kappa)));
        }
        if !(self.omega0.is_finite() && self.omega0 >= 0.0) {
            return Err(invalid("omega0", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Dicke ⊗ Fock space with atom-major enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    pub n_at: usize,
    pub atom_dim: usize,
    pub field_dim: usize,
    pub total_dim: usize,
}

impl HilbertSpace {
    pub fn new(n_at: usize, n_max: usize) -> Self {
        let atom_dim = n_at + 1;
        let field_dim = n_max + 1;
        Self { n_at, atom_dim, field_dim, total_dim: atom_dim * field_dim }
    }

    pub fn s(&self) -> f64 {
        self.n_at as f64 / 2.0
    }

    pub fn n_max(&self) -> usize {
        self.field_dim - 1
    }

    /// Index of |m_s = p − s⟩ ⊗ |n_ph⟩.
    #[inline]
    pub fn index(&self, p: usize, n_ph: usize) -> usize {
        p * self.field_dim + n_ph
    }

    /// Atomic excitation number p = s + m_s of a basis index.
    #[inline]
    pub fn p_of(&self, i: usize) -> usize {
        i / self.field_dim
    }

    #[inline]
    pub fn photons_of(&self, i: usize) -> usize {
        i % self.field_dim
    }

    #[inline]
    pub fn m_of(&self, i: usize) -> f64 {
        self.p_of(i) as f64 - self.s()
    }

    /// Total excitation number n = n_ph + p.
    #[inline]
    pub fn excitations_of(&self, i: usize) -> usize {
        self.p_of(i) + self.photons_of(i)
    }

    /// Ground state |s, −s⟩ ⊗ |0⟩.
    pub fn ground_index(&self) -> usize {
        0
    }
}

pub fn build_space(params: &ModelParams) -> Result<HilbertSpace> {
    build_space_with_budget(params, DEFAULT_DIM_BUDGET)
}

pub fn build_space_with_budget(params: &ModelParams, budget: usize) -> Result<HilbertSpace> {
    params.validate()?;
    let dim = params
        .n_at
        .checked_add(1)
        .and_then(|a| a.checked_mul(params.n_max.checked_add(1)?))
        .ok_or(Error::Budget { dim: usize::MAX, budget })?;
    if dim > budget {
        return Err(Error::Budget { dim, budget });
    }
    Ok(HilbertSpace::new(params.n_at, params.n_max))
}

/// Spin lowering/raising element √(s(s+1) − m(m+1)) for |m⟩ → |m+1⟩.
#[inline]
pub fn spin_raise(s: f64, m: f64) -> f64 {
    (s * (s + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

/// Sparse complex matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl OperatorMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates, out-of-range
    /// indices and non-finite values are rejected.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, C64)>) -> Result<Self> {
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::SparseEntry { row: r, col: c, reason: "index out of bounds" });
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::SparseEntry { row: r, col: c, reason: "non-finite value" });
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::SparseEntry { row: w[0].0, col: w[0].1, reason: "duplicate entry" });
            }
        }
        Ok(Self::from_sorted_unchecked(rows, cols, &entries))
    }

    /// Builds from triplets, summing duplicates and dropping exact zeros.
    pub(crate) fn from_triplets_summed(rows: usize, cols: usize, mut entries: Vec<(usize, usize, C64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != ZERO);
        Self::from_sorted_unchecked(rows, cols, &merged)
    }

    fn from_sorted_unchecked(rows: usize, cols: usize, entries: &[(usize, usize, C64)]) -> Self {
        let mut indptr = vec![0usize; rows + 1];
        for &(r, _, _) in entries {
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Self { rows, cols, indptr, indices, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: vec![], values: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.entries() {
            m[[r, c]] = v;
        }
        m
    }

    pub fn from_dense(m: ArrayView2<C64>, drop_below: f64) -> Self {
        let mut e = vec![];
        for ((r, c), &v) in m.indexed_iter() {
            if v.norm() > drop_below {
                e.push((r, c, v));
            }
        }
        Self::from_sorted_unchecked(m.nrows(), m.ncols(), &e)
    }

    pub fn adjoint(&self) -> Self {
        let e = self.entries().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets_summed(self.cols, self.rows, e)
    }

    pub fn transpose(&self) -> Self {
        let e = self.entries().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets_summed(self.cols, self.rows, e)
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let e = self.entries().chain(other.entries()).collect();
        Ok(Self::from_triplets_summed(self.rows, self.cols, e))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch { expected: self.cols, got: other.rows });
        }
        let mut acc = vec![ZERO; other.cols];
        let mut touched: Vec<usize> = vec![];
        let mut mark = vec![false; other.cols];
        let mut e = vec![];
        for r in 0..self.rows {
            let (ia, va) = self.row(r);
            for (&k, &a) in ia.iter().zip(va) {
                let (ib, vb) = other.row(k);
                for (&c, &b) in ib.iter().zip(vb) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != ZERO {
                    e.push((r, c, acc[c]));
                }
                acc[c] = ZERO;
                mark[c] = false;
            }
            touched.clear();
        }
        Ok(Self::from_sorted_unchecked(self.rows, other.cols, &e))
    }

    /// `self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `y = self · x`.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            let mut s = ZERO;
            for (&c, &v) in idx.iter().zip(val) {
                s += v * x[c];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Dense product `self · m` written into `out`.
    pub fn mul_dense_into(&self, m: ArrayView2<C64>, out: &mut Array2<C64>) {
        debug_assert_eq!(m.nrows(), self.cols);
        out.fill(ZERO);
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            let mut orow = out.row_mut(r);
            for (&c, &v) in idx.iter().zip(val) {
                orow.scaled_add(v, &m.row(c));
            }
        }
    }

    pub fn mul_dense(&self, m: ArrayView2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.rows, m.ncols()));
        self.mul_dense_into(m, &mut out);
        out
    }

    /// Maximum of |A_ij − conj(A_ji)|.
    pub fn hermiticity_error(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimMismatch { expected: self.rows, got: other.rows });
        }
        if self.cols != other.cols {
            return Err(Error::DimMismatch { expected: self.cols, got: other.cols });
        }
        Ok(())
    }
}

/// Collective spin and field operators on the full space.
#[derive(Clone, Debug)]
pub struct CollectiveOps {
    pub a: OperatorMatrix,
    pub a_dag: OperatorMatrix,
    pub s_plus: OperatorMatrix,
    pub s_minus: OperatorMatrix,
    pub s_z: OperatorMatrix,
    pub s_x: OperatorMatrix,
    pub s_y: OperatorMatrix,
}

pub fn collective_ops(space: &HilbertSpace) -> CollectiveOps {
    let d = space.total_dim;
    let s = space.s();
    let mut a = vec![];
    let mut sp = vec![];
    let mut sz = vec![];
    for p in 0..space.atom_dim {
        let m = p as f64 - s;
        for n in 0..space.field_dim {
            let i = space.index(p, n);
            if n >= 1 {
                a.push((space.index(p, n - 1), i, C64::new((n as f64).sqrt(), 0.0)));
            }
            if p + 1 < space.atom_dim {
                sp.push((space.index(p + 1, n), i, C64::new(spin_raise(s, m), 0.0)));
            }
            if m != 0.0 {
                sz.push((i, i, C64::new(m, 0.0)));
            }
        }
    }
    let a = OperatorMatrix::from_triplets_summed(d, d, a);
    let s_plus = OperatorMatrix::from_triplets_summed(d, d, sp);
    let s_minus = s_plus.adjoint();
    let a_dag = a.adjoint();
    let s_z = OperatorMatrix::from_triplets_summed(d, d, sz);
    let half = C64::new(0.5, 0.0);
    let s_x = s_plus.add(&s_minus).expect("same shape").scale(half);
    let s_y = s_plus.sub(&s_minus).expect("same shape").scale(C64::new(0.0, -0.5));
    CollectiveOps { a, a_dag, s_plus, s_minus, s_z, s_x, s_y }
}

/// Real symmetric entries of H̃ = Ω(S₊a + S₋a†) + ε(a + a†), upper triangle only.
pub(crate) fn hamiltonian_upper(params: &ModelParams, space: &HilbertSpace) -> Vec<(usize, usize, f64)> {
    let s = space.s();
    let mut e = vec![];
    for p in 0..space.atom_dim {
        let m = p as f64 - s;
        for n in 0..space.field_dim {
            let i = space.index(p, n);
            if n + 1 < space.field_dim && params.epsilon != 0.0 {
                e.push((i, space.index(p, n + 1), params.epsilon * ((n + 1) as f64).sqrt()));
            }
            // S₊a: |p, n⟩ → |p+1, n−1⟩
            if p + 1 < space.atom_dim && n >= 1 && params.omega != 0.0 {
                let v = params.omega * spin_raise(s, m) * (n as f64).sqrt();
                let j = space.index(p + 1, n - 1);
                e.push((i.min(j), i.max(j), v));
            }
        }
    }
    e
}

pub fn interaction_hamiltonian(params: &ModelParams, space: &HilbertSpace) -> Result<OperatorMatrix> {
    params.validate()?;
    if params.n_at != space.n_at || params.n_max + 1 != space.field_dim {
        return Err(Error::DimMismatch { expected: params.dim(), got: space.total_dim });
    }
    let mut e = vec![];
    for (i, j, v) in hamiltonian_upper(params, space) {
        e.push((i, j, C64::new(v, 0.0)));
        e.push((j, i, C64::new(v, 0.0)));
    }
    Ok(OperatorMatrix::from_triplets_summed(space.total_dim, space.total_dim, e))
}

/// Density matrix on the full space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub Array2<C64>);

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn pure(psi: &[C64]) -> Self {
        let n = psi.len();
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        Self(Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj() / norm2))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[i, i]] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn ground(space: &HilbertSpace) -> Self {
        Self::basis(space.total_dim, space.ground_index())
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.0;
        let mut e: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                e = e.max((m[[i, j]] - m[[j, i]].conj()).norm());
            }
        }
        e
    }

    /// Replaces the matrix by (ρ + ρ†)/2.
    pub fn hermitize(&mut self) {
        let m = &mut self.0;
        let n = m.nrows();
        for i in 0..n {
            m[[i, i]].im = 0.0;
            for j in i + 1..n {
                let v = 0.5 * (m[[i, j]] + m[[j, i]].conj());
                m[[i, j]] = v;
                m[[j, i]] = v.conj();
            }
        }
    }

    pub fn normalize(&mut self) {
        let t = self.trace().re;
        if t != 0.0 {
            self.0.mapv_inplace(|z| z / t);
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut h = self.clone();
        h.hermitize();
        crate::linalg::dense::hermitian_eigenvalues(h.0.view())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = Self(&self.0 - &other.0);
        0.5 * diff.eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }

    pub fn purity(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Fidelity ⟨ψ|ρ|ψ⟩ with a pure state.
    pub fn fidelity_pure(&self, psi: &[C64]) -> f64 {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut f = ZERO;
        for i in 0..psi.len() {
            for j in 0..psi.len() {
                f += psi[i].conj() * self.0[[i, j]] * psi[j];
            }
        }
        f.re / norm2
    }

    /// Tr(A ρ) for a sparse operator.
    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        op.entries().map(|(r, c, v)| v * self.0[[c, r]]).sum()
    }
}

/// Pure state with a tracked norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: Array1<C64>,
    pub norm: f64,
}

impl StateVector {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("amplitudes", "non-finite entry"));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(invalid("amplitudes", "zero vector"));
        }
        Ok(Self { amplitudes, norm })
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut a = Array1::zeros(dim);
        a[i] = C64::new(1.0, 0.0);
        Self { amplitudes: a, norm: 1.0 }
    }

    pub fn ground(space: &HilbertSpace) -> Self {
        Self::basis(space.total_dim, space.ground_index())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn normalized(&self) -> Self {
        let n = self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Self { amplitudes: self.amplitudes.mapv(|z| z / n), norm: 1.0 }
    }
}

/// Precomputed generator of the master equation
/// dρ/dt = −i[H, ρ] + κ(2aρa† − a†aρ − ρa†a).
#[derive(Clone, Debug)]
pub struct MasterGenerator {
    pub h: OperatorMatrix,
    space: HilbertSpace,
    kappa: f64,
    nph: Vec<f64>,
    /// √(n_i + 1)·(index i + 1 shares the atomic state), else 0.
    up: Vec<f64>,
}

impl MasterGenerator {
    pub fn new(params: &ModelParams, space: &HilbertSpace) -> Result<Self> {
        let h = interaction_hamiltonian(params, space)?;
        Ok(Self::from_hamiltonian(h, space, params.kappa))
    }

    pub fn from_hamiltonian(h: OperatorMatrix, space: &HilbertSpace, kappa: f64) -> Self {
        let d = space.total_dim;
        let nph = (0..d).map(|i| space.photons_of(i) as f64).collect();
        let up = (0..d)
            .map(|i| {
                let n = space.photons_of(i);
                if n + 1 < space.field_dim {
                    ((n + 1) as f64).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Self { h, space: *space, kappa, nph, up }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim
    }

    /// General form, valid for any square ρ.
    pub fn apply(&self, rho: ArrayView2<C64>, out: &mut Array2<C64>) {
        let d = self.dim();
        let x = self.h.mul_dense(rho);
        let rho_dag = rho.t().mapv(|z| z.conj());
        let y = self.h.mul_dense(rho_dag.view());
        let mi = C64::new(0.0, -1.0);
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] = mi * (x[[i, j]] - y[[j, i]].conj());
            }
        }
        self.add_dissipator(rho, out);
    }

    /// Fast form assuming ρ is Hermitian: [H, ρ] = X − X† with X = Hρ.
    /// `scratch` must be d×d.
    pub fn apply_hermitian(&self, rho: ArrayView2<C64>, out: &mut Array2<C64>, scratch: &mut Array2<C64>) {
        let d = self.dim();
        self.h.mul_dense_into(rho, scratch);
        let x = &*scratch;
        for i in 0..d {
            out[[i, i]] = C64::new(2.0 * x[[i, i]].im, 0.0);
            for j in i + 1..d {
                // −i(x_ij − conj(x_ji))
                let c = x[[i, j]] - x[[j, i]].conj();
                let v = C64::new(c.im, -c.re);
                out[[i, j]] = v;
                out[[j, i]] = v.conj();
            }
        }
        self.add_dissipator(rho, out);
    }

    fn add_dissipator(&self, rho: ArrayView2<C64>, out: &mut Array2<C64>) {
        let d = self.dim();
        let k = self.kappa;
        for i in 0..d {
            let ui = self.up[i];
            let ni = self.nph[i];
            for j in 0..d {
                let mut v = -k * (ni + self.nph[j]) * rho[[i, j]];
                let uj = self.up[j];
                if ui != 0.0 && uj != 0.0 {
                    v += 2.0 * k * ui * uj * rho[[i + 1, j + 1]];
                }
                out[[i, j]] += v;
            }
        }
    }
}

/// dρ/dt of the master equation. `h` must be Hermitian on the space of `params`.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &OperatorMatrix, params: &ModelParams) -> Result<Array2<C64>> {
    let space = build_space(params)?;
    let d = space.total_dim;
    if h.rows() != d || h.cols() != d {
        return Err(Error::DimMismatch { expected: d, got: h.rows() });
    }
    if rho.dim() != d || rho.0.ncols() != d {
        return Err(Error::DimMismatch { expected: d, got: rho.dim() });
    }
    let gen = MasterGenerator::from_hamiltonian(h.clone(), &space, params.kappa);
    let mut out = Array2::zeros((d, d));
    gen.apply(rho.0.view(), &mut out);
    Ok(out)
}

/// Partial trace over the atoms.
pub fn reduce_field(rho: &DensityMatrix, space: &HilbertSpace) -> DensityMatrix {
    let f = space.field_dim;
    let mut out = Array2::zeros((f, f));
    for p in 0..space.atom_dim {
        let o = p * f;
        out += &rho.0.slice(ndarray::s![o..o + f, o..o + f]);
    }
    DensityMatrix(out)
}

/// Partial trace over the field.
pub fn reduce_atoms(rho: &DensityMatrix, space: &HilbertSpace) -> DensityMatrix {
    let f = space.field_dim;
    let a = space.atom_dim;
    let mut out = Array2::zeros((a, a));
    for p in 0..a {
        for q in 0..a {
            let mut s = ZERO;
            for n in 0..f {
                s += rho.0[[p * f + n, q * f + n]];
            }
            out[[p, q]] = s;
        }
    }
    DensityMatrix(out)
}

/// Reduced atomic density matrix of a pure state given as a real or complex vector.
pub fn atomic_reduced_pure(psi: &[C64], space: &HilbertSpace) -> Array2<C64> {
    let f = space.field_dim;
    let a = space.atom_dim;
    let m = ndarray::ArrayView2::from_shape((a, f), psi).expect("shape");
    let mut out = Array2::zeros((a, a));
    for p in 0..a {
        for q in 0..a {
            out[[p, q]] = m.row(p).iter().zip(m.row(q)).map(|(x, y)| x * y.conj()).sum();
        }
    }
    out
}

/// Population summed over the top `levels` Fock states.
pub fn top_fock_population(rho: &DensityMatrix, space: &HilbertSpace, levels: usize) -> f64 {
    let f = space.field_dim;
    let start = f.saturating_sub(levels);
    let mut pop = 0.0;
    for p in 0..space.atom_dim {
        for n in start..f {
            let i = space.index(p, n);
            pop += rho.0[[i, i]].re;
        }
    }
    pop
}

/// Cutoff rule: population of the top five Fock levels above 1e−6.
pub fn cutoff_touched(rho: &DensityMatrix, space: &HilbertSpace) -> bool {
    top_fock_population(rho, space, 5) > 1e-6
}

pub(crate) fn frob_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}
