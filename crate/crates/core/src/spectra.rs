//! Dressed states, quasienergy scans versus drive, and quasienergy collapse.
//!
//! Every term of H̃_ε changes the photon number by one, so in a basis split by
//! photon parity H̃ = [[0, B], [Bᵀ, 0]]. Its spectrum is ±σᵢ(B) plus
//! |dim_even − dim_odd| exact zeros, and the levels nearest zero come from the
//! smallest eigenvalues of the banded SPD matrix BᵀB. That is the default
//! solver; a dense diagonalization of H̃ is kept for small spaces and ε = 0.

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ladders::small_d_matrix;
use crate::linalg::banded::BandedSpd;
use crate::linalg::dense::{symmetric_eigen, symmetric_eigenvalues};
use crate::linalg::lanczos;
use crate::model::{atomic_reduced_pure, build_space, hamiltonian_upper, spin_raise, HilbertSpace, ModelParams};
use crate::par::Exec;

/// Eigenstate of the undriven Hamiltonian inside the n-excitation manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct DressedState {
    pub n: usize,
    pub ell: f64,
    pub s: f64,
    /// Amplitudes c_{ℓ;p} on |p − s⟩ ⊗ |n − p⟩, p = 0..=min(n, 2s).
    pub coeffs: Vec<f64>,
    pub splitting: f64,
}

/// Labels for the `dim` states of a manifold, ascending in energy.
///
/// Full manifolds carry ℓ = −s..s. Truncated ones (n < 2s) are assigned from
/// the outside in: ±s, ±(s−1), …; an unpaired middle state gets ℓ = 0 for
/// integer s and ℓ = s − (dim−1)/2 otherwise.
pub fn ell_labels(dim: usize, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for k in 0..dim / 2 {
        out[k] = -(s - k as f64);
        out[dim - 1 - k] = s - k as f64;
    }
    if dim % 2 == 1 {
        let two_s = (2.0 * s).round() as usize;
        out[dim / 2] = if two_s % 2 == 0 { 0.0 } else { s - (dim / 2) as f64 };
    }
    out
}

/// Flips the sign so the largest-magnitude entry is positive.
pub(crate) fn fix_phase(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() + 1e-12 {
            best = x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dressed states of manifold `n` for spin `s`, sorted by splitting.
pub fn dressed_manifold(n: usize, s: f64, omega: f64) -> Vec<DressedState> {
    let two_s = (2.0 * s).round() as usize;
    let dim = n.min(two_s) + 1;
    let mut h = Array2::<f64>::zeros((dim, dim));
    for p in 0..dim - 1 {
        let m = p as f64 - s;
        let v = omega * spin_raise(s, m) * ((n - p) as f64).sqrt();
        h[[p + 1, p]] = v;
        h[[p, p + 1]] = v;
    }
    let (vals, vecs) = symmetric_eigen(h.view()).expect("small symmetric eigenproblem");
    let labels = ell_labels(dim, s);
    (0..dim)
        .map(|k| {
            let mut c: Vec<f64> = vecs.column(k).to_vec();
            fix_phase(&mut c);
            DressedState { n, ell: labels[k], s, coeffs: c, splitting: vals[k] }
        })
        .collect()
}

/// Collapse drives ε_col(m_s) = Ω|m_s| for m_s = (n_at mod 2)/2 … n_at/2.
pub fn collapse_points(n_at: usize, omega: f64) -> Vec<(f64, f64)> {
    let s = n_at as f64 / 2.0;
    let mut m = if n_at % 2 == 0 { 0.0 } else { 0.5 };
    let mut out = vec![];
    while m <= s + 1e-12 {
        out.push((m, omega * m));
        m += 1.0;
    }
    out
}

/// Positive branch of the single-atom quasienergy √n Ω Ξ^{3/2},
/// Ξ = [1 − (2ε/Ω)²]^{1/2}.
pub fn single_atom_quasienergy(n: usize, epsilon: f64, omega: f64) -> Result<f64> {
    let r = 2.0 * epsilon / omega;
    if !(r.is_finite()) || epsilon < 0.0 || r > 1.0 + 1e-14 {
        return Err(Error::Domain(format!("single-atom quasienergy needs 0 ≤ ε ≤ Ω/2, got ε={epsilon}, Ω={omega}")));
    }
    let xi = (1.0 - r * r).max(0.0).sqrt();
    Ok((n as f64).sqrt() * omega * xi.powf(1.5))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticLadder {
    pub energy: f64,
    pub step_detuning: f64,
    /// Set when n is too small for the asymptotic form to be trusted.
    pub outside_asymptotic_regime: bool,
}

/// Large-n ladder energy 2Ωm_s√n and step detuning Ωm_s/√n.
pub fn asymptotic_ladder(n: usize, m_s: f64, omega: f64) -> AsymptoticLadder {
    let nf = n as f64;
    let min_atoms = (2.0 * m_s.abs()).ceil().max(1.0);
    AsymptoticLadder {
        energy: 2.0 * omega * m_s * nf.sqrt(),
        step_detuning: if n == 0 { 0.0 } else { omega * m_s / nf.sqrt() },
        outside_asymptotic_regime: nf < 10.0 * min_atoms,
    }
}

/// R_y(π/2)|s, m⟩ as a vector over p = s + m'.
pub fn rotated_dicke(s: f64, m: f64) -> Vec<f64> {
    let d = small_d_matrix(s, std::f64::consts::FRAC_PI_2);
    let col = (m + s).round() as usize;
    d.column(col).to_vec()
}

/// ‖(ε + ΩS_x) R_y(π/2)|s, −|m_s|⟩‖ on the atomic space.
pub fn collapse_state_residual(m_s: f64, epsilon: f64, omega: f64, space: &HilbertSpace) -> Result<f64> {
    let s = space.s();
    if m_s.abs() > s + 1e-12 {
        return Err(invalid("m_s", format!("|m_s| = {} exceeds s = {s}", m_s.abs())));
    }
    let v = rotated_dicke(s, -m_s.abs());
    let a = space.atom_dim;
    let mut r = vec![0.0; a];
    for p in 0..a {
        r[p] += epsilon * v[p];
        let m = p as f64 - s;
        if p + 1 < a {
            // S_x = (S₊ + S₋)/2
            let e = 0.5 * omega * spin_raise(s, m);
            r[p + 1] += e * v[p];
            r[p] += e * v[p + 1];
        }
    }
    Ok(r.iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Dense below `dense_max_dim` and at ε = 0, banded otherwise.
    #[default]
    Auto,
    Dense,
    Banded,
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    /// Number of nonzero levels kept per grid point (rounded up to ± pairs).
    pub k_levels: usize,
    pub solver: SolverChoice,
    pub dense_max_dim: usize,
    /// Levels with |Ẽ| below `zero_tol·max(Ω, 1)` count as zero modes.
    pub zero_tol: f64,
    /// Collapse is declared when the refined gap minimum is below this fraction of Ω.
    pub collapse_threshold: f64,
    /// Minimum |⟨x_k|x_{k+1}⟩| to continue a branch.
    pub min_overlap: f64,
    pub exec: Exec,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            k_levels: 20,
            solver: SolverChoice::Auto,
            dense_max_dim: 400,
            zero_tol: 1e-8,
            collapse_threshold: 0.02,
            min_overlap: 0.5,
            exec: Exec::Parallel,
        }
    }
}

/// Nonzero levels nearest zero at one drive value.
#[derive(Clone, Debug)]
pub struct LevelSet {
    pub epsilon: f64,
    /// Ascending; symmetric under Ẽ → −Ẽ.
    pub values: Vec<f64>,
    /// Unit eigenvectors in the atom-major basis.
    pub vectors: Vec<Vec<f64>>,
    /// Count of levels with |Ẽ| below the zero tolerance.
    pub zero_modes: usize,
}

impl LevelSet {
    /// Smallest positive level.
    pub fn gap(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

struct ParitySplit {
    even: Vec<usize>,
    odd: Vec<usize>,
    // position of a full index inside its parity block
    pos: Vec<usize>,
}

fn parity_split(space: &HilbertSpace) -> ParitySplit {
    // photon-major inside each block keeps BᵀB banded
    let mut even = vec![];
    let mut odd = vec![];
    let mut pos = vec![0; space.total_dim];
    for n in 0..space.field_dim {
        for p in 0..space.atom_dim {
            let i = space.index(p, n);
            if n % 2 == 0 {
                pos[i] = even.len();
                even.push(i);
            } else {
                pos[i] = odd.len();
                odd.push(i);
            }
        }
    }
    ParitySplit { even, odd, pos }
}

fn zero_scale(params: &ModelParams, zero_tol: f64) -> f64 {
    zero_tol * params.omega.max(1.0)
}

/// Levels nearest zero by the bipartite banded route.
fn levels_banded(params: &ModelParams, space: &HilbertSpace, pairs: usize, zero_tol: f64) -> Result<LevelSet> {
    let split = parity_split(space);
    let ne = split.even.len();
    let no = split.odd.len();
    if no == 0 {
        return Ok(LevelSet { epsilon: params.epsilon, values: vec![], vectors: vec![], zero_modes: ne });
    }
    // rows of B (even) as lists of (odd position, value)
    let mut brows: Vec<Vec<(usize, f64)>> = vec![vec![]; ne];
    for (i, j, v) in hamiltonian_upper(params, space) {
        let (e, o) = if space.photons_of(i) % 2 == 0 { (i, j) } else { (j, i) };
        brows[split.pos[e]].push((split.pos[o], v));
    }
    let mut bw = 0;
    for row in &brows {
        for &(a, _) in row {
            for &(b, _) in row {
                bw = bw.max(a.abs_diff(b));
            }
        }
    }
    let zs = zero_scale(params, zero_tol);
    let shift = (1e-3 * zs) * (1e-3 * zs);
    let mut m = BandedSpd::zeros(no, bw);
    for row in &brows {
        for &(a, va) in row {
            for &(b, vb) in row {
                if b <= a {
                    m.add(a, b, va * vb);
                }
            }
        }
    }
    for i in 0..no {
        m.add(i, i, shift);
    }
    m.factor()?;
    let want = (pairs + 2).min(no);
    let res = lanczos::largest(
        |x, y| {
            y.copy_from_slice(x);
            m.solve_in_place(y);
        },
        no,
        want,
        1e-12,
    )?;
    let mut zero_modes = ne - no;
    let mut pos_vals = vec![];
    let mut pos_vecs = vec![];
    let mut neg_vecs = vec![];
    for (theta, v) in res.values.iter().zip(&res.vectors) {
        let sigma = (1.0 / theta - shift).max(0.0).sqrt();
        if sigma < zs {
            zero_modes += 2;
            continue;
        }
        if pos_vals.len() >= pairs {
            break;
        }
        // u = B v / σ
        let mut u = vec![0.0; ne];
        for (e, row) in brows.iter().enumerate() {
            u[e] = row.iter().map(|&(o, val)| val * v[o]).sum::<f64>() / sigma;
        }
        let mut xp = vec![0.0; space.total_dim];
        let mut xm = vec![0.0; space.total_dim];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (e, &full) in split.even.iter().enumerate() {
            xp[full] = r * u[e];
            xm[full] = r * u[e];
        }
        for (o, &full) in split.odd.iter().enumerate() {
            xp[full] = r * v[o];
            xm[full] = -r * v[o];
        }
        pos_vals.push(sigma);
        pos_vecs.push(xp);
        neg_vecs.push(xm);
    }
    Ok(assemble(params.epsilon, pos_vals, pos_vecs, neg_vecs, zero_modes))
}

fn assemble(eps: f64, pos: Vec<f64>, pv: Vec<Vec<f64>>, nv: Vec<Vec<f64>>, zero_modes: usize) -> LevelSet {
    let mut values = vec![];
    let mut vectors = vec![];
    for (v, x) in pos.iter().zip(nv).rev() {
        values.push(-v);
        vectors.push(x);
    }
    for (v, x) in pos.iter().zip(pv) {
        values.push(*v);
        vectors.push(x);
    }
    // pos is ascending from the solver; keep the whole set ascending
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let values2 = idx.iter().map(|&i| values[i]).collect();
    let vectors2 = idx.iter().map(|&i| vectors[i].clone()).collect();
    LevelSet { epsilon: eps, values: values2, vectors: vectors2, zero_modes }
}

fn dense_h(params: &ModelParams, space: &HilbertSpace) -> Array2<f64> {
    let d = space.total_dim;
    let mut h = Array2::<f64>::zeros((d, d));
    for (i, j, v) in hamiltonian_upper(params, space) {
        h[[i, j]] += v;
        h[[j, i]] += v;
    }
    h
}

/// Levels nearest zero by dense diagonalization of H̃.
fn levels_dense(params: &ModelParams, space: &HilbertSpace, pairs: usize, zero_tol: f64) -> Result<LevelSet> {
    let h = dense_h(params, space);
    let (vals, vecs) = symmetric_eigen(h.view())?;
    let zs = zero_scale(params, zero_tol);
    let zero_modes = vals.iter().filter(|v| v.abs() < zs).count();
    let mut pos: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] >= zs).collect();
    let mut neg: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= -zs).collect();
    pos.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    neg.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let take = pairs.min(pos.len()).min(neg.len());
    let mut values = vec![];
    let mut vectors = vec![];
    for &i in neg.iter().take(take).rev().chain(pos.iter().take(take)) {
        values.push(vals[i]);
        vectors.push(vecs.column(i).to_vec());
    }
    Ok(LevelSet { epsilon: params.epsilon, values, vectors, zero_modes })
}

/// The `k_levels` nonzero quasienergies nearest zero (as ± pairs) at one drive.
pub fn levels_near_zero(params: &ModelParams, k_levels: usize, opts: &ScanOptions) -> Result<LevelSet> {
    let space = build_space(params)?;
    let pairs = k_levels.div_ceil(2).max(1);
    let use_dense = match opts.solver {
        SolverChoice::Dense => true,
        SolverChoice::Banded => false,
        SolverChoice::Auto => space.total_dim <= opts.dense_max_dim || params.epsilon == 0.0,
    };
    if use_dense {
        levels_dense(params, &space, pairs, opts.zero_tol)
    } else {
        levels_banded(params, &space, pairs, opts.zero_tol)
    }
}

/// Smallest nonzero |Ẽ| at one drive (half the gap of the innermost ± pair).
pub fn gap_at(params: &ModelParams, opts: &ScanOptions) -> Result<f64> {
    Ok(levels_near_zero(params, 2, opts)?.gap())
}

/// Full eigenvalue list of H̃ (dense); for tests and small spaces.
pub fn full_spectrum(params: &ModelParams) -> Result<Vec<f64>> {
    let space = build_space(params)?;
    symmetric_eigenvalues(dense_h(params, &space).view())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseMarker {
    pub m_s: f64,
    pub eps_predicted: f64,
    pub eps_detected: f64,
    /// Smallest nonzero |Ẽ| at the detected point.
    pub gap: f64,
}

/// Tracked quasienergy branch over a contiguous run of grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub start: usize,
    pub values: Vec<f64>,
    pub ms_label: f64,
    /// Smallest continuation overlap along the branch (1 for single points).
    pub min_overlap: f64,
}

impl Branch {
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }
}

#[derive(Clone, Debug)]
pub struct QuasienergyScan {
    pub eps_grid: Vec<f64>,
    pub branches: Vec<Branch>,
    pub collapse_markers: Vec<CollapseMarker>,
    pub zero_modes: Vec<usize>,
    /// Grid points whose solve failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl QuasienergyScan {
    /// Values of all branches present at grid index `i`.
    pub fn levels_at(&self, i: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .branches
            .iter()
            .filter(|b| i >= b.start && i < b.end())
            .map(|b| b.values[i - b.start])
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("eps_grid", "empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("eps_grid", "must be strictly ascending"));
    }
    if grid[0] < 0.0 {
        return Err(invalid("eps_grid", "drive amplitudes must be non-negative"));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weight of the atomic reduced state on R_y(π/2)|s, ±|m|⟩.
fn group_weight(rho_a: &Array2<C64>, s: f64, m: f64) -> f64 {
    let mut w = 0.0;
    let signs: &[f64] = if m == 0.0 { &[1.0] } else { &[1.0, -1.0] };
    for &sg in signs {
        let v = rotated_dicke(s, sg * m.abs());
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..v.len() {
            for q in 0..v.len() {
                acc += v[p] * rho_a[[p, q]] * v[q];
            }
        }
        w += acc.re;
    }
    w
}

fn atomic_group(vec: &[f64], space: &HilbertSpace, candidates: &[(f64, f64)]) -> f64 {
    let psi: Vec<C64> = vec.iter().map(|&x| C64::new(x, 0.0)).collect();
    let rho = atomic_reduced_pure(&psi, space);
    let s = space.s();
    let mut best = (f64::NEG_INFINITY, candidates[0].0);
    for &(m, _) in candidates {
        let w = group_weight(&rho, s, m);
        if w > best.0 {
            best = (w, m);
        }
    }
    best.1
}

/// Label by nearest predicted collapse, ties broken by atomic overlap.
fn label_by_collapse(eps: f64, preds: &[(f64, f64)], tie_vec: Option<(&[f64], &HilbertSpace)>) -> f64 {
    let mut dists: Vec<(f64, f64)> = preds.iter().map(|&(m, e)| ((e - eps).abs(), m)).collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if dists.len() > 1 && (dists[1].0 - dists[0].0).abs() <= 1e-9 * eps.max(1.0) {
        if let Some((v, sp)) = tie_vec {
            let tied: Vec<(f64, f64)> = preds
                .iter()
                .copied()
                .filter(|&(_, e)| ((e - eps).abs() - dists[0].0).abs() <= 1e-9 * eps.max(1.0))
                .collect();
            return atomic_group(v, sp, &tied);
        }
    }
    dists[0].1
}

/// Options for collapse detection from a gap curve.
#[derive(Clone, Debug)]
pub struct CollapseOptions {
    pub threshold: f64,
    /// Refinement stops when the bracket is below `refine_tol·Ω`.
    pub refine_tol: f64,
    pub scan: ScanOptions,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self { threshold: 0.02, refine_tol: 1e-7, scan: ScanOptions::default() }
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Locates collapses as interior local minima of the innermost gap that fall
/// below `threshold·Ω` after refinement, labeled by nearest ε_col(m_s).
pub fn detect_collapses_from_gaps(
    params: &ModelParams,
    eps_grid: &[f64],
    gaps: &[f64],
    opts: &CollapseOptions,
) -> Result<Vec<CollapseMarker>> {
    let preds: Vec<(f64, f64)> =
        collapse_points(params.n_at, params.omega).into_iter().filter(|&(m, _)| m > 0.0).collect();
    if preds.is_empty() {
        return Ok(vec![]);
    }
    let space = build_space(params)?;
    let mut brackets = vec![];
    for i in 1..eps_grid.len().saturating_sub(1) {
        if gaps[i] <= gaps[i - 1] && gaps[i] <= gaps[i + 1] && gaps[i].is_finite() {
            brackets.push((eps_grid[i - 1], eps_grid[i + 1]));
        }
    }
    let refined: Vec<Result<(f64, f64)>> = opts.scan.exec.map_slice(&brackets, |&(a, b)| {
        let f = |e: f64| gap_at(&params.with_epsilon(e), &opts.scan).unwrap_or(f64::INFINITY);
        Ok(golden_min(f, a, b, opts.refine_tol * params.omega.max(1e-300)))
    });
    let mut out: Vec<CollapseMarker> = vec![];
    for r in refined {
        let (eps, gap) = r?;
        if !(gap < opts.threshold * params.omega) {
            continue;
        }
        let near_tie = preds.len() > 1;
        let tie = if near_tie {
            let ls = levels_near_zero(&params.with_epsilon(eps), 2, &opts.scan)?;
            ls.vectors.into_iter().find(|_| true)
        } else {
            None
        };
        let m = label_by_collapse(eps, &preds, tie.as_deref().map(|v| (v, &space)));
        let pred = preds.iter().find(|p| p.0 == m).map(|p| p.1).unwrap_or(f64::NAN);
        out.push(CollapseMarker { m_s: m, eps_predicted: pred, eps_detected: eps, gap });
    }
    Ok(out)
}

/// Gap curve on a grid followed by [`detect_collapses_from_gaps`].
pub fn detect_collapses(params: &ModelParams, eps_grid: &[f64], opts: &CollapseOptions) -> Result<Vec<CollapseMarker>> {
    check_grid(eps_grid)?;
    let gaps: Vec<Result<f64>> =
        opts.scan.exec.map_slice(eps_grid, |&e| gap_at(&params.with_epsilon(e), &opts.scan));
    let gaps: Vec<f64> = gaps.into_iter().map(|g| g.unwrap_or(f64::INFINITY)).collect();
    detect_collapses_from_gaps(params, eps_grid, &gaps, opts)
}

/// Quasienergies nearest zero over a drive grid, tracked into branches.
pub fn quasienergy_scan(params: &ModelParams, eps_grid: &[f64], opts: &ScanOptions) -> Result<QuasienergyScan> {
    if opts.k_levels < 2 {
        return Err(invalid("k_levels", "must be at least 2"));
    }
    check_grid(eps_grid)?;
    let space = build_space(params)?;
    let sets: Vec<Result<LevelSet>> =
        opts.exec.map_slice(eps_grid, |&e| levels_near_zero(&params.with_epsilon(e), opts.k_levels, opts));
    let mut failures = vec![];
    let sets: Vec<Option<LevelSet>> = sets
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(s) => Some(s),
            Err(e) => {
                failures.push((i, e.to_string()));
                None
            }
        })
        .collect();

    // continuation
    struct Open {
        id: usize,
        level: usize,
    }
    let mut branches: Vec<Branch> = vec![];
    let mut open: Vec<Open> = vec![];
    for (k, set) in sets.iter().enumerate() {
        let Some(set) = set else {
            open.clear();
            continue;
        };
        let prev = if k > 0 { sets[k - 1].as_ref() } else { None };
        let mut taken = vec![false; set.values.len()];
        let mut next_open = vec![];
        if let Some(prev) = prev {
            let mut cand = vec![];
            for (oi, o) in open.iter().enumerate() {
                for j in 0..set.values.len() {
                    let ov = dot(&prev.vectors[o.level], &set.vectors[j]).abs();
                    if ov >= opts.min_overlap {
                        cand.push((ov, oi, j));
                    }
                }
            }
            cand.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut used = vec![false; open.len()];
            for (ov, oi, j) in cand {
                if used[oi] || taken[j] {
                    continue;
                }
                used[oi] = true;
                taken[j] = true;
                let b = &mut branches[open[oi].id];
                b.values.push(set.values[j]);
                b.min_overlap = b.min_overlap.min(ov);
                next_open.push(Open { id: open[oi].id, level: j });
            }
        }
        for j in 0..set.values.len() {
            if !taken[j] {
                let id = branches.len();
                branches.push(Branch { id, start: k, values: vec![set.values[j]], ms_label: f64::NAN, min_overlap: 1.0 });
                next_open.push(Open { id, level: j });
            }
        }
        open = next_open;
    }

    // collapse markers from the innermost gap curve
    let gaps: Vec<f64> = sets.iter().map(|s| s.as_ref().map(|s| s.gap()).unwrap_or(f64::INFINITY)).collect();
    let copts = CollapseOptions { threshold: opts.collapse_threshold, refine_tol: 1e-7, scan: opts.clone() };
    let markers = detect_collapses_from_gaps(params, eps_grid, &gaps, &copts)?;

    // m_s labels
    let preds = collapse_points(params.n_at, params.omega);
    let groups: Vec<(f64, f64)> = preds.clone();
    for b in branches.iter_mut() {
        let (imin, vmin) = b
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.abs()))
            .fold((0, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a });
        let gi = b.start + imin;
        let interior = gi > 0 && gi + 1 < eps_grid.len();
        // representative eigenvector: the point of smallest |Ẽ|
        let set = sets[gi].as_ref().expect("branch point has a level set");
        let level = set.values.iter().position(|&v| v == b.values[imin]).unwrap_or(0);
        let vec = &set.vectors[level];
        b.ms_label = if interior && vmin < opts.collapse_threshold * params.omega {
            let positive: Vec<(f64, f64)> = preds.iter().copied().filter(|p| p.0 > 0.0).collect();
            let pool = if positive.is_empty() { &preds } else { &positive };
            label_by_collapse(eps_grid[gi], pool, Some((vec, &space)))
        } else {
            atomic_group(vec, &space, &groups)
        };
    }
    let zero_modes = sets.iter().map(|s| s.as_ref().map(|s| s.zero_modes).unwrap_or(0)).collect();
    Ok(QuasienergyScan { eps_grid: eps_grid.to_vec(), branches, collapse_markers: markers, zero_modes, failures })
}

/// Largest violation of Ẽ → −Ẽ symmetry in a level list, relative to max(1, |Ẽ|).
pub fn symmetry_violation(levels: ArrayView1<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for &e in levels.iter() {
        let best = levels.iter().map(|&f| (f + e).abs()).fold(f64::INFINITY, f64::min);
        worst = worst.max(best / e.abs().max(1.0));
    }
    worst
}
