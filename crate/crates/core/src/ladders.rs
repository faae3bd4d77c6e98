//! Wigner rotation matrices, dressed-state jump coefficients and pointer-state
//! residuals.
//!
//! Jump tables map a source manifold n to the target manifold n − 1:
//! c_{ℓ→ℓ'} = ⟨ψ_{n−1,ℓ'}| â |ψ_{n,ℓ}⟩.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::dense::hermitian_eigen;
use crate::model::{spin_raise, HilbertSpace};
use crate::spectra::dressed_manifold;

fn two_s(s: f64) -> usize {
    (2.0 * s).round() as usize
}

fn check_spin(s: f64) -> Result<()> {
    if !(s >= 0.0) || ((2.0 * s) - (2.0 * s).round()).abs() > 1e-12 {
        return Err(invalid("s", format!("must be a non-negative half-integer, got {s}")));
    }
    Ok(())
}

/// Full matrix d^{(s)}_{m₁,m₂}(β), indexed by (m₁ + s, m₂ + s), built by
/// exponentiating −iβŜ_y through its eigendecomposition.
pub fn small_d_matrix(s: f64, beta: f64) -> Array2<f64> {
    let d = two_s(s) + 1;
    let mut sy = Array2::<C64>::zeros((d, d));
    for p in 0..d - 1 {
        let m = p as f64 - s;
        let c = 0.5 * spin_raise(s, m);
        // S_y = (S₊ − S₋)/(2i)
        sy[[p + 1, p]] = C64::new(0.0, -c);
        sy[[p, p + 1]] = C64::new(0.0, c);
    }
    let (vals, vecs) = hermitian_eigen(sy.view()).expect("spin eigenproblem");
    let mut out = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += vecs[[i, k]] * C64::from_polar(1.0, -beta * vals[k]) * vecs[[j, k]].conj();
            }
            out[[i, j]] = acc.re;
        }
    }
    out
}

/// d^{(s)}_{m₁,m₂}(β) = ⟨s, m₁| e^{−iβŜ_y} |s, m₂⟩.
pub fn wigner_small_d(s: f64, m1: f64, m2: f64, beta: f64) -> Result<f64> {
    check_spin(s)?;
    if m1.abs() > s + 1e-12 || m2.abs() > s + 1e-12 {
        return Err(invalid("m", format!("|m1|, |m2| must not exceed s = {s}")));
    }
    let d = small_d_matrix(s, beta);
    Ok(d[[(m1 + s).round() as usize, (m2 + s).round() as usize]])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpMethod {
    ExactNumeric,
    Asymptotic,
    ClosedForm,
}

impl JumpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpMethod::ExactNumeric => "exact-numeric",
            JumpMethod::Asymptotic => "asymptotic",
            JumpMethod::ClosedForm => "closed-form",
        }
    }
}

/// c_{ℓ→ℓ'} indexed by (ℓ + s, ℓ' + s); absent dressed states give zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTable {
    pub n: usize,
    pub s: f64,
    pub coeffs: Array2<f64>,
    pub method: JumpMethod,
}

impl JumpTable {
    pub fn ell(&self, index: usize) -> f64 {
        index as f64 - self.s
    }

    pub fn get(&self, from: f64, to: f64) -> f64 {
        self.coeffs[[(from + self.s).round() as usize, (to + self.s).round() as usize]]
    }

    /// Σ_ℓ' |c_{ℓ→ℓ'}|² for every source ℓ.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.coeffs.rows().into_iter().map(|r| r.iter().map(|x| x * x).sum()).collect()
    }

    /// max_{ℓ≠ℓ'} |c| / min_ℓ |c_{ℓ→ℓ}| over the populated rows.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let d = self.coeffs.nrows();
        let mut off: f64 = 0.0;
        let mut diag = f64::INFINITY;
        for i in 0..d {
            for j in 0..d {
                let c = self.coeffs[[i, j]].abs();
                if i == j {
                    if self.coeffs.row(i).iter().any(|x| *x != 0.0) {
                        diag = diag.min(c);
                    }
                } else {
                    off = off.max(c);
                }
            }
        }
        off / diag
    }

    /// Copy of `self` with per-state signs chosen to match `reference`.
    ///
    /// Dressed states are defined up to sign, so two tables for the same
    /// (s, n) can differ by c → σ'_{ℓ'} c σ_ℓ. Signs are propagated along the
    /// entries that are non-negligible in both tables.
    pub fn gauge_aligned_to(&self, reference: &JumpTable) -> JumpTable {
        let d = self.coeffs.nrows();
        let thr = 1e-9 * reference.coeffs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        let mut src: Vec<Option<f64>> = vec![None; d];
        let mut tgt: Vec<Option<f64>> = vec![None; d];
        loop {
            let mut progressed = false;
            let start = (0..d).find(|&i| src[i].is_none() && (0..d).any(|j| self.coeffs[[i, j]].abs() > thr));
            if src.iter().all(|x| x.is_some()) || start.is_none() {
                break;
            }
            src[start.unwrap()] = Some(1.0);
            loop {
                let mut changed = false;
                for i in 0..d {
                    for j in 0..d {
                        let a = self.coeffs[[i, j]];
                        let b = reference.coeffs[[i, j]];
                        if a.abs() <= thr || b.abs() <= thr {
                            continue;
                        }
                        let rel = (a * b).signum();
                        match (src[i], tgt[j]) {
                            (Some(si), None) => {
                                tgt[j] = Some(rel * si);
                                changed = true;
                            }
                            (None, Some(tj)) => {
                                src[i] = Some(rel * tj);
                                changed = true;
                            }
                            _ => {}
                        }
                    }
                }
                if !changed {
                    break;
                }
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..d {
                out.coeffs[[i, j]] *= src[i].unwrap_or(1.0) * tgt[j].unwrap_or(1.0);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &JumpTable) -> f64 {
        self.coeffs.iter().zip(other.coeffs.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn table_index(ell: f64, s: f64) -> usize {
    (ell + s).round() as usize
}

/// Expectation ⟨a†a⟩ of every dressed state in manifold n, indexed by ℓ + s.
pub fn dressed_photon_numbers(s: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; two_s(s) + 1];
    for st in dressed_manifold(n, s, 1.0) {
        out[table_index(st.ell, s)] =
            st.coeffs.iter().enumerate().map(|(p, c)| c * c * (n - p) as f64).sum();
    }
    out
}

/// Jump table for spin `s` from manifold `n` to `n − 1`.
pub fn jump_coefficients(s: f64, n: usize, method: JumpMethod) -> Result<JumpTable> {
    check_spin(s)?;
    if n < 1 {
        return Err(invalid("n", "manifold too small: need n ≥ 1"));
    }
    let d = two_s(s) + 1;
    let mut coeffs = Array2::<f64>::zeros((d, d));
    match method {
        JumpMethod::ExactNumeric => {
            let src = dressed_manifold(n, s, 1.0);
            let tgt = dressed_manifold(n - 1, s, 1.0);
            for a in &src {
                // â|p, n−p⟩ = √(n−p)|p, n−1−p⟩
                for b in &tgt {
                    let mut c = 0.0;
                    for (p, &cp) in a.coeffs.iter().enumerate() {
                        if p < b.coeffs.len() && n > p {
                            c += b.coeffs[p] * ((n - p) as f64).sqrt() * cp;
                        }
                    }
                    coeffs[[table_index(a.ell, s), table_index(b.ell, s)]] = c;
                }
            }
        }
        JumpMethod::Asymptotic => {
            let n_at = two_s(s);
            if n < 10 * n_at.max(1) {
                return Err(invalid("n", format!("asymptotic table needs n ≥ 10·n_at = {}", 10 * n_at.max(1))));
            }
            let dm = small_d_matrix(s, std::f64::consts::FRAC_PI_2);
            for i in 0..d {
                for j in 0..d {
                    let mut c = 0.0;
                    for k in 0..d {
                        let ma = k as f64 - s;
                        let rad = n as f64 - n_at as f64 / 2.0 - ma;
                        if rad < 0.0 {
                            return Err(Error::Domain(format!("negative radicand {rad} in asymptotic table")));
                        }
                        c += dm[[i, k]] * dm[[j, k]] * rad.sqrt();
                    }
                    coeffs[[i, j]] = c;
                }
            }
        }
        JumpMethod::ClosedForm => {
            if two_s(s) != 2 {
                return Err(invalid("s", "closed forms exist for s = 1 only"));
            }
            return two_atom_jump_oracle(n);
        }
    }
    Ok(JumpTable { n, s, coeffs, method })
}

/// Closed-form two-atom (s = 1) table from manifold n to n − 1, in the gauge
///
///   |ψ_{n,0}⟩ ∝ √(n−1)|0, n⟩ − √n|2, n−2⟩,
///   |ψ_{n,±}⟩ ∝ √n|0, n⟩ ± √(2n−1)|1, n−1⟩ + √(n−1)|2, n−2⟩,
///
/// where every entry comes out non-negative. With q = n − 1:
///
///   0 → 0 : √(q(q+1)/(q²−¼)) · √(q−1)
///   0 → ± : √(q+1) / (2√2 · √(q²−¼))
///   ± → ± : √(q/(q²−¼)) · (2q + √(4q²−1))/4
///   ± → ∓ : √(q/(q²−¼)) · (2q − √(4q²−1))/4
///   ± → 0 : √((q−1)/(q²−¼)) / √8
///
/// The ℓ = 0 source row is the one consistent with completeness of the
/// target manifold.
pub fn two_atom_jump_oracle(n: usize) -> Result<JumpTable> {
    if n < 2 {
        return Err(invalid("n", "two-atom closed form needs n ≥ 2"));
    }
    let q = (n - 1) as f64;
    let den = q * q - 0.25;
    let mut c = Array2::<f64>::zeros((3, 3));
    let (m, z, p) = (0usize, 1usize, 2usize);
    c[[z, z]] = (q * (q + 1.0) / den).sqrt() * (q - 1.0).sqrt();
    let zpm = (q + 1.0).sqrt() / (2.0 * 2f64.sqrt() * den.sqrt());
    c[[z, p]] = zpm;
    c[[z, m]] = zpm;
    let pre = (q / den).sqrt();
    let root = (4.0 * q * q - 1.0).sqrt();
    let same = pre * (2.0 * q + root) / 4.0;
    let cross = pre * (2.0 * q - root) / 4.0;
    c[[p, p]] = same;
    c[[m, m]] = same;
    c[[p, m]] = cross;
    c[[m, p]] = cross;
    let to0 = ((q - 1.0) / den).sqrt() / 8f64.sqrt();
    c[[p, z]] = to0;
    c[[m, z]] = to0;
    Ok(JumpTable { n, s: 1.0, coeffs: c, method: JumpMethod::ClosedForm })
}

/// Superposition Σ_n c_n |ψ_{n, ℓ}⟩ over a contiguous window of manifolds.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerWindow {
    pub n_min: usize,
    pub coeffs: Vec<C64>,
}

impl PointerWindow {
    pub fn n_top(&self) -> usize {
        self.n_min + self.coeffs.len().saturating_sub(1)
    }

    /// Coherent-state weights √Poisson(n; n̄) on [n_lo, n_hi].
    pub fn coherent(nbar: f64, n_lo: usize, n_hi: usize) -> Self {
        let coeffs = (n_lo..=n_hi)
            .map(|n| {
                let lnp = -nbar + n as f64 * nbar.ln() - ln_factorial(n);
                C64::new((0.5 * lnp).exp(), 0.0)
            })
            .collect();
        Self { n_min: n_lo, coeffs }
    }

    /// Coherent window of ±`half_width_sd` standard deviations, floored at `n_floor`.
    pub fn coherent_centered(nbar: f64, half_width_sd: f64, n_floor: usize) -> Self {
        let sd = nbar.sqrt();
        let lo = ((nbar - half_width_sd * sd).floor().max(0.0) as usize).max(n_floor);
        let hi = (nbar + half_width_sd * sd).ceil() as usize;
        Self::coherent(nbar, lo, hi.max(lo))
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Relative residual ‖(â − λ)χ‖ / ‖âχ‖ with the optimal λ = ⟨χ|â|χ⟩/⟨χ|χ⟩
/// for χ = Σ c_n |ψ_{n, ℓ=m_s}⟩.
///
/// Normalizing by ‖âχ‖ rather than ‖λχ‖ keeps the value finite when λ = 0
/// (a single-manifold χ gives exactly 1).
pub fn pointer_residual(window: &PointerWindow, s: f64, m_s: f64, space: &HilbertSpace) -> Result<f64> {
    check_spin(s)?;
    if (space.s() - s).abs() > 1e-12 {
        return Err(invalid("space", "spin of the space does not match s"));
    }
    if window.coeffs.is_empty() {
        return Err(invalid("window", "empty coefficient window"));
    }
    if window.n_min < 1 {
        return Err(invalid("window", "n_min must be at least 1"));
    }
    if window.n_top() > space.n_max() {
        return Err(Error::Domain(format!(
            "pointer window reaches n = {} beyond the cutoff n_max = {}",
            window.n_top(),
            space.n_max()
        )));
    }
    let mut chi = vec![C64::new(0.0, 0.0); space.total_dim];
    for (k, &c) in window.coeffs.iter().enumerate() {
        let n = window.n_min + k;
        let st = dressed_manifold(n, s, 1.0)
            .into_iter()
            .find(|st| (st.ell - m_s).abs() < 1e-9)
            .ok_or_else(|| invalid("m_s", format!("no dressed state with ℓ = {m_s} in manifold {n}")))?;
        for (p, &cp) in st.coeffs.iter().enumerate() {
            chi[space.index(p, n - p)] += c * cp;
        }
    }
    let mut achi = vec![C64::new(0.0, 0.0); space.total_dim];
    for i in 0..space.total_dim {
        let nph = space.photons_of(i);
        if nph >= 1 {
            achi[i - 1] = chi[i] * (nph as f64).sqrt();
        }
    }
    let norm2: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
    let lam: C64 = chi.iter().zip(&achi).map(|(x, y)| x.conj() * y).sum::<C64>() / norm2;
    let num: f64 = achi.iter().zip(&chi).map(|(y, x)| (y - lam * x).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = achi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(num / den)
}
