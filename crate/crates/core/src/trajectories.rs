//! Heterodyne unraveling of the master equation, filtering of the measured
//! current, ensemble statistics and dwell classification.
//!
//! The conditional state follows the Itô equation
//!
//!   dψ = [−iH − κa†a + 2κ⟨a⟩* a] ψ dt + √(2κ) a ψ dZ*,
//!
//! renormalized after every Euler–Maruyama step, with dZ a complex Wiener
//! increment (E dZ dZ* = dt, E dZ² = 0). The current is
//! dq = √κ ⟨a⟩ dt + dZ with the same dZ.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::meanfield::{mf_fixed_points, FixedPointKind};
use crate::model::{build_space, interaction_hamiltonian, HilbertSpace, ModelParams, OperatorMatrix, StateVector};
use crate::par::Exec;

/// Per-trajectory generator: stream `index` of the ChaCha8 generator keyed by
/// `seed`, so ensembles are independent of scheduling order.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeterodyneRecord {
    /// n_steps + 1 times starting at 0.
    pub t_grid: Vec<f64>,
    /// n_steps increments; dq[k] covers [t_k, t_{k+1}).
    pub dq: Vec<C64>,
    /// Filtered current on the t grid (ᾱ(0) = 0).
    pub alpha_bar: Vec<C64>,
    pub seed: u64,
    pub index: u64,
    pub kappa_filt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub alpha: C64,
    pub nbar: f64,
    pub sz: f64,
    /// ‖ψ‖ after the last step, before renormalization.
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// States at the sample times when requested.
    pub states: Vec<StateVector>,
    pub record: HeterodyneRecord,
    pub final_state: StateVector,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    pub kappa_filt: f64,
    /// Keep one sample every this many steps (first and last always kept).
    pub sample_every: usize,
    pub keep_states: bool,
    pub filter_sign: FilterSign,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { kappa_filt: 1.0, sample_every: 100, keep_states: false, filter_sign: FilterSign::Stable }
    }
}

struct Stepper {
    h: OperatorMatrix,
    space: HilbertSpace,
    kappa: f64,
    up: Vec<f64>,
    nph: Vec<f64>,
    hpsi: Vec<C64>,
    apsi: Vec<C64>,
}

impl Stepper {
    fn new(params: &ModelParams, space: &HilbertSpace) -> Result<Self> {
        let h = interaction_hamiltonian(params, space)?;
        let d = space.total_dim;
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
        let nph = (0..d).map(|i| space.photons_of(i) as f64).collect();
        Ok(Self { h, space: *space, kappa: params.kappa, up, nph, hpsi: vec![C64::new(0.0, 0.0); d], apsi: vec![C64::new(0.0, 0.0); d] })
    }

    fn apply_a(&self, psi: &[C64], out: &mut [C64]) {
        for i in 0..psi.len() {
            out[i] = if self.up[i] != 0.0 { psi[i + 1] * self.up[i] } else { C64::new(0.0, 0.0) };
        }
    }

    /// ⟨a⟩ of a normalized state.
    fn mean_a(&self, psi: &[C64]) -> C64 {
        (0..psi.len()).filter(|&i| self.up[i] != 0.0).map(|i| psi[i].conj() * psi[i + 1] * self.up[i]).sum()
    }

    fn sample(&self, psi: &[C64], t: f64, norm: f64) -> TrajectorySample {
        let mut nbar = 0.0;
        let mut sz = 0.0;
        for (i, z) in psi.iter().enumerate() {
            let p = z.norm_sqr();
            nbar += self.nph[i] * p;
            sz += self.space.m_of(i) * p;
        }
        TrajectorySample { t, alpha: self.mean_a(psi), nbar, sz, norm }
    }

    /// One Euler–Maruyama step; returns ‖ψ‖ before renormalization.
    fn step(&mut self, psi: &mut [C64], dt: f64, dz: C64, mean_a: C64) -> f64 {
        self.h.matvec_into(psi, &mut self.hpsi);
        let mut apsi = std::mem::take(&mut self.apsi);
        self.apply_a(psi, &mut apsi);
        let k = self.kappa;
        let drive = 2.0 * k * mean_a.conj() * dt + (2.0 * k).sqrt() * dz.conj();
        let mi = C64::new(0.0, -1.0);
        for i in 0..psi.len() {
            psi[i] += (mi * self.hpsi[i] - k * self.nph[i] * psi[i]) * dt + drive * apsi[i];
        }
        self.apsi = apsi;
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm.is_finite() && norm > 0.0 {
            psi.iter_mut().for_each(|z| *z /= norm);
        }
        norm
    }
}

fn complex_increment(rng: &mut ChaCha8Rng, dt: f64) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    C64::new(x, y) * (0.5 * dt).sqrt()
}

/// One heterodyne trajectory on stream 0 of `seed`.
pub fn simulate_trajectory(
    params: &ModelParams,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_trajectory_with(params, psi0, t_final, dt, seed, 0, &TrajectoryOptions::default())
}

pub fn simulate_trajectory_with(
    params: &ModelParams,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    seed: u64,
    index: u64,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    params.validate()?;
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(invalid("dt", "dt must be positive and t_final non-negative"));
    }
    if !(opts.kappa_filt > 0.0) {
        return Err(invalid("kappa_filt", "must be positive"));
    }
    let space = build_space(params)?;
    if psi0.dim() != space.total_dim {
        return Err(Error::DimMismatch { expected: space.total_dim, got: psi0.dim() });
    }
    let mut st = Stepper::new(params, &space)?;
    let mut rng = trajectory_rng(seed, index);
    let steps = (t_final / dt).round() as usize;
    let every = opts.sample_every.max(1);
    let mut psi: Vec<C64> = psi0.normalized().amplitudes.to_vec();
    let mut dq = Vec::with_capacity(steps);
    let mut t_grid = Vec::with_capacity(steps + 1);
    t_grid.push(0.0);
    let mut samples = vec![st.sample(&psi, 0.0, 1.0)];
    let mut states = Vec::new();
    if opts.keep_states {
        states.push(StateVector::new(ndarray::Array1::from(psi.clone()))?);
    }
    let sk = params.kappa.sqrt();
    for n in 1..=steps {
        let mean_a = st.mean_a(&psi);
        let dz = complex_increment(&mut rng, dt);
        dq.push(sk * mean_a * dt + dz);
        let norm = st.step(&mut psi, dt, dz, mean_a);
        if !(1e-100..=1e100).contains(&norm) {
            return Err(Error::TrajectoryAborted { seed, index, reason: format!("norm {norm:e} at t = {}", n as f64 * dt) });
        }
        let t = n as f64 * dt;
        t_grid.push(t);
        if n % every == 0 || n == steps {
            samples.push(st.sample(&psi, t, norm));
            if opts.keep_states {
                states.push(StateVector::new(ndarray::Array1::from(psi.clone()))?);
            }
        }
    }
    let alpha_bar = filter_record(&dq, dt, params.kappa, opts.kappa_filt, opts.filter_sign)?;
    let final_state = StateVector::new(ndarray::Array1::from(psi))?;
    Ok(Trajectory {
        samples,
        states,
        record: HeterodyneRecord { t_grid, dq, alpha_bar, seed, index, kappa_filt: opts.kappa_filt },
        final_state,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterSign {
    /// dᾱ = ½κ_f(√κ dq − ᾱ dt): low-pass settling on κ⟨a⟩.
    #[default]
    Stable,
    /// dᾱ = ½κ_f(ᾱ dt − √κ dq): the opposite sign, which grows without bound.
    Literal,
}

/// First-order filter of the current, returning ᾱ on the n + 1 point grid.
pub fn filter_record(dq: &[C64], dt: f64, kappa: f64, kappa_filt: f64, sign: FilterSign) -> Result<Vec<C64>> {
    if !(kappa_filt > 0.0) {
        return Err(invalid("kappa_filt", "must be positive"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let g = 0.5 * kappa_filt;
    let sk = kappa.sqrt();
    let s = match sign {
        FilterSign::Stable => 1.0,
        FilterSign::Literal => -1.0,
    };
    let mut out = Vec::with_capacity(dq.len() + 1);
    let mut a = C64::new(0.0, 0.0);
    out.push(a);
    for &q in dq {
        a += s * g * (sk * q - a * dt);
        out.push(a);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub mean_alpha: Vec<C64>,
    /// Standard errors of Re⟨a⟩ and Im⟨a⟩ packed as re + i·im.
    pub se_alpha: Vec<C64>,
    pub mean_nbar: Vec<f64>,
    pub se_nbar: Vec<f64>,
    pub mean_sz: Vec<f64>,
    pub se_sz: Vec<f64>,
    pub n_used: usize,
    pub n_aborted: usize,
    pub aborted: Vec<(u64, String)>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Means and standard errors over `n_traj` trajectories from ψ0, trajectory
/// i using stream i of `seed0`. Aborted trajectories are excluded and counted.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_mean(
    params: &ModelParams,
    psi0: &StateVector,
    n_traj: usize,
    t_final: f64,
    dt: f64,
    seed0: u64,
    opts: &TrajectoryOptions,
    exec: Exec,
) -> Result<EnsembleStats> {
    if n_traj < 1 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    let runs = exec.map(n_traj, |i| {
        simulate_trajectory_with(params, psi0, t_final, dt, seed0, i as u64, opts).map(|t| t.samples)
    });
    let mut used: Vec<Vec<TrajectorySample>> = Vec::new();
    let mut aborted = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(s) => used.push(s),
            Err(Error::TrajectoryAborted { reason, .. }) => aborted.push((i as u64, reason)),
            Err(e) => return Err(e),
        }
    }
    if used.is_empty() {
        return Err(Error::TrajectoryAborted { seed: seed0, index: 0, reason: "every trajectory aborted".into() });
    }
    let ns = used[0].len();
    let mut st = EnsembleStats {
        t: used[0].iter().map(|s| s.t).collect(),
        mean_alpha: vec![],
        se_alpha: vec![],
        mean_nbar: vec![],
        se_nbar: vec![],
        mean_sz: vec![],
        se_sz: vec![],
        n_used: used.len(),
        n_aborted: aborted.len(),
        aborted,
    };
    for k in 0..ns {
        let col = |f: &dyn Fn(&TrajectorySample) -> f64| used.iter().map(|u| f(&u[k])).collect::<Vec<f64>>();
        let (mr, sr) = mean_se(&col(&|s| s.alpha.re));
        let (mi, si) = mean_se(&col(&|s| s.alpha.im));
        let (mn, sn) = mean_se(&col(&|s| s.nbar));
        let (mz, sz) = mean_se(&col(&|s| s.sz));
        st.mean_alpha.push(C64::new(mr, mi));
        st.se_alpha.push(C64::new(sr, si));
        st.mean_nbar.push(mn);
        st.se_nbar.push(sn);
        st.mean_sz.push(mz);
        st.se_sz.push(sz);
    }
    Ok(st)
}

/// A labelled point in the α plane; `sign` is +1/−1 for the two filled
/// branches of a ladder and 0 for the single m_s = 0 point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellTarget {
    pub alpha: C64,
    pub m_s: f64,
    pub sign: i8,
}

/// Filled mean-field points of every ladder m_s = s, s − 1, … ≥ 0 at the
/// drive of `params`.
pub fn mean_field_targets(params: &ModelParams) -> Result<Vec<DwellTarget>> {
    let s = params.s();
    let mut out = Vec::new();
    let mut m = s;
    while m >= -1e-12 {
        let m_s = m.max(0.0);
        for fp in mf_fixed_points(params, m_s)? {
            let sign = match fp.kind {
                FixedPointKind::FilledPlus if m_s == 0.0 => 0,
                FixedPointKind::FilledPlus => 1,
                FixedPointKind::FilledMinus => -1,
                _ => continue,
            };
            out.push(DwellTarget { alpha: fp.state.alpha, m_s, sign });
        }
        m -= 1.0;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub m_s: f64,
    pub sign: i8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DwellSegments {
    pub segments: Vec<DwellSegment>,
    pub switches: usize,
}

#[derive(Clone, Debug)]
pub struct DwellOptions {
    /// Capture radius as a fraction of the smallest pairwise target distance.
    pub capture_frac: f64,
    /// Explicit capture radius, overriding `capture_frac`.
    pub capture_radius: Option<f64>,
    /// Minimum segment duration in units of 1/κ_filt.
    pub min_dwell: f64,
    pub kappa_filt: f64,
}

impl Default for DwellOptions {
    fn default() -> Self {
        Self { capture_frac: 0.4, capture_radius: None, min_dwell: 5.0, kappa_filt: 1.0 }
    }
}

/// Assigns each point of `series` to the nearest target inside the capture
/// radius (or to transit) and returns the runs lasting at least
/// min_dwell/κ_filt. A switch is a change of label between consecutive
/// segments.
pub fn classify_dwell(t: &[f64], series: &[C64], targets: &[DwellTarget], opts: &DwellOptions) -> Result<DwellSegments> {
    if targets.is_empty() {
        return Err(invalid("targets", "need at least one fixed point"));
    }
    if t.len() != series.len() {
        return Err(Error::DimMismatch { expected: t.len(), got: series.len() });
    }
    let radius = opts.capture_radius.unwrap_or_else(|| {
        let mut dmin = f64::INFINITY;
        for (i, a) in targets.iter().enumerate() {
            for b in &targets[i + 1..] {
                dmin = dmin.min((a.alpha - b.alpha).norm());
            }
        }
        if dmin.is_finite() {
            opts.capture_frac * dmin
        } else {
            opts.capture_frac * targets[0].alpha.norm().max(1.0)
        }
    });
    let labels: Vec<Option<usize>> = series
        .iter()
        .map(|z| {
            let (best, d) = targets
                .iter()
                .enumerate()
                .map(|(i, tg)| (i, (z - tg.alpha).norm()))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            (d <= radius).then_some(best)
        })
        .collect();
    let min_len = opts.min_dwell / opts.kappa_filt;
    let mut segments = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let Some(l) = labels[i] else {
            i += 1;
            continue;
        };
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1] == Some(l) {
            j += 1;
        }
        if t[j] - t[i] >= min_len - 1e-12 {
            segments.push(DwellSegment { t_start: t[i], t_end: t[j], m_s: targets[l].m_s, sign: targets[l].sign });
        }
        i = j + 1;
    }
    let switches = segments.windows(2).filter(|w| w[0].m_s != w[1].m_s || w[0].sign != w[1].sign).count();
    Ok(DwellSegments { segments, switches })
}
