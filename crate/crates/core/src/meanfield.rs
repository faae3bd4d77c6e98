//! Semiclassical equations for one collective ladder m_s:
//!
//!   α̇ = −κα − iΩβ − iε,   β̇ = 2iΩαξ,   ξ̇ = iΩ(α*β − β*α),
//!
//! with α = ⟨a⟩, β = ⟨S₋⟩, ξ = ⟨S_z⟩ and |β|² + ξ² = m_s² conserved.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::dense::real_eigenvalues;
use crate::model::ModelParams;
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub alpha: C64,
    pub beta: C64,
    pub xi: f64,
    pub m_s: f64,
}

impl MeanFieldState {
    /// Empty cavity with the collective spin pointing down.
    pub fn ground(m_s: f64) -> Self {
        Self { alpha: C64::new(0.0, 0.0), beta: C64::new(0.0, 0.0), xi: -m_s, m_s }
    }

    /// |β|² + ξ² − m_s².
    pub fn sphere_defect(&self) -> f64 {
        self.beta.norm_sqr() + self.xi * self.xi - self.m_s * self.m_s
    }

    fn to_vec(self) -> [f64; 5] {
        [self.alpha.re, self.alpha.im, self.beta.re, self.beta.im, self.xi]
    }

    fn from_vec(v: [f64; 5], m_s: f64) -> Self {
        Self { alpha: C64::new(v[0], v[1]), beta: C64::new(v[2], v[3]), xi: v[4], m_s }
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanFieldDerivative {
    pub alpha: C64,
    pub beta: C64,
    pub xi: f64,
}

pub fn mf_rhs(state: &MeanFieldState, params: &ModelParams) -> MeanFieldDerivative {
    let (k, om, eps) = (params.kappa, params.omega, params.epsilon);
    let i = C64::new(0.0, 1.0);
    let (a, b, x) = (state.alpha, state.beta, state.xi);
    MeanFieldDerivative {
        alpha: -k * a - i * om * b - i * eps,
        beta: 2.0 * i * om * a * x,
        // iΩ(α*β − β*α) = −2Ω Im(α*β)
        xi: -2.0 * om * (a.conj() * b).im,
    }
}

fn rhs_vec(v: &[f64; 5], m_s: f64, params: &ModelParams) -> [f64; 5] {
    let d = mf_rhs(&MeanFieldState::from_vec(*v, m_s), params);
    [d.alpha.re, d.alpha.im, d.beta.re, d.beta.im, d.xi]
}

fn rk4(v: &[f64; 5], m_s: f64, params: &ModelParams, dt: f64) -> [f64; 5] {
    let add = |a: &[f64; 5], b: &[f64; 5], h: f64| std::array::from_fn::<f64, 5, _>(|i| a[i] + h * b[i]);
    let k1 = rhs_vec(v, m_s, params);
    let k2 = rhs_vec(&add(v, &k1, 0.5 * dt), m_s, params);
    let k3 = rhs_vec(&add(v, &k2, 0.5 * dt), m_s, params);
    let k4 = rhs_vec(&add(v, &k3, dt), m_s, params);
    std::array::from_fn(|i| v[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Clone, Debug)]
pub struct MeanFieldTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    /// max |sphere_defect| over all steps.
    pub max_sphere_drift: f64,
    /// Largest radial error of a single RK4 step before projection.
    pub max_step_defect: f64,
}

impl MeanFieldTrajectory {
    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("non-empty trajectory")
    }

    /// Mean |α| over samples with t ≥ t_from.
    pub fn mean_abs_alpha_after(&self, t_from: f64) -> f64 {
        let v: Vec<f64> =
            self.t.iter().zip(&self.states).filter(|(t, _)| **t >= t_from).map(|(_, s)| s.alpha.norm()).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// RK4 integration sampled every `sample_every` steps (and at the end). After
/// each step (β, ξ) is rescaled onto the sphere of radius m_s.
pub fn mf_integrate(
    state0: &MeanFieldState,
    params: &ModelParams,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> Result<MeanFieldTrajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(invalid("dt", "dt must be positive and t_final non-negative"));
    }
    if !(state0.m_s >= 0.0) {
        return Err(invalid("m_s", "must be non-negative"));
    }
    let limit = |s: &MeanFieldState| dt * params.kappa.max(params.omega * s.alpha.norm());
    if limit(state0) > 0.1 {
        return Err(invalid("dt", format!("dt·max(κ, Ω|α|) = {:.3e} exceeds 0.1", limit(state0))));
    }
    let steps = (t_final / dt).round() as usize;
    let every = sample_every.max(1);
    let m_s = state0.m_s;
    let mut v = state0.to_vec();
    let mut t = vec![0.0];
    let mut states = vec![*state0];
    let mut drift = state0.sphere_defect().abs();
    let mut step_defect: f64 = 0.0;
    for n in 1..=steps {
        v = rk4(&v, m_s, params, dt);
        // the step itself leaves the sphere at O(dt⁵); pull (β, ξ) back radially
        let r = (v[2] * v[2] + v[3] * v[3] + v[4] * v[4]).sqrt();
        step_defect = step_defect.max((r - m_s).abs());
        if r > 0.0 {
            let c = m_s / r;
            v[2] *= c;
            v[3] *= c;
            v[4] *= c;
        }
        let s = MeanFieldState::from_vec(v, m_s);
        if !s.is_finite() || s.alpha.norm() > 1e8 {
            return Err(Error::Unstable(format!("mean-field blow-up at t = {}", n as f64 * dt)));
        }
        drift = drift.max(s.sphere_defect().abs());
        if n % every == 0 || n == steps {
            t.push(n as f64 * dt);
            states.push(s);
        }
    }
    Ok(MeanFieldTrajectory { t, states, max_sphere_drift: drift, max_step_defect: step_defect })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    /// Every tangent-space Jacobian eigenvalue has Re < 0.
    Asymptotic,
    /// No growing direction, but at least one purely imaginary pair.
    Neutral,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointKind {
    /// α = 0, spin below the equator.
    EmptyLower,
    /// α = 0, spin above the equator.
    EmptyUpper,
    /// |α| from the filled solution, β = +m_s α/|α|.
    FilledPlus,
    /// |α| from the filled solution, β = −m_s α/|α|.
    FilledMinus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub state: MeanFieldState,
    pub kind: FixedPointKind,
    pub stability: Stability,
    /// Jacobian eigenvalues with the conserved (radial) direction removed.
    pub tangent_eigenvalues: Vec<C64>,
}

impl FixedPoint {
    /// Lyapunov stable (asymptotic or neutral).
    pub fn is_stable(&self) -> bool {
        self.stability != Stability::Unstable
    }
}

/// Real 5×5 Jacobian of the right-hand side in (Re α, Im α, Re β, Im β, ξ).
pub fn jacobian(state: &MeanFieldState, params: &ModelParams) -> [[f64; 5]; 5] {
    let (k, om) = (params.kappa, params.omega);
    let [ar, ai, br, bi, x] = state.to_vec();
    // α̇ = −κα − iΩβ − iε
    // β̇ = 2iΩαξ  → Re: −2Ω ai ξ, Im: 2Ω ar ξ
    // ξ̇ = −2Ω Im(α*β) = −2Ω(ar bi − ai br)
    [
        [-k, 0.0, 0.0, om, 0.0],
        [0.0, -k, -om, 0.0, 0.0],
        [0.0, -2.0 * om * x, 0.0, 0.0, -2.0 * om * ai],
        [2.0 * om * x, 0.0, 0.0, 0.0, 2.0 * om * ar],
        [-2.0 * om * bi, 2.0 * om * br, 2.0 * om * ai, -2.0 * om * ar, 0.0],
    ]
}

/// Drops the eigenvalue belonging to the conserved |β|² + ξ² direction (the
/// one nearest zero) and classifies the rest.
pub fn classify(state: &MeanFieldState, params: &ModelParams) -> Result<(Stability, Vec<C64>)> {
    let j = jacobian(state, params);
    let m = ndarray::Array2::from_shape_fn((5, 5), |(r, c)| j[r][c]);
    let mut ev = real_eigenvalues(m.view())?;
    let drop = (0..ev.len()).min_by(|&a, &b| ev[a].norm().partial_cmp(&ev[b].norm()).unwrap()).unwrap();
    ev.remove(drop);
    let scale = params.kappa.max(params.omega).max(1.0);
    let tol = 1e-9 * scale;
    let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let st = if max_re > tol {
        Stability::Unstable
    } else if max_re < -tol {
        Stability::Asymptotic
    } else {
        Stability::Neutral
    };
    Ok((st, ev))
}

/// |α|² = (ε/κ)²[1 − (m_sΩ/ε)²] of the filled branches; `None` at or below
/// threshold.
pub fn filled_amplitude(params: &ModelParams, m_s: f64) -> Option<f64> {
    let (k, om, eps) = (params.kappa, params.omega, params.epsilon);
    let r2 = (eps * eps - om * om * m_s * m_s) / (k * k);
    (r2 > 0.0).then(|| r2.sqrt())
}

/// Fixed points on the sphere of radius m_s.
///
/// At ε < Ωm_s the empty-cavity pair α = 0, β = −ε/Ω, ξ = ∓√(m_s² − ε²/Ω²)
/// exists; above threshold |β| = ε/Ω would leave the sphere, and only the two
/// filled branches remain. Their phase follows from α̇ = 0 with
/// β = ±m_s α/|α|: e^{iφ} = iε/(−κ|α| ∓ iΩm_s). For m_s = 0 the only point is
/// α = −iε/κ.
pub fn mf_fixed_points(params: &ModelParams, m_s: f64) -> Result<Vec<FixedPoint>> {
    if !(m_s >= 0.0) {
        return Err(invalid("m_s", "must be non-negative"));
    }
    let (k, om, eps) = (params.kappa, params.omega, params.epsilon);
    let i = C64::new(0.0, 1.0);
    let mut states: Vec<(MeanFieldState, FixedPointKind)> = Vec::new();
    if m_s == 0.0 || om == 0.0 {
        let alpha = -i * eps / k;
        let beta = C64::new(0.0, 0.0);
        let xi = -m_s;
        states.push((MeanFieldState { alpha, beta, xi, m_s }, FixedPointKind::FilledPlus));
    } else if let Some(r) = filled_amplitude(params, m_s) {
        for (sign, kind) in [(1.0, FixedPointKind::FilledPlus), (-1.0, FixedPointKind::FilledMinus)] {
            let phase = i * eps / C64::new(-k * r, -sign * om * m_s);
            let alpha = phase * r;
            let beta = sign * m_s * phase;
            states.push((MeanFieldState { alpha, beta, xi: 0.0, m_s }, kind));
        }
    } else {
        let b = -eps / om;
        let z = (m_s * m_s - b * b).max(0.0).sqrt();
        for (xi, kind) in [(-z, FixedPointKind::EmptyLower), (z, FixedPointKind::EmptyUpper)] {
            states.push((MeanFieldState { alpha: C64::new(0.0, 0.0), beta: C64::new(b, 0.0), xi, m_s }, kind));
            if z == 0.0 {
                break;
            }
        }
    }
    states
        .into_iter()
        .map(|(state, kind)| {
            let (stability, tangent_eigenvalues) = classify(&state, params)?;
            Ok(FixedPoint { state, kind, stability, tangent_eigenvalues })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdScan {
    pub eps_grid: Vec<f64>,
    /// Late-time mean |α| per ε.
    pub late_abs_alpha: Vec<f64>,
    /// First grid ε classified as filled.
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ThresholdOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Averaging starts at this fraction of t_final.
    pub average_from: f64,
    /// Size of the initial kick, see [`perturbed_empty_state`].
    pub perturbation: f64,
    /// A point counts as filled when late |α| exceeds this fraction of ε/κ.
    pub filled_fraction: f64,
    pub exec: Exec,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { t_final: 200.0, dt: 1e-3, average_from: 0.5, perturbation: 1e-3, filled_fraction: 0.5, exec: Exec::Parallel }
    }
}

/// Start for the threshold scan: the lower empty fixed point with α shifted
/// by `delta`(1 + i) while it exists, otherwise the south pole tilted by
/// `delta`.
pub fn perturbed_empty_state(params: &ModelParams, m_s: f64, delta: f64) -> MeanFieldState {
    let shift = C64::new(delta, delta);
    if m_s > 0.0 && params.omega > 0.0 && params.epsilon < params.omega * m_s {
        let b = -params.epsilon / params.omega;
        let xi = -(m_s * m_s - b * b).sqrt();
        return MeanFieldState { alpha: shift, beta: C64::new(b, 0.0), xi, m_s };
    }
    MeanFieldState { alpha: shift, beta: C64::new(m_s * delta.sin(), 0.0), xi: -m_s * delta.cos(), m_s }
}

/// Integrates from [`perturbed_empty_state`] at every ε and reports the
/// first ε whose late-time |α| exceeds `filled_fraction`·ε/κ.
pub fn threshold_scan(params: &ModelParams, m_s: f64, eps_grid: &[f64], opts: &ThresholdOptions) -> Result<ThresholdScan> {
    if eps_grid.is_empty() {
        return Err(invalid("eps_grid", "empty sweep"));
    }
    let runs = opts.exec.map_slice(eps_grid, |&e| {
        let p = params.with_epsilon(e);
        let start = perturbed_empty_state(&p, m_s, opts.perturbation);
        let dt = opts.dt.min(0.05 / (p.omega * (e / p.kappa + 1.0)).max(p.kappa));
        mf_integrate(&start, &p, opts.t_final, dt, 100).map(|tr| tr.mean_abs_alpha_after(opts.average_from * opts.t_final))
    });
    let late: Vec<f64> = runs.into_iter().collect::<Result<_>>()?;
    let threshold = eps_grid
        .iter()
        .zip(&late)
        .find(|(e, a)| **e > 0.0 && **a > opts.filled_fraction * **e / params.kappa)
        .map(|(e, _)| *e);
    Ok(ThresholdScan { eps_grid: eps_grid.to_vec(), late_abs_alpha: late, threshold })
}
