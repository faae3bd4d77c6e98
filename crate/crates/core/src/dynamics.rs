//! Master-equation time evolution, steady states, observables and the Wigner
//! distribution of the cavity field.

use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::liouville::steady_from_linear_solve;
use crate::model::{
    build_space, cutoff_touched, frob_diff, reduce_field, DensityMatrix, HilbertSpace, MasterGenerator, ModelParams,
};
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// ⟨a†a⟩
    pub nbar: f64,
    /// ⟨S_z⟩
    pub sz: f64,
    /// ⟨a⟩
    pub field_amp: C64,
    pub cutoff_touched: bool,
}

impl Observables {
    /// Atomic population rescaled to [0, 1]: (⟨S_z⟩ + s)/(2s).
    pub fn sz_norm(&self, s: f64) -> f64 {
        if s == 0.0 {
            0.0
        } else {
            (self.sz + s) / (2.0 * s)
        }
    }
}

/// Expectation values with Hermitian symmetrization of ρ.
pub fn observables(rho: &DensityMatrix, space: &HilbertSpace) -> Observables {
    let r = &rho.0;
    let d = space.total_dim;
    let mut nbar = 0.0;
    let mut sz = 0.0;
    let mut amp = C64::new(0.0, 0.0);
    for i in 0..d {
        let p = r[[i, i]].re;
        nbar += space.photons_of(i) as f64 * p;
        sz += space.m_of(i) * p;
        let n = space.photons_of(i);
        if n + 1 < space.field_dim {
            // Tr(aρ) = Σ √(n+1) ρ_{i+1,i}
            let sym = 0.5 * (r[[i + 1, i]] + r[[i, i + 1]].conj());
            amp += ((n + 1) as f64).sqrt() * sym;
        }
    }
    let tr = rho.trace().re;
    Observables {
        nbar: nbar / tr,
        sz: sz / tr,
        field_amp: amp / tr,
        cutoff_touched: cutoff_touched(rho, space),
    }
}

/// Spectral-radius estimate R = 2Ω√(n_max·n_at) + 2ε√n_max + 2κ·n_max.
pub fn stability_radius(params: &ModelParams) -> f64 {
    let nm = params.n_max as f64;
    2.0 * params.omega * (nm * params.n_at as f64).sqrt() + 2.0 * params.epsilon * nm.sqrt() + 2.0 * params.kappa * nm
}

/// Largest RK4 step that keeps every Liouvillian eigenvalue inside the
/// stability region, from Gershgorin bounds on H and on the dissipator.
pub fn rk4_stable_dt(params: &ModelParams) -> f64 {
    let nm = params.n_max as f64;
    let s = params.s();
    let h_bound = 2.0 * params.omega * (s + 0.5) * nm.sqrt() + 2.0 * params.epsilon * nm.sqrt();
    let im = 2.0 * h_bound;
    let re = 2.0 * params.kappa * nm;
    let r = im + re;
    if r == 0.0 {
        0.1
    } else {
        2.5 / r
    }
}

struct Rk4 {
    gen: MasterGenerator,
    k: [Array2<C64>; 4],
    tmp: Array2<C64>,
    scratch: Array2<C64>,
}

impl Rk4 {
    fn new(gen: MasterGenerator) -> Self {
        let d = gen.dim();
        let z = || Array2::<C64>::zeros((d, d));
        Self { gen, k: [z(), z(), z(), z()], tmp: z(), scratch: z() }
    }

    fn step(&mut self, rho: &mut Array2<C64>, dt: f64) {
        let Rk4 { gen, k, tmp, scratch } = self;
        gen.apply_hermitian(rho.view(), &mut k[0], scratch);
        for stage in 1..4 {
            let h = if stage == 3 { dt } else { 0.5 * dt };
            Zip::from(&mut *tmp).and(&*rho).and(&k[stage - 1]).for_each(|t, &r, &kk| *t = r + kk * h);
            let (_, rest) = k.split_at_mut(stage);
            gen.apply_hermitian(tmp.view(), &mut rest[0], scratch);
        }
        let c = dt / 6.0;
        Zip::from(rho)
            .and(&k[0])
            .and(&k[1])
            .and(&k[2])
            .and(&k[3])
            .for_each(|r, &a, &b, &cc, &dd| *r += (a + 2.0 * b + 2.0 * cc + dd) * c);
    }
}

fn check_rho(rho: &DensityMatrix, space: &HilbertSpace) -> Result<()> {
    if rho.dim() != space.total_dim || rho.0.ncols() != space.total_dim {
        return Err(Error::DimMismatch { expected: space.total_dim, got: rho.dim() });
    }
    Ok(())
}

/// Evolves ρ with fixed-step RK4 and records observables at `sample_times`
/// (rounded to the step grid). Requires dt·R ≤ 0.1.
pub fn evolve_master_sampled(
    rho0: &DensityMatrix,
    params: &ModelParams,
    dt: f64,
    sample_times: &[f64],
) -> Result<(DensityMatrix, Vec<Observables>)> {
    params.validate()?;
    let space = build_space(params)?;
    check_rho(rho0, &space)?;
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let r = stability_radius(params);
    if dt * r > 0.1 + 1e-12 {
        return Err(invalid("dt", format!("dt·R = {:.3e} exceeds 0.1 (R = {r:.3e})", dt * r)));
    }
    let mut times = sample_times.to_vec();
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(invalid("t", "sample times must be finite and non-negative"));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rk = Rk4::new(MasterGenerator::new(params, &space)?);
    let mut rho = rho0.0.clone();
    let tr0 = rho0.trace().re;
    let mut out = Vec::with_capacity(times.len());
    let mut step = 0usize;
    for &t in &times {
        let target = (t / dt).round() as usize;
        while step < target {
            rk.step(&mut rho, dt);
            step += 1;
            if step % 64 == 0 || step == target {
                check_trace(&rho, tr0, step as f64 * dt)?;
            }
        }
        let dm = DensityMatrix(rho.clone());
        out.push(observables(&dm, &space));
    }
    Ok((DensityMatrix(rho), out))
}

fn check_trace(rho: &Array2<C64>, tr0: f64, t: f64) -> Result<()> {
    let tr: C64 = rho.diag().sum();
    if !tr.re.is_finite() || (tr.re - tr0).abs() > 1e-4 {
        return Err(Error::Unstable(format!("trace drifted to {} at t = {t}", tr.re)));
    }
    Ok(())
}

/// ρ(t_final) by fixed-step RK4. Requires dt·R ≤ 0.1.
pub fn evolve_master(rho0: &DensityMatrix, params: &ModelParams, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    evolve_master_sampled(rho0, params, dt, &[t_final]).map(|(r, _)| r)
}

/// Initial state for the steady-state search.
#[derive(Clone, Debug, Default)]
pub enum SteadyStart {
    /// Atomic ground state ⊗ vacuum.
    #[default]
    Ground,
    Given(DensityMatrix),
    /// Seed with the Liouvillian null vector from a sparse direct solve, then
    /// certify by RK4 windows.
    NullMode,
}

#[derive(Clone, Debug)]
pub struct SteadyOptions {
    pub tol: f64,
    pub t_max: f64,
    /// Convergence window Δ (1/κ).
    pub window: f64,
    /// RK4 step; `None` picks [`rk4_stable_dt`].
    pub dt: Option<f64>,
    pub start: SteadyStart,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self { tol: 1e-8, t_max: 4000.0, window: 5.0, dt: None, start: SteadyStart::Ground }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub obs: Observables,
    pub converged: bool,
    /// Time integrated by RK4.
    pub t_reached: f64,
    /// Last measured ‖Δρ‖_F/Δ.
    pub rate: f64,
    /// Last measured max observable drift/Δ.
    pub obs_rate: f64,
    pub dt: f64,
}

/// Steady state from the ground state with the default options.
pub fn steady_state(params: &ModelParams, tol: f64) -> Result<SteadyState> {
    steady_state_with(params, &SteadyOptions { tol, ..SteadyOptions::default() })
}

fn obs_drift(a: &Observables, b: &Observables) -> f64 {
    (a.nbar - b.nbar).abs().max((a.sz - b.sz).abs()).max((a.field_amp - b.field_amp).norm())
}

/// Runs RK4 until ‖ρ(t+Δ) − ρ(t)‖_F/Δ and every observable drift/Δ fall
/// below `tol`. Non-convergence by `t_max` returns the last iterate with
/// `converged = false`.
pub fn steady_state_with(params: &ModelParams, opts: &SteadyOptions) -> Result<SteadyState> {
    params.validate()?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if !(opts.window > 0.0) || !(opts.t_max > 0.0) {
        return Err(invalid("window", "window and t_max must be positive"));
    }
    let space = build_space(params)?;
    let dt = opts.dt.unwrap_or_else(|| rk4_stable_dt(params));
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let mut rho = match &opts.start {
        SteadyStart::Ground => DensityMatrix::ground(&space),
        SteadyStart::Given(r) => {
            check_rho(r, &space)?;
            r.clone()
        }
        SteadyStart::NullMode => steady_from_linear_solve(params)?,
    }
    .0;
    let mut rk = Rk4::new(MasterGenerator::new(params, &space)?);
    let steps_per_window = (opts.window / dt).ceil().max(1.0) as usize;
    let delta = steps_per_window as f64 * dt;
    let tr0: f64 = rho.diag().sum().re;
    let mut prev = rho.clone();
    let mut prev_obs = observables(&DensityMatrix(rho.clone()), &space);
    let mut t = 0.0;
    let (mut rate, mut obs_rate) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    while t < opts.t_max {
        for _ in 0..steps_per_window {
            rk.step(&mut rho, dt);
        }
        t += delta;
        check_trace(&rho, tr0, t)?;
        let obs = observables(&DensityMatrix(rho.clone()), &space);
        rate = frob_diff(rho.view(), prev.view()) / delta;
        obs_rate = obs_drift(&obs, &prev_obs) / delta;
        if rate < opts.tol && obs_rate < opts.tol {
            converged = true;
            break;
        }
        prev.assign(&rho);
        prev_obs = obs;
    }
    let mut dm = DensityMatrix(rho);
    dm.hermitize();
    dm.normalize();
    let obs = observables(&dm, &space);
    Ok(SteadyState { rho: dm, obs, converged, t_reached: t, rate, obs_rate, dt })
}

/// Steady states over a drive sweep, one task per ε.
pub fn steady_sweep(
    params: &ModelParams,
    eps_grid: &[f64],
    opts: &SteadyOptions,
    exec: Exec,
) -> Vec<Result<SteadyState>> {
    exec.map_slice(eps_grid, |&e| steady_state_with(&params.with_epsilon(e), opts))
}

/// Square phase-space window centered on `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
    #[serde(default)]
    pub center_re: f64,
    #[serde(default)]
    pub center_im: f64,
}

impl GridSpec {
    pub fn new(half_width: f64, points: usize) -> Self {
        Self { half_width, points, center_re: 0.0, center_im: 0.0 }
    }

    /// Half-width 1.5·(√n̄ + 3).
    pub fn auto(nbar: f64, points: usize) -> Self {
        Self::new(1.5 * (nbar.max(0.0).sqrt() + 3.0), points)
    }

    fn axis(&self, c: f64) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|i| c - self.half_width + 2.0 * self.half_width * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub ax_grid: Vec<f64>,
    pub ay_grid: Vec<f64>,
    /// values[[iy, ix]] = W(ax[ix] + i·ay[iy])
    pub values: Array2<f64>,
    pub cell_area: f64,
    pub cutoff_touched: bool,
}

impl WignerGrid {
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.cell_area
    }

    pub fn cell(&self) -> f64 {
        self.ax_grid[1] - self.ax_grid[0]
    }
}

/// W(α) = (2/π) Tr[ρ D(α) P D(α)†] = (2/π) Σ_{m,n} ρ_{mn} (−1)^m ⟨n|D(2α)|m⟩.
///
/// With β = 2α = |β|e^{iθ}, x = |β|² and k = n − m ≥ 0,
/// ⟨m+k|D(β)|m⟩ = e^{ikθ} f_m^{(k)}, where the normalized Laguerre function
/// f_m^{(k)} = √(m!/(m+k)!) e^{−x/2} x^{k/2} L_m^{(k)}(x) is bounded by one and
/// obeys a forward three-term recurrence in m. Hermiticity pairs each
/// diagonal k with −k, so only the upper triangle of ρ is read.
pub fn wigner_point(rho: &Array2<C64>, alpha: C64) -> f64 {
    let f = rho.nrows();
    let beta = 2.0 * alpha;
    let x = beta.norm_sqr();
    let phase = if x > 0.0 { beta / beta.norm() } else { C64::new(1.0, 0.0) };
    let mut w = 0.0;
    let mut rot = C64::new(1.0, 0.0);
    for k in 0..f {
        let f0 = if x > 0.0 {
            (-0.5 * x + 0.5 * k as f64 * x.ln() - 0.5 * ln_factorial(k)).exp()
        } else if k == 0 {
            1.0
        } else {
            0.0
        };
        let weight = if k == 0 { 1.0 } else { 2.0 };
        let (mut prev, mut cur) = (0.0, f0);
        let kf = k as f64;
        let mut acc = 0.0;
        for m in 0..f - k {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (rho[[m, m + k]] * rot).re * cur;
            let mf = m as f64;
            let next = ((2.0 * mf + kf + 1.0 - x) * cur - (mf * (mf + kf)).sqrt() * prev)
                / ((mf + 1.0) * (mf + 1.0 + kf)).sqrt();
            prev = cur;
            cur = next;
        }
        w += weight * acc;
        rot *= phase;
    }
    w * std::f64::consts::FRAC_2_PI
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|j| (j as f64).ln()).sum()
}

/// Wigner distribution of a field density matrix on `spec`. Rows run in
/// parallel under `exec`.
pub fn wigner_grid(rho_field: &DensityMatrix, spec: &GridSpec, exec: Exec) -> Result<WignerGrid> {
    if spec.points < 2 {
        return Err(invalid("points", "grid needs at least two points per axis"));
    }
    if !(spec.half_width > 0.0) {
        return Err(invalid("half_width", "must be positive"));
    }
    let f = rho_field.dim();
    let ax = spec.axis(spec.center_re);
    let ay = spec.axis(spec.center_im);
    let rows: Vec<Vec<f64>> = exec.map_slice(&ay, |&y| ax.iter().map(|&x| wigner_point(&rho_field.0, C64::new(x, y))).collect());
    let mut values = Array2::<f64>::zeros((ay.len(), ax.len()));
    for (iy, row) in rows.into_iter().enumerate() {
        for (ix, v) in row.into_iter().enumerate() {
            values[[iy, ix]] = v;
        }
    }
    let h = ax[1] - ax[0];
    let top: f64 = (f.saturating_sub(5)..f).map(|n| rho_field.0[[n, n]].re).sum();
    Ok(WignerGrid { ax_grid: ax, ay_grid: ay, values, cell_area: h * h, cutoff_touched: top > 1e-6 })
}

/// Wigner distribution of the cavity field of a joint state.
pub fn wigner_of_state(rho: &DensityMatrix, space: &HilbertSpace, spec: &GridSpec, exec: Exec) -> Result<WignerGrid> {
    check_rho(rho, space)?;
    let mut g = wigner_grid(&reduce_field(rho, space), spec, exec)?;
    g.cutoff_touched |= cutoff_touched(rho, space);
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub alpha: C64,
    pub height: f64,
}

/// Strict local maxima (8-neighbourhood) above `threshold_frac`·max, with
/// maxima closer than two cells merged into the higher one.
pub fn find_peaks(w: &WignerGrid, threshold_frac: f64) -> Result<Vec<Peak>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(invalid("threshold_frac", "must lie in (0, 1)"));
    }
    let (ny, nx) = w.values.dim();
    let max = w.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Ok(Vec::new());
    }
    let thr = threshold_frac * max;
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = w.values[[iy, ix]];
            if v < thr {
                continue;
            }
            let mut strict = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (y, x) = (iy as i64 + dy, ix as i64 + dx);
                    if y < 0 || x < 0 || y >= ny as i64 || x >= nx as i64 {
                        continue;
                    }
                    if w.values[[y as usize, x as usize]] >= v {
                        strict = false;
                        break 'nb;
                    }
                }
            }
            if strict {
                cands.push((iy, ix, v));
            }
        }
    }
    cands.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    for c in cands {
        let close = kept.iter().any(|k| {
            let dy = k.0 as f64 - c.0 as f64;
            let dx = k.1 as f64 - c.1 as f64;
            (dx * dx + dy * dy).sqrt() <= 2.0
        });
        if !close {
            kept.push(c);
        }
    }
    Ok(kept
        .into_iter()
        .map(|(iy, ix, v)| Peak { alpha: C64::new(w.ax_grid[ix], w.ay_grid[iy]), height: v })
        .collect())
}

/// Largest distance from a peak to the nearest mirror image of another peak
/// under α → −α* (reflection through the imaginary axis, which carries the
/// undisplaced m_s = 0 peak in this convention).
pub fn peak_mirror_mismatch(peaks: &[Peak]) -> f64 {
    peaks
        .iter()
        .map(|p| {
            let img = C64::new(-p.alpha.re, p.alpha.im);
            peaks.iter().map(|q| (q.alpha - img).norm()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}
