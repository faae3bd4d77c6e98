//! One function per subcommand. Each returns the files to write and the
//! command-specific part of the metadata sidecar.

use serde_json::{json, Value};
use tavis::dynamics::{find_peaks, peak_mirror_mismatch, steady_sweep, wigner_of_state, GridSpec, SteadyOptions, SteadyStart};
use tavis::ladders::{dressed_photon_numbers, jump_coefficients, JumpMethod};
use tavis::liouville::{gap_sweep, ModeOptions};
use tavis::meanfield::{mf_fixed_points, threshold_scan, FixedPointKind, ThresholdOptions};
use tavis::spectra::{collapse_points, detect_collapses, quasienergy_scan, CollapseOptions, ScanOptions};
use tavis::trajectories::{
    classify_dwell, ensemble_mean, mean_field_targets, simulate_trajectory_with, DwellOptions, TrajectoryOptions,
};
use tavis::{build_space, Exec, StateVector};

use crate::config::{Command, RunConfig, SteadyStartChoice};
use crate::output::Csv;
use crate::plot::{heatmap, Figure, Series};
use crate::{row, CliError};

pub struct Outcome {
    /// (file name, contents)
    pub files: Vec<(String, String)>,
    pub converged: bool,
    pub cutoff_touched: bool,
    pub extras: Value,
}

const EXEC: Exec = Exec::Parallel;

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Spectrum => spectrum(cfg),
        Command::Collapse => collapse(cfg),
        Command::Steady => steady(cfg),
        Command::Wigner => wigner(cfg),
        Command::Meanfield => meanfield(cfg),
        Command::Trajectory => trajectory(cfg),
        Command::Liouville => liouville(cfg),
        Command::Ladders => ladders(cfg),
    }
}

fn ladder_values(s: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = s;
    while m >= -1e-12 {
        out.push(m.max(0.0));
        m -= 1.0;
    }
    out
}

fn svg(cfg: &RunConfig, body: String) -> (String, String) {
    (format!("{}.svg", cfg.command.stem()), body)
}

fn csv(cfg: &RunConfig, body: Csv) -> (String, String) {
    (format!("{}.csv", cfg.command.stem()), body.finish())
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.eps_grid();
    let opts = ScanOptions { k_levels: cfg.numerics.k_levels, exec: EXEC, ..ScanOptions::default() };
    let scan = quasienergy_scan(&cfg.params, &grid, &opts)?;
    let mut out = Csv::new(&["epsilon", "branch_id", "ms_label", "quasienergy"]);
    for (i, &e) in grid.iter().enumerate() {
        for b in scan.branches.iter().filter(|b| b.start <= i && i < b.end()) {
            out.row(row![e, b.id, b.ms_label, b.values[i - b.start]]);
        }
    }
    let series = scan
        .branches
        .iter()
        .map(|b| Series::line(format!("branch {}", b.id), b.values.iter().enumerate().map(|(k, &v)| (grid[b.start + k], v)).collect()))
        .collect();
    let fig = Figure { title: "Quasienergies near zero".into(), xlabel: "ε/κ".into(), ylabel: "Ẽ/κ".into(), series };
    let failures: Vec<Value> = scan.failures.iter().map(|(i, r)| json!({"epsilon": grid[*i], "reason": r})).collect();
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged: scan.failures.is_empty(),
        cutoff_touched: false,
        extras: json!({
            "branches": scan.branches.len(),
            "collapse_markers": scan.collapse_markers,
            "zero_modes": scan.zero_modes,
            "failures": failures,
        }),
    })
}

fn collapse(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.eps_grid();
    if grid.len() < 3 {
        return Err(CliError::config("sweep", "collapse detection needs at least 3 sweep points"));
    }
    let scan = ScanOptions { k_levels: cfg.numerics.k_levels, exec: EXEC, ..ScanOptions::default() };
    let markers = detect_collapses(&cfg.params, &grid, &CollapseOptions { scan, ..CollapseOptions::default() })?;
    let mut out = Csv::new(&["m_s", "eps_predicted", "eps_detected", "gap"]);
    for m in &markers {
        out.row(row![m.m_s, m.eps_predicted, m.eps_detected, m.gap]);
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let predicted: Vec<(f64, f64)> =
        collapse_points(cfg.params.n_at, cfg.params.omega).into_iter().filter(|&(_, e)| e >= lo && e <= hi).collect();
    let missed: Vec<f64> =
        predicted.iter().filter(|(m, _)| !markers.iter().any(|k| (k.m_s - m).abs() < 1e-9)).map(|p| p.0).collect();
    let fig = Figure {
        title: "Collapse points".into(),
        xlabel: "predicted ε/κ".into(),
        ylabel: "detected ε/κ".into(),
        series: vec![
            Series::line("y = x", vec![(lo, lo), (hi, hi)]),
            Series::scatter("detected", markers.iter().map(|m| (m.eps_predicted, m.eps_detected)).collect()),
        ],
    };
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged: missed.is_empty(),
        cutoff_touched: false,
        extras: json!({
            "predicted": predicted.iter().map(|(m, e)| json!({"m_s": m, "epsilon": e})).collect::<Vec<_>>(),
            "missed_m_s": missed,
        }),
    })
}

fn steady_options(cfg: &RunConfig) -> SteadyOptions {
    let start = match cfg.numerics.steady_start {
        SteadyStartChoice::Ground => SteadyStart::Ground,
        SteadyStartChoice::NullMode => SteadyStart::NullMode,
    };
    SteadyOptions { tol: cfg.numerics.tol, t_max: cfg.numerics.t_max, dt: cfg.numerics.dt, start, ..SteadyOptions::default() }
}

fn is_config_error(e: &tavis::Error) -> bool {
    matches!(e, tavis::Error::InvalidParam { .. } | tavis::Error::Budget { .. })
}

fn steady(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.eps_grid();
    let s = cfg.params.s();
    let results = steady_sweep(&cfg.params, &grid, &steady_options(cfg), EXEC);
    let mut out = Csv::new(&[
        "epsilon", "nbar", "sqrt_nbar", "sz", "sz_norm", "re_a", "im_a", "converged", "cutoff_touched",
    ]);
    let (mut all_conv, mut any_cut) = (true, false);
    let mut failures = Vec::new();
    let mut points = Vec::new();
    for (&e, r) in grid.iter().zip(results) {
        match r {
            Ok(st) => {
                let o = st.obs;
                out.row(row![e, o.nbar, o.nbar.sqrt(), o.sz, o.sz_norm(s), o.field_amp.re, o.field_amp.im, st.converged, o.cutoff_touched]);
                all_conv &= st.converged;
                any_cut |= o.cutoff_touched;
                points.push((e, o.nbar.sqrt()));
            }
            Err(err) if is_config_error(&err) => return Err(err.into()),
            Err(err) => {
                let nan = f64::NAN;
                out.row(row![e, nan, nan, nan, nan, nan, nan, false, false]);
                all_conv = false;
                failures.push(json!({"epsilon": e, "reason": err.to_string()}));
            }
        }
    }
    let kappa = cfg.params.kappa;
    let fig = Figure {
        title: "Steady-state field".into(),
        xlabel: "ε/κ".into(),
        ylabel: "√n̄".into(),
        series: vec![
            Series::line("√n̄", points),
            Series::line("ε/κ", grid.iter().map(|&e| (e, e / kappa)).collect()),
        ],
    };
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged: all_conv,
        cutoff_touched: any_cut,
        extras: json!({ "failures": failures }),
    })
}

fn wigner(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.sweep.is_some_and(|s| s.count > 1) {
        return Err(CliError::config("sweep", "wigner takes a single ε"));
    }
    let params = &cfg.params;
    let space = build_space(params)?;
    let st = tavis::dynamics::steady_state_with(params, &steady_options(cfg))?;
    let spec = GridSpec::auto(st.obs.nbar, cfg.numerics.grid);
    let w = wigner_of_state(&st.rho, &space, &spec, EXEC)?;
    let peaks = find_peaks(&w, 0.05)?;
    let mut out = Csv::new(&["alpha_x", "alpha_y", "w"]);
    for (iy, &y) in w.ay_grid.iter().enumerate() {
        for (ix, &x) in w.ax_grid.iter().enumerate() {
            out.row(row![x, y, w.values[[iy, ix]]]);
        }
    }
    let flat: Vec<f64> = w.values.iter().copied().collect();
    let title = format!("Steady-state Wigner function, ε/κ = {}", params.epsilon);
    let body = heatmap(&title, "Re α", "Im α", &w.ax_grid, &w.ay_grid, &flat);
    let peak_json: Vec<Value> = peaks.iter().map(|p| json!({"re": p.alpha.re, "im": p.alpha.im, "height": p.height})).collect();
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, body)],
        converged: st.converged,
        cutoff_touched: w.cutoff_touched,
        extras: json!({
            "peaks": peak_json,
            "mirror_mismatch": if peaks.is_empty() { Value::Null } else { json!(peak_mirror_mismatch(&peaks)) },
            "integral": w.integral(),
            "half_width": spec.half_width,
            "nbar": st.obs.nbar,
            "steady_rate": st.rate,
        }),
    })
}

fn kind_name(k: FixedPointKind) -> &'static str {
    match k {
        FixedPointKind::EmptyLower => "empty-lower",
        FixedPointKind::EmptyUpper => "empty-upper",
        FixedPointKind::FilledPlus => "filled-plus",
        FixedPointKind::FilledMinus => "filled-minus",
    }
}

fn meanfield(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.eps_grid();
    let ladders = ladder_values(cfg.params.s());
    let mut out = Csv::new(&["epsilon", "ms", "branch", "abs_alpha", "re_alpha", "im_alpha", "stable"]);
    let mut stable_pts = Vec::new();
    let mut unstable_pts = Vec::new();
    for &e in &grid {
        let p = cfg.params.with_epsilon(e);
        for &m_s in &ladders {
            for fp in mf_fixed_points(&p, m_s)? {
                let a = fp.state.alpha;
                out.row(row![e, m_s, kind_name(fp.kind), a.norm(), a.re, a.im, fp.is_stable()]);
                if fp.is_stable() { &mut stable_pts } else { &mut unstable_pts }.push((e, a.norm()));
            }
        }
    }
    let mut thresholds = Vec::new();
    if grid.len() >= 2 {
        for &m_s in ladders.iter().filter(|&&m| m > 0.0) {
            let opts = ThresholdOptions { exec: EXEC, ..ThresholdOptions::default() };
            let scan = threshold_scan(&cfg.params, m_s, &grid, &opts)?;
            thresholds.push(json!({
                "m_s": m_s,
                "threshold": scan.threshold,
                "predicted": cfg.params.omega * m_s,
                "late_abs_alpha": scan.late_abs_alpha,
            }));
        }
    }
    let fig = Figure {
        title: "Mean-field fixed points".into(),
        xlabel: "ε/κ".into(),
        ylabel: "|α|".into(),
        series: vec![Series::scatter("stable", stable_pts), Series::scatter("unstable", unstable_pts)],
    };
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged: true,
        cutoff_touched: false,
        extras: json!({ "thresholds": thresholds }),
    })
}

fn trajectory(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = &cfg.params;
    let nu = &cfg.numerics;
    let dt = nu.dt.unwrap_or(1e-3);
    let space = build_space(params)?;
    let psi0 = StateVector::ground(&space);
    let steps = (nu.t_final / dt).round().max(1.0) as usize;
    let opts = TrajectoryOptions { kappa_filt: nu.kappa_filt, sample_every: steps.div_ceil(10_000).max(1), ..TrajectoryOptions::default() };
    let tr = simulate_trajectory_with(params, &psi0, nu.t_final, dt, cfg.seed, 0, &opts)?;

    let mut out = Csv::new(&["t", "re_alpha_bar", "im_alpha_bar", "norm"]);
    let mut ts = Vec::with_capacity(tr.samples.len());
    let mut bars = Vec::with_capacity(tr.samples.len());
    let last = tr.record.alpha_bar.len() - 1;
    for s in &tr.samples {
        let k = ((s.t / dt).round() as usize).min(last);
        let b = tr.record.alpha_bar[k];
        out.row(row![s.t, b.re, b.im, s.norm]);
        ts.push(s.t);
        bars.push(b);
    }
    let mut files = vec![csv(cfg, out)];
    let mut extras = json!({ "dt": dt, "sample_every": opts.sample_every, "steps": steps });

    let targets = mean_field_targets(params)?;
    if !targets.is_empty() {
        let dw = classify_dwell(&ts, &bars, &targets, &DwellOptions { kappa_filt: nu.kappa_filt, ..DwellOptions::default() })?;
        extras["dwell"] = json!({ "targets": targets, "segments": dw.segments, "switches": dw.switches });
    }
    let mut cutoff = false;
    if nu.n_traj > 1 {
        let ens = ensemble_mean(params, &psi0, nu.n_traj, nu.t_final, dt, cfg.seed, &opts, EXEC)?;
        let mut e = Csv::new(&["t", "re_a", "im_a", "se_re_a", "se_im_a", "nbar", "se_nbar", "sz", "se_sz"]);
        for i in 0..ens.t.len() {
            let (m, se) = (ens.mean_alpha[i], ens.se_alpha[i]);
            e.row(row![ens.t[i], m.re, m.im, se.re, se.im, ens.mean_nbar[i], ens.se_nbar[i], ens.mean_sz[i], ens.se_sz[i]]);
        }
        files.push(("ensemble.csv".into(), e.finish()));
        let near = ens.mean_nbar.iter().fold(0.0f64, |a, &b| a.max(b));
        cutoff = near_cutoff(near, params.n_max);
        let aborted: Vec<Value> = ens.aborted.iter().map(|(i, r)| json!({"index": i, "reason": r})).collect();
        extras["ensemble"] = json!({ "n_used": ens.n_used, "n_aborted": ens.n_aborted, "aborted": aborted });
    }
    let fig = Figure {
        title: "Filtered heterodyne current".into(),
        xlabel: "κt".into(),
        ylabel: "ᾱ".into(),
        series: vec![
            Series::line("Re ᾱ", ts.iter().zip(&bars).map(|(&t, b)| (t, b.re)).collect()),
            Series::line("Im ᾱ", ts.iter().zip(&bars).map(|(&t, b)| (t, b.im)).collect()),
        ],
    };
    files.push(svg(cfg, fig.to_svg()));
    let max_nbar = tr.samples.iter().fold(0.0f64, |a, s| a.max(s.nbar));
    Ok(Outcome { files, converged: true, cutoff_touched: cutoff || near_cutoff(max_nbar, params.n_max), extras })
}

// States are not kept along trajectories, so the flag is a photon-number
// heuristic: the field reaches within six standard deviations of the cutoff.
fn near_cutoff(nbar: f64, n_max: usize) -> bool {
    nbar + 6.0 * nbar.sqrt() > n_max as f64
}

fn liouville(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.eps_grid();
    let gs = gap_sweep(&cfg.params, &grid, &ModeOptions::new(cfg.numerics.modes), EXEC)?;
    let mut out = Csv::new(&["epsilon", "index", "re_lambda", "im_lambda", "residual"]);
    for (&e, m) in grid.iter().zip(&gs.modes) {
        for (i, (z, r)) in m.eigenvalues.iter().zip(&m.residuals).enumerate() {
            out.row(row![e, i, z.re, z.im, *r]);
        }
    }
    let gap = gs.gap();
    let mut series = vec![Series::line("|Re λ₁|", grid.iter().copied().zip(gap.iter().copied()).collect())];
    for (k, t) in gs.tracks.iter().enumerate() {
        series.push(Series::line(format!("track {}", k + 1), grid.iter().zip(&t.values).map(|(&e, z)| (e, z.re.abs())).collect()));
    }
    let fig = Figure { title: "Liouvillian decay rates".into(), xlabel: "ε/κ".into(), ylabel: "|Re λ|/κ".into(), series };
    let converged = gs.modes.iter().all(|m| m.converged);
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged,
        cutoff_touched: false,
        extras: json!({
            "gap": gap,
            "ordering_swap_epsilon": gs.ordering_swap().map(|i| grid[i]),
            "null_count": gs.modes.iter().map(|m| m.null_count).collect::<Vec<_>>(),
            "dense": gs.modes.iter().map(|m| m.dense).collect::<Vec<_>>(),
            "dim": gs.modes.first().map(|m| m.dim),
        }),
    })
}

fn ladders(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.params.s();
    let method: JumpMethod = cfg.numerics.jump_method.into();
    let range = cfg.numerics.ladder_n;
    let mut out = Csv::new(&["n", "ell_from", "ell_to", "coeff", "method"]);
    let mut ratio = Vec::new();
    let mut completeness = 0.0f64;
    for n in range.first..=range.last {
        let t = jump_coefficients(s, n, method)?;
        let dim = t.coeffs.nrows();
        for a in 0..dim {
            for b in 0..dim {
                out.row(row![n, t.ell(a), t.ell(b), t.coeffs[[a, b]], method.as_str()]);
            }
        }
        for (x, y) in t.row_norms_sq().iter().zip(dressed_photon_numbers(s, n)) {
            completeness = completeness.max((x - y).abs() / (1.0 + y));
        }
        ratio.push((n as f64, t.off_diagonal_ratio()));
    }
    let fig = Figure {
        title: format!("Jump operator off-diagonal weight, s = {s}"),
        xlabel: "n".into(),
        ylabel: "off-diagonal ratio".into(),
        series: vec![Series::line(method.as_str(), ratio)],
    };
    Ok(Outcome {
        files: vec![csv(cfg, out), svg(cfg, fig.to_svg())],
        converged: true,
        cutoff_touched: false,
        extras: json!({ "max_completeness_defect": completeness }),
    })
}
