use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use tavis::trajectories::*;
use tavis::*;

fn ground(p: &ModelParams) -> StateVector {
    StateVector::ground(&build_space(p).unwrap())
}

#[test]
fn vacuum_record_is_pure_noise() {
    let p = ModelParams::new(1, 0.0, 0.0, 3);
    let dt = 1e-3;
    let tr = simulate_trajectory(&p, &ground(&p), 50.0, dt, 7).unwrap();
    assert!(tr.samples.iter().all(|s| s.alpha == C64::new(0.0, 0.0)));
    let n = tr.record.dq.len() as f64;
    let var = tr.record.dq.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    // E|dZ|² = dt, relative spread of the estimate ≈ 1/√n
    assert!((var / dt - 1.0).abs() < 5.0 / n.sqrt(), "{}", var / dt);
    let re = tr.record.dq.iter().map(|z| z.re * z.re).sum::<f64>() / n;
    assert!((re / (0.5 * dt) - 1.0).abs() < 7.0 / n.sqrt());
    assert_eq!(tr.record.t_grid.len(), tr.record.dq.len() + 1);
    assert_eq!(tr.record.alpha_bar.len(), tr.record.t_grid.len());
}

#[test]
fn records_are_reproducible() {
    let p = ModelParams::new(2, 8.0, 3.0, 10);
    let opts = TrajectoryOptions::default();
    let a = simulate_trajectory_with(&p, &ground(&p), 2.0, 1e-3, 99, 3, &opts).unwrap();
    let b = simulate_trajectory_with(&p, &ground(&p), 2.0, 1e-3, 99, 3, &opts).unwrap();
    let c = simulate_trajectory_with(&p, &ground(&p), 2.0, 1e-3, 99, 4, &opts).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.samples, b.samples);
    assert_ne!(a.record.dq, c.record.dq);
}

#[test]
fn filter_of_constant_input() {
    let c = C64::new(2.0, -3.0);
    let dt = 1e-3;
    for kappa in [1.0f64, 4.0] {
        let dq = vec![kappa.sqrt() * c * dt; 40_000];
        let out = filter_record(&dq, dt, kappa, 1.0, FilterSign::Stable).unwrap();
        assert!((out.last().unwrap() - kappa * c).norm() < 1e-6);
    }
}

#[test]
fn filter_step_response() {
    let dt = 1e-3;
    let kf = 2.0;
    let dq = vec![C64::new(dt, 0.0); 5000];
    let out = filter_record(&dq, dt, 1.0, kf, FilterSign::Stable).unwrap();
    for k in [100usize, 500, 1000, 3000, 5000] {
        let want = 1.0 - (-0.5 * kf * k as f64 * dt).exp();
        assert!((out[k].re - want).abs() < 0.01 * want, "{k}");
    }
}

#[test]
fn literal_filter_sign_runs_away() {
    let dt = 1e-3;
    let dq = vec![C64::new(dt, 0.0); 40_000];
    let out = filter_record(&dq, dt, 1.0, 1.0, FilterSign::Literal).unwrap();
    assert!(out.last().unwrap().norm() > 1e6);
}

#[test]
fn filtered_noise_averages_out() {
    let p = ModelParams::new(1, 0.0, 0.0, 2);
    let dt = 1e-3;
    let t_final = 400.0;
    let tr = simulate_trajectory(&p, &ground(&p), t_final, dt, 11).unwrap();
    let ab = &tr.record.alpha_bar;
    let mean: C64 = ab.iter().sum::<C64>() / ab.len() as f64;
    // OU process at rate κ_f/2: per-quadrature σ of the time average ≈ √(κ/2T)
    let sigma = (1.0 / (2.0 * t_final)).sqrt();
    assert!(mean.norm() < 5.0 * sigma * 2f64.sqrt(), "{mean}");
}

#[test]
fn decoupled_ensemble_reaches_lorentzian_value() {
    let p = ModelParams::new(1, 0.0, 2.0, 25);
    let dt = 1e-3;
    let opts = TrajectoryOptions { sample_every: 1000, ..TrajectoryOptions::default() };
    let st = ensemble_mean(&p, &ground(&p), 40, 15.0, dt, 5, &opts, Exec::Parallel).unwrap();
    let last = st.mean_alpha.len() - 1;
    let want = C64::new(0.0, -2.0);
    let se = st.se_alpha[last];
    // a coherent state stays coherent under heterodyne detection, so the
    // spread is only discretization noise
    assert!((st.mean_alpha[last].re - want.re).abs() <= 3.0 * se.re + 1e-4);
    assert!((st.mean_alpha[last].im - want.im).abs() <= 3.0 * se.im + 1e-4, "{} ± {}", st.mean_alpha[last], se);
}

#[test]
fn unraveling_matches_master_equation() {
    let p = ModelParams::new(1, 8.0, 3.0, 15);
    let dt = 5e-4;
    let opts = TrajectoryOptions { sample_every: 2000, ..TrajectoryOptions::default() };
    let st = ensemble_mean(&p, &ground(&p), 120, 5.0, dt, 2024, &opts, Exec::Parallel).unwrap();
    let s = build_space(&p).unwrap();
    let mdt = 0.1 / tavis::dynamics::stability_radius(&p);
    let (_, obs) = tavis::dynamics::evolve_master_sampled(&DensityMatrix::ground(&s), &p, mdt, &[1.0, 5.0]).unwrap();
    for (k, o) in [(1usize, &obs[0]), (5, &obs[1])] {
        let z_re = (st.mean_alpha[k].re - o.field_amp.re) / st.se_alpha[k].re;
        let z_im = (st.mean_alpha[k].im - o.field_amp.im) / st.se_alpha[k].im;
        let z_n = (st.mean_nbar[k] - o.nbar) / st.se_nbar[k];
        assert!(z_re.abs() <= 3.0 && z_im.abs() <= 3.0 && z_n.abs() <= 3.0, "t={k}: {z_re} {z_im} {z_n}");
    }
}

#[test]
fn standard_error_shrinks_with_ensemble_size() {
    let p = ModelParams::new(1, 8.0, 3.0, 15);
    let opts = TrajectoryOptions { sample_every: 1000, ..TrajectoryOptions::default() };
    let a = ensemble_mean(&p, &ground(&p), 100, 3.0, 1e-3, 1, &opts, Exec::Parallel).unwrap();
    let b = ensemble_mean(&p, &ground(&p), 200, 3.0, 1e-3, 1, &opts, Exec::Parallel).unwrap();
    // single-time SEs of Im⟨a⟩ are noisy (bright excursions are rare), so
    // pool over the sampled times and the three observables
    let pooled = |s: &EnsembleStats| {
        (1..s.t.len())
            .map(|k| s.se_alpha[k].re.powi(2) + s.se_alpha[k].im.powi(2) + s.se_nbar[k].powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let r = pooled(&b) / pooled(&a);
    assert!((r * 2f64.sqrt() - 1.0).abs() < 0.2, "{r}");
}

#[test]
fn single_trajectory_has_unbounded_error() {
    let p = ModelParams::new(1, 8.0, 3.0, 8);
    let st = ensemble_mean(&p, &ground(&p), 1, 0.5, 1e-3, 3, &TrajectoryOptions::default(), Exec::Sequential).unwrap();
    assert_eq!(st.n_used, 1);
    assert!(st.se_nbar.iter().all(|x| x.is_infinite()));
    let one = simulate_trajectory_with(&p, &ground(&p), 0.5, 1e-3, 3, 0, &TrajectoryOptions::default()).unwrap();
    assert_eq!(st.mean_nbar, one.samples.iter().map(|s| s.nbar).collect::<Vec<_>>());
}

#[test]
fn ensemble_independent_of_scheduling() {
    let p = ModelParams::new(2, 8.0, 3.0, 8);
    let opts = TrajectoryOptions::default();
    let a = ensemble_mean(&p, &ground(&p), 6, 0.5, 1e-3, 42, &opts, Exec::Sequential).unwrap();
    let b = ensemble_mean(&p, &ground(&p), 6, 0.5, 1e-3, 42, &opts, Exec::Parallel).unwrap();
    assert_eq!(a.mean_alpha, b.mean_alpha);
    assert_eq!(a.se_nbar, b.se_nbar);
}

#[test]
fn mean_field_targets_for_three_atoms() {
    let p = ModelParams::new(3, 8.0, 16.0, 10);
    let t = mean_field_targets(&p).unwrap();
    assert_eq!(t.len(), 4);
    for tg in &t {
        let want = if tg.m_s == 1.5 { 112f64.sqrt() } else { 240f64.sqrt() };
        assert_abs_diff_eq!(tg.alpha.norm(), want, epsilon = 1e-10);
        assert!(tg.sign == 1 || tg.sign == -1);
    }
}

#[test]
fn synthetic_hops_are_recovered() {
    let targets = [
        DwellTarget { alpha: C64::new(3.0, -2.0), m_s: 0.5, sign: 1 },
        DwellTarget { alpha: C64::new(-3.0, -2.0), m_s: 0.5, sign: -1 },
    ];
    let dt = 0.01;
    let t: Vec<f64> = (0..=6000).map(|k| k as f64 * dt).collect();
    // 0–20 at +, 20–21 transit, 21–40 at −, 40–41 transit, 41–60 at +.
    let series: Vec<C64> = t
        .iter()
        .map(|&x| {
            if x < 20.0 - 1e-9 {
                targets[0].alpha
            } else if x < 21.0 - 1e-9 {
                C64::new(0.0, 5.0)
            } else if x < 40.0 - 1e-9 {
                targets[1].alpha
            } else if x < 41.0 - 1e-9 {
                C64::new(0.0, 5.0)
            } else {
                targets[0].alpha
            }
        })
        .collect();
    let d = classify_dwell(&t, &series, &targets, &DwellOptions::default()).unwrap();
    assert_eq!(d.segments.len(), 3);
    assert_eq!(d.switches, 2);
    let want = [(0.0, 19.99, 1i8), (21.0, 39.99, -1), (41.0, 60.0, 1)];
    for (s, (a, b, sign)) in d.segments.iter().zip(want) {
        assert_abs_diff_eq!(s.t_start, a, epsilon = 1e-9);
        assert_abs_diff_eq!(s.t_end, b, epsilon = 1e-9);
        assert_eq!(s.sign, sign);
    }
    // short visits below the minimum dwell are dropped
    let short: Vec<C64> = t.iter().map(|&x| if (10.0..12.0).contains(&x) { targets[1].alpha } else { targets[0].alpha }).collect();
    let d = classify_dwell(&t, &short, &targets, &DwellOptions::default()).unwrap();
    assert_eq!(d.segments.len(), 2);
    assert_eq!(d.switches, 0);
}

#[test]
fn bad_inputs() {
    let p = ModelParams::new(1, 8.0, 3.0, 5);
    assert!(simulate_trajectory(&p, &ground(&p), 1.0, 0.0, 1).is_err());
    let wrong = StateVector::ground(&HilbertSpace::new(1, 6));
    assert!(simulate_trajectory(&p, &wrong, 1.0, 1e-3, 1).is_err());
    assert!(filter_record(&[], 1e-3, 1.0, 0.0, FilterSign::Stable).is_err());
    assert!(classify_dwell(&[0.0], &[C64::new(0.0, 0.0)], &[], &DwellOptions::default()).is_err());
    assert!(ensemble_mean(&p, &ground(&p), 0, 1.0, 1e-3, 1, &TrajectoryOptions::default(), Exec::Sequential).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_linear(r1 in prop::collection::vec(-1.0f64..1.0, 400), r2 in prop::collection::vec(-1.0f64..1.0, 400),
                        a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let dt: f64 = 1e-2;
        let q = |r: &[f64]| r.chunks(2).map(|c| C64::new(c[0], c[1]) * dt.sqrt()).collect::<Vec<_>>();
        let (q1, q2) = (q(&r1), q(&r2));
        let mix: Vec<C64> = q1.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
        let f1 = filter_record(&q1, dt, 1.0, 1.0, FilterSign::Stable).unwrap();
        let f2 = filter_record(&q2, dt, 1.0, 1.0, FilterSign::Stable).unwrap();
        let fm = filter_record(&mix, dt, 1.0, 1.0, FilterSign::Stable).unwrap();
        for k in 0..fm.len() {
            prop_assert!((fm[k] - (a * f1[k] + b * f2[k])).norm() < 1e-12);
        }
    }
}
