use approx::assert_abs_diff_eq;
use ndarray::Array1;
use proptest::prelude::*;
use tavis::spectra::*;
use tavis::*;

fn dense_opts() -> ScanOptions {
    ScanOptions { solver: SolverChoice::Dense, exec: Exec::Sequential, ..ScanOptions::default() }
}

fn banded_opts() -> ScanOptions {
    ScanOptions { solver: SolverChoice::Banded, exec: Exec::Sequential, ..ScanOptions::default() }
}

#[test]
fn dressed_splittings() {
    let d = dressed_manifold(1, 0.5, 2.0);
    assert_eq!(d.len(), 2);
    assert_abs_diff_eq!(d[0].splitting, -2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(d[1].splitting, 2.0, epsilon = 1e-12);

    let d = dressed_manifold(1, 1.0, 1.0);
    assert_eq!(d.len(), 2);
    assert_abs_diff_eq!(d[1].splitting, 2f64.sqrt(), epsilon = 1e-12);

    let d = dressed_manifold(100, 1.0, 1.0);
    let top = d.last().unwrap().splitting;
    assert!((top - 20.0).abs() < 0.03 * 20.0, "{top}");
    for st in &d {
        let norm: f64 = st.coeffs.iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn spin_half_manifolds_split_by_root_n() {
    for n in 1..40 {
        let d = dressed_manifold(n, 0.5, 1.0);
        assert_abs_diff_eq!(d[1].splitting, (n as f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(d[0].splitting, -(n as f64).sqrt(), epsilon = 1e-12);
    }
}

#[test]
fn collapse_point_lists() {
    assert_eq!(collapse_points(1, 8.0), vec![(0.5, 4.0)]);
    assert_eq!(collapse_points(3, 8.0), vec![(0.5, 4.0), (1.5, 12.0)]);
    assert_eq!(collapse_points(2, 8.0), vec![(0.0, 0.0), (1.0, 8.0)]);
}

#[test]
fn single_atom_formula_values() {
    assert_abs_diff_eq!(single_atom_quasienergy(4, 0.0, 3.0).unwrap(), 6.0, epsilon = 1e-14);
    assert_abs_diff_eq!(single_atom_quasienergy(7, 1.5, 3.0).unwrap(), 0.0, epsilon = 1e-14);
    // (1 − 0.6²)^{3/4} = 0.64^{0.75} = 0.715542…, quoted to five places as 0.71556
    let v = single_atom_quasienergy(1, 0.3, 1.0).unwrap();
    assert_abs_diff_eq!(v, 0.64f64.powf(0.75), epsilon = 1e-15);
    assert!((v - 0.71556).abs() < 3e-5, "{v}");
    assert!(single_atom_quasienergy(1, 0.6, 1.0).is_err());
}

#[test]
fn asymptotic_ladder_values() {
    let l = asymptotic_ladder(100, 1.0, 1.0);
    assert_abs_diff_eq!(l.step_detuning, 0.1, epsilon = 1e-14);
    let l = asymptotic_ladder(50, 0.0, 1.0);
    assert_eq!((l.energy, l.step_detuning), (0.0, 0.0));
    let l = asymptotic_ladder(400, 1.5, 1.0);
    assert_abs_diff_eq!(l.energy, 60.0, epsilon = 1e-12);
    let top = dressed_manifold(400, 1.5, 1.0).last().unwrap().splitting;
    assert!((top - 60.0).abs() < 0.02 * 60.0, "{top}");
    assert!(asymptotic_ladder(5, 1.0, 1.0).outside_asymptotic_regime);
}

#[test]
fn collapse_residual_examples() {
    let space = HilbertSpace::new(1, 0);
    assert!(collapse_state_residual(0.5, 4.0, 8.0, &space).unwrap() < 1e-12);
    assert_abs_diff_eq!(collapse_state_residual(0.5, 0.0, 8.0, &space).unwrap(), 4.0, epsilon = 1e-12);
    for (n_at, m) in [(2usize, 1.0), (3, 0.5), (3, 1.5), (4, 2.0)] {
        let space = HilbertSpace::new(n_at, 0);
        let delta = 0.13;
        let r = collapse_state_residual(m, 8.0 * (m + delta), 8.0, &space).unwrap();
        assert_abs_diff_eq!(r, delta * 8.0, epsilon = 1e-12);
    }
    assert!(collapse_state_residual(1.5, 1.0, 1.0, &HilbertSpace::new(2, 0)).is_err());
}

#[test]
fn undriven_single_atom_levels() {
    let p = ModelParams::new(1, 2.0, 0.0, 10);
    let ls = levels_near_zero(&p, 6, &ScanOptions::default()).unwrap();
    // |g,0⟩ and the truncated |e,n_max⟩ are both uncoupled
    assert_eq!(ls.zero_modes, 2);
    let pos: Vec<f64> = ls.values.iter().cloned().filter(|&v| v > 0.0).collect();
    for (k, v) in pos.iter().enumerate() {
        assert_abs_diff_eq!(*v, 2.0 * ((k + 1) as f64).sqrt(), epsilon = 1e-10);
    }
}

#[test]
fn banded_route_matches_dense() {
    for (n_at, eps, n_max) in [(1usize, 2.0, 60), (2, 5.0, 50), (3, 9.5, 40)] {
        let p = ModelParams::new(n_at, 8.0, eps, n_max);
        let a = levels_near_zero(&p, 10, &dense_opts()).unwrap();
        let b = levels_near_zero(&p, 10, &banded_opts()).unwrap();
        assert_eq!(a.values.len(), b.values.len());
        assert_eq!(a.zero_modes, b.zero_modes);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
        // eigenvectors from the banded route satisfy H x = λ x
        let s = build_space(&p).unwrap();
        let h = interaction_hamiltonian(&p, &s).unwrap();
        for (v, x) in b.values.iter().zip(&b.vectors) {
            let xc: Vec<C64> = x.iter().map(|&r| C64::new(r, 0.0)).collect();
            let hx = h.matvec(&xc);
            let res: f64 = hx.iter().zip(x).map(|(a, &b)| (a.re - v * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-8, "residual {res}");
        }
    }
}

#[test]
fn gap_closes_toward_single_atom_collapse() {
    let p = ModelParams::new(1, 8.0, 0.0, 400);
    let g1 = gap_at(&p.with_epsilon(2.0), &ScanOptions::default()).unwrap();
    let g2 = gap_at(&p.with_epsilon(3.6), &ScanOptions::default()).unwrap();
    let g3 = gap_at(&p.with_epsilon(3.96), &ScanOptions::default()).unwrap();
    assert!(g1 > g2 && g2 > g3, "{g1} {g2} {g3}");
    assert!(g3 < 0.1 * g1);
}

#[test]
fn scan_branches_are_continuous_and_symmetric() {
    let p = ModelParams::new(1, 8.0, 0.0, 150);
    let grid: Vec<f64> = (0..=24).map(|i| 0.25 * i as f64).collect();
    let scan = quasienergy_scan(&p, &grid, &ScanOptions { k_levels: 10, ..ScanOptions::default() }).unwrap();
    assert!(scan.failures.is_empty());
    for b in &scan.branches {
        assert!(b.min_overlap >= 0.5);
    }
    for i in 0..grid.len() {
        let lv = Array1::from(scan.levels_at(i));
        assert!(symmetry_violation(lv.view()) < 1e-8);
    }
    assert_eq!(scan.collapse_markers.len(), 1);
    let m = &scan.collapse_markers[0];
    assert_eq!(m.m_s, 0.5);
    assert!((m.eps_detected - 4.0).abs() < 0.12 * 4.0);
}

#[test]
fn collapse_detection_tightens_with_cutoff() {
    let grid: Vec<f64> = (1..=32).map(|i| 0.25 * i as f64).collect();
    let mut last = f64::INFINITY;
    for n_max in [100, 200, 400] {
        let p = ModelParams::new(1, 8.0, 0.0, n_max);
        let m = detect_collapses(&p, &grid, &CollapseOptions::default()).unwrap();
        assert_eq!(m.len(), 1);
        let dev = (m[0].eps_detected - 4.0).abs();
        assert!(dev <= last, "n_max {n_max}: {dev} after {last}");
        last = dev;
    }
    assert!(last < 0.03 * 4.0);
}

#[test]
fn unsorted_grid_is_rejected() {
    let p = ModelParams::new(1, 8.0, 0.0, 20);
    assert!(quasienergy_scan(&p, &[1.0, 0.5], &ScanOptions::default()).is_err());
    let bad = ScanOptions { k_levels: 1, ..ScanOptions::default() };
    assert!(quasienergy_scan(&p, &[0.5, 1.0], &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectrum_is_symmetric(n_at in 1usize..4, n_max in 1usize..30, eps in 0.0f64..12.0) {
        let p = ModelParams::new(n_at, 8.0, eps, n_max);
        let ev = Array1::from(full_spectrum(&p).unwrap());
        prop_assert!(symmetry_violation(ev.view()) < 1e-8);
    }

    #[test]
    fn dressed_pairs_are_symmetric(n in 0usize..60, two_s in 1usize..7) {
        let s = two_s as f64 / 2.0;
        let d = dressed_manifold(n, s, 1.0);
        prop_assert_eq!(d.len(), n.min(two_s) + 1);
        for st in &d {
            let partner = d.iter().map(|o| (o.splitting + st.splitting).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-10);
        }
    }
}
