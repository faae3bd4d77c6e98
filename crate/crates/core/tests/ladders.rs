use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use tavis::ladders::*;
use tavis::*;

fn ln_fact(n: i64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Wigner's explicit sum for d^{(j)}_{m', m}(β).
fn d_by_sum(j: f64, mp: f64, m: f64, beta: f64) -> f64 {
    let (jpm, jmm, jpmp, jmmp) = ((j + m) as i64, (j - m) as i64, (j + mp) as i64, (j - mp) as i64);
    let pre = 0.5 * (ln_fact(jpmp) + ln_fact(jmmp) + ln_fact(jpm) + ln_fact(jmm));
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let kmin = 0.max((m - mp) as i64);
    let kmax = jpm.min(jmmp);
    let mut acc = 0.0;
    for k in kmin..=kmax {
        let sign = if (k + (mp - m) as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let den = ln_fact(jpm - k) + ln_fact(k) + ln_fact(jmmp - k) + ln_fact(k + (mp - m) as i64);
        let pc = ((2.0 * j) as i64 + (m - mp) as i64 - 2 * k) as i32;
        let ps = ((mp - m) as i64 + 2 * k) as i32;
        acc += sign * (pre - den).exp() * c.powi(pc) * s.powi(ps);
    }
    acc
}

#[test]
fn small_d_values() {
    assert_abs_diff_eq!(wigner_small_d(0.5, 0.5, 0.5, FRAC_PI_2).unwrap(), FRAC_PI_4.cos(), epsilon = 1e-14);
    assert_abs_diff_eq!(wigner_small_d(1.0, 0.0, 0.0, FRAC_PI_2).unwrap(), 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(wigner_small_d(1.0, 0.0, 0.0, 0.3).unwrap(), 0.3f64.cos(), epsilon = 1e-14);
    assert!(wigner_small_d(1.0, 2.0, 0.0, 0.3).is_err());
    assert!(wigner_small_d(0.7, 0.0, 0.0, 0.3).is_err());
}

#[test]
fn small_d_matches_explicit_sum() {
    for two_j in 1..=12usize {
        let j = two_j as f64 / 2.0;
        for beta in [0.4, FRAC_PI_2, 2.2] {
            let dm = small_d_matrix(j, beta);
            for a in 0..=two_j {
                for b in 0..=two_j {
                    let (mp, m) = (a as f64 - j, b as f64 - j);
                    assert_abs_diff_eq!(dm[[a, b]], d_by_sum(j, mp, m, beta), epsilon = 1e-11);
                }
            }
        }
    }
}

#[test]
fn completeness_of_exact_tables() {
    for two_s in 1..=6usize {
        let s = two_s as f64 / 2.0;
        for n in [1usize, 2, 3, 7, 20, 64] {
            let t = jump_coefficients(s, n, JumpMethod::ExactNumeric).unwrap();
            let want = dressed_photon_numbers(s, n);
            for (a, b) in t.row_norms_sq().iter().zip(&want) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn closed_form_matches_numerics() {
    for n in 2..=50 {
        let exact = jump_coefficients(1.0, n, JumpMethod::ExactNumeric).unwrap();
        let closed = two_atom_jump_oracle(n).unwrap();
        let aligned = exact.gauge_aligned_to(&closed);
        assert!(aligned.max_abs_diff(&closed) < 1e-10, "n = {n}");
    }
}

#[test]
fn two_atom_table_at_n_ten() {
    let t = two_atom_jump_oracle(10).unwrap();
    let q: f64 = 9.0;
    let den = q * q - 0.25;
    assert_abs_diff_eq!(t.get(0.0, 0.0), (q * (q + 1.0) / den).sqrt() * (q - 1.0).sqrt(), epsilon = 1e-14);
    assert_abs_diff_eq!(t.get(0.0, 0.0), 2.98604, epsilon = 1e-5);
    assert_abs_diff_eq!(t.get(0.0, 1.0), 0.124418, epsilon = 1e-6);
    assert_abs_diff_eq!(t.get(0.0, -1.0), t.get(0.0, 1.0), epsilon = 1e-15);
    // ⟨a†a⟩ of |ψ_{10,0}⟩ is 10·17/19
    assert_abs_diff_eq!(t.row_norms_sq()[1], 170.0 / 19.0, epsilon = 1e-12);
}

#[test]
fn quoted_ell_zero_values_overshoot_completeness() {
    // 3.2356 and 0.05716 come from evaluating the printed two-atom formula at
    // n = 10; their squares exceed ⟨a†a⟩ of the source state, so no choice of
    // dressed-state phases can reproduce them.
    let quoted = 3.2356f64.powi(2) + 2.0 * 0.05716f64.powi(2);
    let bound = dressed_photon_numbers(1.0, 10)[1];
    assert!(quoted > bound + 1.0, "{quoted} vs {bound}");
    assert_abs_diff_eq!((110.0f64 / 99.75).sqrt() * (10f64.sqrt() + 3.0) / 2.0, 3.2356, epsilon = 1e-4);
}

#[test]
fn two_atom_asymptotics() {
    let big = two_atom_jump_oracle(10_000).unwrap();
    assert!((big.get(0.0, 0.0) / 10_000f64.sqrt() - 1.0).abs() < 1e-3);
    assert!(big.get(1.0, -1.0) / big.get(1.0, 1.0) < 0.01);
    assert!(big.get(-1.0, 1.0) / big.get(-1.0, -1.0) < 0.01);
}

#[test]
fn single_atom_off_diagonal_ratio() {
    for n in [2usize, 10, 100, 1000] {
        let t = jump_coefficients(0.5, n, JumpMethod::ExactNumeric).unwrap();
        let (a, b) = ((n as f64).sqrt(), ((n - 1) as f64).sqrt());
        assert_abs_diff_eq!(t.off_diagonal_ratio(), (a - b) / (a + b), epsilon = 1e-12);
    }
}

#[test]
fn diagonal_dominance_grows_along_dyadic_sequence() {
    for two_s in 1..=4usize {
        let s = two_s as f64 / 2.0;
        let ratios: Vec<f64> =
            (4..=12).map(|k| jump_coefficients(s, 1 << k, JumpMethod::ExactNumeric).unwrap().off_diagonal_ratio()).collect();
        for w in ratios.windows(2) {
            assert!(w[1] < w[0], "s = {s}: {ratios:?}");
        }
    }
}

#[test]
fn asymptotic_table_converges() {
    for s in [1.0, 1.5] {
        let rel = |n: usize| {
            let ex = jump_coefficients(s, n, JumpMethod::ExactNumeric).unwrap();
            let asy = jump_coefficients(s, n, JumpMethod::Asymptotic).unwrap();
            let al = asy.gauge_aligned_to(&ex);
            al.max_abs_diff(&ex) / ex.coeffs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let (a, b, c) = (rel(50), rel(100), rel(200));
        assert!(b < a && c < b);
        assert!(b / a < 0.625 && c / b < 0.625, "{a} {b} {c}");
    }
    assert!(jump_coefficients(1.0, 15, JumpMethod::Asymptotic).is_err());
}

#[test]
fn bad_table_requests() {
    assert!(jump_coefficients(1.0, 0, JumpMethod::ExactNumeric).is_err());
    assert!(jump_coefficients(0.5, 10, JumpMethod::ClosedForm).is_err());
    assert!(two_atom_jump_oracle(1).is_err());
}

#[test]
fn pointer_residual_of_single_manifold_is_one() {
    let space = HilbertSpace::new(2, 60);
    let w = PointerWindow { n_min: 30, coeffs: vec![C64::new(1.0, 0.0)] };
    assert_abs_diff_eq!(pointer_residual(&w, 1.0, 1.0, &space).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn coherent_pointer_state_is_near_eigenstate() {
    let nbar = 192.0;
    let w = PointerWindow::coherent_centered(nbar, 6.0, 20);
    let space = HilbertSpace::new(2, w.n_top() + 5);
    let r = pointer_residual(&w, 1.0, 1.0, &space).unwrap();
    assert!(r < 0.1, "{r}");
}

#[test]
fn pointer_residual_falls_with_field_strength() {
    let mut last = f64::INFINITY;
    for nbar in [25.0, 100.0, 400.0] {
        let w = PointerWindow::coherent_centered(nbar, 6.0, 20);
        let space = HilbertSpace::new(2, w.n_top() + 5);
        let r = pointer_residual(&w, 1.0, 1.0, &space).unwrap();
        assert!(r < last, "{nbar}: {r} after {last}");
        last = r;
    }
}

#[test]
fn pointer_window_beyond_cutoff_is_rejected() {
    let w = PointerWindow::coherent(100.0, 60, 140);
    assert!(pointer_residual(&w, 1.0, 1.0, &HilbertSpace::new(2, 120)).is_err());
    assert!(pointer_residual(&w, 1.0, 1.0, &HilbertSpace::new(3, 200)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_d_is_orthogonal(two_s in 0usize..=20, beta in -3.2f64..3.2) {
        let s = two_s as f64 / 2.0;
        let d = small_d_matrix(s, beta);
        let g = d.dot(&d.t());
        for i in 0..=two_s {
            for j in 0..=two_s {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_tables_are_complete(two_s in 1usize..=8, n in 1usize..120) {
        let s = two_s as f64 / 2.0;
        let t = jump_coefficients(s, n, JumpMethod::ExactNumeric).unwrap();
        for (a, b) in t.row_norms_sq().iter().zip(dressed_photon_numbers(s, n)) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b));
        }
    }
}
