use approx::assert_abs_diff_eq;
use ndarray::Array2;
use proptest::prelude::*;
use tavis::model::{build_space_with_budget, reduce_atoms, reduce_field};
use tavis::*;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn random_rho(d: usize, raw: &[f64]) -> DensityMatrix {
    let mut g = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let k = 2 * (i * d + j);
            g[[i, j]] = C64::new(raw[k], raw[k + 1]);
        }
    }
    let gh = g.t().mapv(|z| z.conj());
    let mut r = DensityMatrix(g.dot(&gh));
    r.normalize();
    r
}

#[test]
fn dimensions() {
    let s = build_space(&ModelParams::new(1, 1.0, 0.0, 2)).unwrap();
    assert_eq!((s.atom_dim, s.field_dim, s.total_dim), (2, 3, 6));
    assert_eq!(ModelParams::new(3, 8.0, 0.0, 2000).dim(), 8004);
    let s = build_space(&ModelParams::new(2, 1.0, 0.0, 0)).unwrap();
    assert_eq!(s.total_dim, 3);
}

#[test]
fn index_is_a_bijection() {
    let s = HilbertSpace::new(3, 7);
    let mut seen = vec![false; s.total_dim];
    for p in 0..s.atom_dim {
        for n in 0..s.field_dim {
            let i = s.index(p, n);
            assert!(!seen[i]);
            seen[i] = true;
            assert_eq!((s.p_of(i), s.photons_of(i)), (p, n));
            assert_eq!(i, p * s.field_dim + n);
        }
    }
    assert!(seen.iter().all(|&x| x));
}

#[test]
fn budget_overflow_is_reported() {
    let p = ModelParams::new(4, 8.0, 0.0, 1000);
    assert!(build_space_with_budget(&p, 100).is_err());
}

#[test]
fn invalid_params_rejected() {
    let mut p = ModelParams::new(0, 8.0, 1.0, 10);
    assert!(p.validate().is_err());
    p.n_at = 1;
    p.epsilon = -1.0;
    assert!(p.validate().is_err());
    p.epsilon = 1.0;
    p.kappa = 2.0;
    assert!(p.validate().is_err());
}

#[test]
fn spin_half_sx_is_pauli_over_two() {
    let s = HilbertSpace::new(1, 0);
    let ops = collective_ops(&s);
    let sx = ops.s_x.to_dense();
    assert_abs_diff_eq!(sx[[0, 1]].re, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(sx[[1, 0]].re, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(sx[[0, 0]].norm(), 0.0);
}

#[test]
fn spin_commutators_hold_exactly() {
    for n_at in 1..=5 {
        let s = HilbertSpace::new(n_at, 6);
        let o = collective_ops(&s);
        let lhs = o.s_plus.commutator(&o.s_minus).unwrap();
        let rhs = o.s_z.scale(c(2.0));
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        // [S_x, S_y] = i S_z
        let xy = o.s_x.commutator(&o.s_y).unwrap();
        assert!(xy.sub(&o.s_z.scale(C64::new(0.0, 1.0))).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn field_commutator_away_from_cutoff() {
    let s = HilbertSpace::new(2, 9);
    let o = collective_ops(&s);
    let comm = o.a.commutator(&o.a_dag).unwrap().to_dense();
    for i in 0..s.total_dim {
        if s.photons_of(i) == s.n_max() {
            continue;
        }
        for j in 0..s.total_dim {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(comm[[i, j]].re, want, epsilon = 1e-12);
            assert_abs_diff_eq!(comm[[i, j]].im, 0.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn number_operator_on_basis_state() {
    let s = HilbertSpace::new(1, 10);
    let o = collective_ops(&s);
    let num = o.a_dag.matmul(&o.a).unwrap();
    let i = s.index(1, 7);
    let mut e = vec![c(0.0); s.total_dim];
    e[i] = c(1.0);
    let out = num.matvec(&e);
    for (k, z) in out.iter().enumerate() {
        assert_abs_diff_eq!(z.re, if k == i { 7.0 } else { 0.0 }, epsilon = 1e-12);
    }
}

#[test]
fn jc_manifold_splitting() {
    let p = ModelParams::new(1, 3.0, 0.0, 12);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    assert!(h.hermiticity_error() < 1e-12);
    let mut ev = tavis::spectra::full_spectrum(&p).unwrap();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Manifold n couples |g,n⟩ and |e,n−1⟩ with splitting ±Ω√n.
    for n in 1..=12usize {
        let want = 3.0 * (n as f64).sqrt();
        assert!(ev.iter().any(|e| (e - want).abs() < 1e-10), "missing +Ω√{n}");
        assert!(ev.iter().any(|e| (e + want).abs() < 1e-10), "missing −Ω√{n}");
    }
}

#[test]
fn two_atom_single_excitation_block() {
    let p = ModelParams::new(2, 1.0, 0.0, 4);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    // |m=−1, n=1⟩ ↔ |m=0, n=0⟩ with amplitude √2·√1.
    assert_abs_diff_eq!(h.get(s.index(0, 1), s.index(1, 0)).re, 2f64.sqrt(), epsilon = 1e-14);
}

#[test]
fn decoupled_hamiltonian_is_pure_drive() {
    let p = ModelParams::new(2, 0.0, 1.7, 6);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    let o = collective_ops(&s);
    let want = o.a.add(&o.a_dag).unwrap().scale(c(1.7));
    assert!(h.sub(&want).unwrap().max_abs() < 1e-14);
}

#[test]
fn undriven_hamiltonian_conserves_excitations() {
    let p = ModelParams::new(3, 2.5, 0.0, 8);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    let o = collective_ops(&s);
    let nexc = o.s_z.add(&o.a_dag.matmul(&o.a).unwrap()).unwrap();
    assert!(h.commutator(&nexc).unwrap().max_abs() < 1e-12);
}

#[test]
fn dark_ground_state_is_stationary() {
    let p = ModelParams::new(2, 8.0, 0.0, 5);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    let d = lindblad_rhs(&DensityMatrix::ground(&s), &h, &p).unwrap();
    assert!(d.iter().all(|z| z.norm() < 1e-14));
}

#[test]
fn single_photon_decays_at_two_kappa() {
    let p = ModelParams::new(1, 0.0, 0.0, 3);
    let s = build_space(&p).unwrap();
    let h = interaction_hamiltonian(&p, &s).unwrap();
    let i = s.index(0, 1);
    let d = lindblad_rhs(&DensityMatrix::basis(s.total_dim, i), &h, &p).unwrap();
    assert_abs_diff_eq!(d[[i, i]].re, -2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(d[[s.index(0, 0), s.index(0, 0)]].re, 2.0, epsilon = 1e-14);
}

#[test]
fn reduce_field_of_product_state() {
    let s = HilbertSpace::new(1, 2);
    // ρ_A = diag(0.25, 0.75), ρ_F = |+⟩⟨+| on {0, 1}.
    let ra = [0.25, 0.75];
    let mut rho = Array2::<C64>::zeros((6, 6));
    for p in 0..2 {
        for n in 0..2 {
            for m in 0..2 {
                rho[[s.index(p, n), s.index(p, m)]] = c(ra[p] * 0.5);
            }
        }
    }
    let f = reduce_field(&DensityMatrix(rho), &s);
    for n in 0..2 {
        for m in 0..2 {
            assert_abs_diff_eq!(f.0[[n, m]].re, 0.5, epsilon = 1e-15);
        }
    }
    assert_abs_diff_eq!(f.0[[2, 2]].norm(), 0.0);
}

#[test]
fn entangled_pair_has_half_purity() {
    let s = HilbertSpace::new(1, 1);
    let mut psi = vec![c(0.0); 4];
    psi[s.index(0, 1)] = c(0.5f64.sqrt());
    psi[s.index(1, 0)] = c(0.5f64.sqrt());
    let f = reduce_field(&DensityMatrix::pure(&psi), &s);
    assert_abs_diff_eq!(f.purity(), 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(reduce_atoms(&DensityMatrix::pure(&psi), &s).purity(), 0.5, epsilon = 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lindblad_rhs_is_traceless_and_hermitian(
        raw in prop::collection::vec(-1.0f64..1.0, 2 * 12 * 12),
        eps in 0.0f64..5.0,
        omega in 0.0f64..5.0,
    ) {
        let p = ModelParams::new(1, omega, eps, 5);
        let s = build_space(&p).unwrap();
        let h = interaction_hamiltonian(&p, &s).unwrap();
        let rho = random_rho(12, &raw);
        let d = lindblad_rhs(&rho, &h, &p).unwrap();
        let tr: C64 = d.diag().sum();
        prop_assert!(tr.norm() < 1e-10);
        for i in 0..12 {
            for j in 0..12 {
                prop_assert!((d[[i, j]] - d[[j, i]].conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn partial_traces_preserve_trace(raw in prop::collection::vec(-1.0f64..1.0, 2 * 15 * 15)) {
        let s = HilbertSpace::new(2, 4);
        let rho = random_rho(15, &raw);
        prop_assert!((reduce_field(&rho, &s).trace() - 1.0).norm() < 1e-12);
        prop_assert!((reduce_atoms(&rho, &s).trace() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_hermitian_for_any_params(n_at in 1usize..5, n_max in 0usize..12, om in 0.0f64..10.0, eps in 0.0f64..10.0) {
        let p = ModelParams::new(n_at, om, eps, n_max);
        let s = build_space(&p).unwrap();
        prop_assert!(interaction_hamiltonian(&p, &s).unwrap().hermiticity_error() < 1e-12);
    }
}
