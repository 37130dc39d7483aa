mod common;

use common::*;
use posfeed::equilibrium::{
    classify_matrix, closed_loop_equilibrium, enumerate_open_loop_equilibria, s2_x3_fixed_point, small_spectrum,
    solve_constant_input, solve_open_loop, Verdict,
};
use posfeed::{Dynamics, SampleDomain, SquareMatrix, SystemModel};
use proptest::prelude::*;

fn builtin(name: &str) -> SystemModel {
    SystemModel::builtin(name).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    // Above the threshold the constant-input root is strongly positive and
    // zeroes the field.
    #[test]
    fn constant_input_root_is_positive(which in 0usize..3, t in 0.05f64..20.0) {
        let name = ["S1", "S2", "S3"][which];
        let m = builtin(name);
        let beta_m = posfeed::verify::compute_beta_m(&m).unwrap().value().unwrap();
        let beta = beta_m * (1.0 + t) + 0.01;
        let r = solve_constant_input(&m, beta, None).unwrap();
        prop_assert!(r.x_star.iter().all(|v| *v > 1e-9), "{name} {beta}: {:?}", r.x_star);
        let res = m.rhs_constant_input(beta, &r.x_star).unwrap();
        prop_assert!(res.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn s1_s3_match_closed_forms(gamma in 0.21f64..10.0) {
        let r1 = solve_constant_input(&builtin("S1"), gamma, None).unwrap();
        prop_assert!(dist_inf(&r1.x_star, &s1_equilibrium(gamma)) <= 1e-10);
        let g3 = gamma - 0.21 + 1.72;
        let r3 = solve_constant_input(&builtin("S3"), g3, None).unwrap();
        prop_assert!(dist_inf(&r3.x_star, &s3_equilibrium(g3)) <= 1e-10);
    }

    // The scalar S2 route and multi-start Newton agree on the open-loop field.
    #[test]
    fn s2_bisection_agrees_with_newton(beta in 0.2f64..5.0) {
        let m = builtin("S2");
        let fp = s2_x3_fixed_point(&m, beta).unwrap();
        prop_assert!(fp.residual <= 1e-10, "{}", fp.residual);
        let newton = solve_open_loop(&m, beta, &fp.x_star.iter().map(|v| v * 1.1).collect::<Vec<_>>()).unwrap();
        prop_assert!(dist_inf(&newton.x_star, &fp.x_star) <= 1e-8);
    }

    // Closed-form spectrum against a QR eigenvalue oracle.
    #[test]
    fn small_spectrum_matches_oracle(entries in prop::collection::vec(-3.0f64..3.0, 9), n in 1usize..=3) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| entries[i * 3..i * 3 + n].to_vec()).collect();
        let a = SquareMatrix::from_rows(&rows).unwrap();
        let ours = small_spectrum(&a).unwrap();
        let max_re = ours.iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((max_re - spectral_abscissa(&a)).abs() <= 1e-6, "{rows:?}: {ours:?}");
        let trace: f64 = ours.iter().map(|z| z.0).sum();
        prop_assert!((trace - a.trace()).abs() <= 1e-9 * (1.0 + a.trace().abs()));
    }
}

#[test]
fn s2_gamma_two_is_exact() {
    let r = closed_loop_equilibrium(&builtin("S2"), 2.0).unwrap();
    assert!(dist_inf(&r.x_star, &s2_equilibrium_gamma2()) <= 1e-12);
}

#[test]
fn s1_open_loop_equilibria_at_quarter() {
    let m = builtin("S1");
    let eqs = enumerate_open_loop_equilibria(&m, 0.25, &SampleDomain::default_for(2), 100);
    assert_eq!(eqs.len(), 3);
    // Outside (5/31, 1/3) only washout and one interior root remain.
    let eqs = enumerate_open_loop_equilibria(&m, 0.1, &SampleDomain::default_for(2), 100);
    assert_eq!(eqs.len(), 2, "{:?}", eqs.iter().map(|e| &e.x_star).collect::<Vec<_>>());
    let eqs = enumerate_open_loop_equilibria(&m, 0.5, &SampleDomain::default_for(2), 100);
    assert_eq!(eqs.len(), 1);
    assert!(dist_inf(&eqs[0].x_star, &[5.0, 0.0]) < 1e-10);
}

#[test]
fn classification_edge_cases() {
    let stable = SquareMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.0]]).unwrap();
    assert_eq!(classify_matrix(&stable).verdict, Verdict::Stable);
    let center = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
    assert_eq!(classify_matrix(&center).verdict, Verdict::Marginal);
    let saddle = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
    assert_eq!(classify_matrix(&saddle).verdict, Verdict::Unstable);
}

#[test]
fn closed_loop_root_is_stable() {
    for (name, gamma) in [("S1", 0.25), ("S2", 2.0), ("S3", 1.73)] {
        let m = builtin(name);
        let r = closed_loop_equilibrium(&m, gamma).unwrap();
        let rec = posfeed::equilibrium::classify_dynamics(&m, Dynamics::ClosedLoop(gamma), &r.x_star).unwrap();
        assert_eq!(rec.verdict, Verdict::Stable, "{name}: {rec:?}");
    }
}

#[test]
fn s2_without_repression_is_affine() {
    let m = builtin("S2").with_param("n", 0.0).unwrap();
    let p = |k: &str| m.param(k).unwrap();
    let beta = 1.5;
    let k = p("k1") * beta * p("l") * 2.0 + 1.0;
    let x3 = p("alpha2") + p("mu2") * (p("mu1") + p("alpha1") * k) / (p("mu1") + (p("alpha1") + p("k2")) * k);
    let r = s2_x3_fixed_point(&m, beta).unwrap();
    assert!((r.x_star[2] - x3).abs() <= 1e-12);
}
