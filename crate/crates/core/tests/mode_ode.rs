use std::f64::consts::E;

use dirac_bvp::mode_ode::{b2a_bound_check, energy_identity_residual, solve_from_left, solve_from_right};
use dirac_bvp::Grid;
use proptest::prelude::*;

fn grid(m: usize) -> Grid {
    Grid::new(1.0, m).unwrap()
}

#[test]
fn linear_source_is_exact_at_nodes() {
    let g = grid(32);
    let f = g.points();
    let sol = solve_from_left(1.0, &f, 0.0, g).unwrap();
    // u = x - 1 + e^{-x}
    for (x, u) in g.points().iter().zip(&sol.u) {
        assert!((u - (x - 1.0 + (-x).exp())).abs() < 1e-14, "x = {x}");
    }
    assert!((sol.u[32] - 1.0 / E).abs() < 1e-14);
}

#[test]
fn right_anchor_with_growing_mode() {
    let g = grid(16);
    let f = vec![1.0; g.nodes()];
    let sol = solve_from_right(-1.0, &f, 0.0, g).unwrap();
    assert!((sol.u[0] - (1.0 / E - 1.0)).abs() < 1e-14);
    assert_eq!(sol.u[16], 0.0);
}

#[test]
fn energy_identity_holds_to_quadrature_accuracy() {
    let g = grid(512);
    let f = vec![1.0; g.nodes()];
    let sol = solve_from_right(-1.0, &f, 0.0, g).unwrap();
    assert!(energy_identity_residual(&sol) < 1e-6);
}

#[test]
fn b2a_closed_forms() {
    let g = grid(4096);
    let f = vec![1.0; g.nodes()];
    let (lhs, rhs) = b2a_bound_check(0.0, &f, g).unwrap();
    assert!((lhs - 1.0 / 3.0).abs() < 1e-7);
    assert!((rhs - 0.5).abs() < 1e-15);

    // u = 1 - e^{1-x}
    let exact = 1.0 - 2.0 * (E - 1.0) + (E * E - 1.0) / 2.0;
    let (lhs, rhs) = b2a_bound_check(1.0, &f, g).unwrap();
    assert!((lhs - exact).abs() < 1e-6, "{lhs} vs {exact}");
    assert!((rhs - E * E / 2.0).abs() < 1e-12);
    assert!(lhs <= rhs);
}

fn source(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, m + 1)
}

proptest! {
    #[test]
    fn left_and_right_solves_agree(lambda in -3.0..3.0f64, f in source(48), ud in -1.0..1.0f64) {
        let g = grid(48);
        let right = solve_from_right(lambda, &f, ud, g).unwrap();
        let left = solve_from_left(lambda, &f, right.u[0], g).unwrap();
        for (a, b) in left.u.iter().zip(&right.u) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn derivative_matches_equation(lambda in -3.0..3.0f64, f in source(16)) {
        let sol = solve_from_left(lambda, &f, 0.5, grid(16)).unwrap();
        for ((du, u), f) in sol.u_prime.iter().zip(&sol.u).zip(&f) {
            prop_assert_eq!(*du, f - lambda * u);
        }
    }

    #[test]
    fn b2a_bound_holds(lambda in -4.0..4.0f64, f in source(256)) {
        let (lhs, rhs) = b2a_bound_check(lambda, &f, grid(256)).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-14);
    }
}

#[test]
fn rejects_bad_sources() {
    let g = grid(8);
    assert!(solve_from_left(1.0, &[0.0; 4], 0.0, g).is_err());
    let mut f = vec![0.0; 9];
    f[3] = f64::NAN;
    assert!(solve_from_right(1.0, &f, 0.0, g).is_err());
}
