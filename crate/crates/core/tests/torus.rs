use std::f64::consts::PI;

use dirac_bvp::torus::{
    ellipticity_constant, invert_constant, solve_variable, ConstantOperator, ConstantSolution, FourierTerm,
    MatrixField, TorusField, VariableCoefficients, VariableOptions, C64,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `cos(2 pi x)` on the one-dimensional torus.
fn cosine(cutoff: usize) -> TorusField {
    let mut f = TorusField::zeros(1, cutoff, 1).unwrap();
    for k in [-1, 1] {
        let i = f.index_of(&[k]).unwrap();
        f.coeffs[i][0] = C64::new(0.5, 0.0);
    }
    f
}

#[test]
fn scalar_inversion_closed_form() {
    let op = ConstantOperator::new(vec![scalar(1.0)]).unwrap();
    assert!((op.eta - 1.0).abs() < 1e-15);
    let sol = invert_constant(&cosine(4), &op).unwrap();
    let u1 = sol.u.coeffs[sol.u.index_of(&[1]).unwrap()][0];
    // u_1 = (1/2) / (2 pi i + pi)
    let expect = C64::new(0.5, 0.0) / C64::new(PI, 2.0 * PI);
    assert!((u1 - expect).norm() < 1e-15);
    assert!((u1.norm() - 1.0 / (2.0 * PI * 5f64.sqrt())).abs() < 1e-15);
    let h1 = ((1.0 + 4.0 * PI * PI) / (10.0 * PI * PI)).sqrt();
    assert!((sol.u.h1_norm() - h1).abs() < 1e-14);
    assert!(sol.u.conjugate_asymmetry() < 1e-16);
    assert!(sol.u.h1_norm() <= ConstantSolution::estimate_constant(op.eta) * 0.5f64.sqrt());
}

#[test]
fn clifford_pair_has_unit_ellipticity() {
    let s3 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let s1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((ellipticity_constant(&[s3.clone(), s1.clone()]).unwrap() - 1.0).abs() < 1e-12);
    let half = ellipticity_constant(&[s3 * 2.0, s1 * 2.0]).unwrap();
    assert!((half - 0.5).abs() < 1e-12);
    assert!(ellipticity_constant(&[DMatrix::zeros(2, 2), DMatrix::identity(2, 2)]).is_err());
}

/// Periodic solution of `a u' + pi u = f` by an integrating factor, sampled
/// at `n` equispaced points.
fn integrating_factor(a: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let rate = |x: f64| PI / a(x);
    let forcing = |x: f64| f(x) / a(x);
    // Simpson on each cell for p(x) = int_0^x rate and I(x) = int_0^x e^{p} forcing
    let mut p = vec![0.0; n + 1];
    for i in 0..n {
        let x = i as f64 * h;
        p[i + 1] = p[i] + h / 6.0 * (rate(x) + 4.0 * rate(x + h / 2.0) + rate(x + h));
    }
    let p_mid = |i: usize| {
        let x = i as f64 * h;
        p[i] + h / 24.0 * (5.0 * rate(x) + 8.0 * rate(x + h / 2.0) - rate(x + h))
    };
    let mut integral = vec![0.0; n + 1];
    for i in 0..n {
        let x = i as f64 * h;
        let g0 = p[i].exp() * forcing(x);
        let gm = p_mid(i).exp() * forcing(x + h / 2.0);
        let g1 = p[i + 1].exp() * forcing(x + h);
        integral[i + 1] = integral[i] + h / 6.0 * (g0 + 4.0 * gm + g1);
    }
    let u0 = integral[n] / (p[n].exp() - 1.0);
    (0..n).map(|i| (-p[i]).exp() * (u0 + integral[i])).collect()
}

#[test]
fn variable_coefficient_matches_integrating_factor() {
    let cutoff = 16;
    let a = MatrixField {
        constant: scalar(1.0),
        terms: vec![FourierTerm {
            k: vec![1],
            cos: scalar(0.0),
            sin: scalar(0.05),
        }],
    };
    let coeffs = VariableCoefficients {
        a: vec![a],
        b: MatrixField::zeros(1),
    };
    let op = ConstantOperator::new(vec![scalar(1.0)]).unwrap();
    let sol = solve_variable(&cosine(cutoff), &coeffs, &op, &VariableOptions::default()).unwrap();
    assert!(sol.iterations > 1);

    let n = 4096;
    let samples = integrating_factor(|x| 1.0 + 0.05 * (2.0 * PI * x).sin(), |x| (2.0 * PI * x).cos(), n);
    for k in -(cutoff as i64)..=cutoff as i64 {
        let oracle: C64 = samples
            .iter()
            .enumerate()
            .map(|(j, &u)| u * C64::from_polar(1.0, -2.0 * PI * k as f64 * j as f64 / n as f64))
            .sum::<C64>()
            / n as f64;
        let got = sol.u.coeffs[sol.u.index_of(&[k]).unwrap()][0];
        assert!((got - oracle).norm() < 1e-9, "k = {k}: {got} vs {oracle}");
    }
    assert!(sol.h1_norm <= sol.a_priori_bound);
}

proptest! {
    #[test]
    fn constant_inverse_obeys_multiplier_bound(
        m in prop::collection::vec(-1.5..1.5f64, 8),
        re in prop::collection::vec(-1.0..1.0f64, 50),
        im in prop::collection::vec(-1.0..1.0f64, 50),
    ) {
        let a0 = vec![DMatrix::from_row_slice(2, 2, &m[..4]), DMatrix::from_row_slice(2, 2, &m[4..])];
        let op = match ConstantOperator::new(a0) {
            Ok(op) if op.eta > 1e-3 => op,
            _ => return Ok(()),
        };
        let coeffs = (0..25).map(|i| DVector::from_fn(2, |c, _| C64::new(re[2 * i + c], im[2 * i + c]))).collect();
        let f = TorusField::from_coeffs(2, 2, coeffs).unwrap();
        let sol = invert_constant(&f, &op).unwrap();
        let bound = ConstantSolution::estimate_constant(op.eta) * f.l2_norm();
        prop_assert!(sol.u.h1_norm() <= bound * (1.0 + 1e-10));
        for c in &sol.certificates {
            prop_assert!(c.sigma_min >= c.lower_bound * (1.0 - 1e-10));
        }
        let back = op.apply(&sol.u).sub(&f).l2_norm();
        prop_assert!(back <= 1e-10 * f.l2_norm().max(1.0) / op.eta);
    }
}
