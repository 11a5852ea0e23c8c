use dirac_bvp::bvp::{aps_condition, GraphBoundaryCondition, Perturbation};
use dirac_bvp::fredholm::{
    adjoint_consistency, assemble, assemble_with, index, kernel_and_cokernel, remove_cokernel, solvability_check,
    splitting_check, BoundaryRows,
};
use dirac_bvp::spectral::{build_partition, BoundaryField, CylinderField, EigenMode, LambdaHatRule, SpectralPartition};
use dirac_bvp::Grid;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn partition(values: &[f64]) -> SpectralPartition {
    let modes: Vec<EigenMode> = values
        .iter()
        .enumerate()
        .map(|(index, &lambda)| EigenMode { index, lambda })
        .collect();
    build_partition(&modes, 1.0, 1.0, &LambdaHatRule::NonNegative).unwrap()
}

fn coupled() -> GraphBoundaryCondition {
    // P = {0.3, 1.5, 2.5}, 1 - P = {-2, -0.4}
    let p = partition(&[-2.0, -0.4, 0.3, 1.5, 2.5]);
    let k = DMatrix::from_fn(3, 2, |r, c| 0.2 + 0.1 * r as f64 - 0.3 * c as f64);
    GraphBoundaryCondition::new(p, k, BoundaryField::zeros(5)).unwrap()
}

fn nonzeros(m: &DMatrix<f64>) -> usize {
    m.iter().filter(|v| **v != 0.0).count()
}

#[test]
fn graph_system_is_invertible_with_index_zero() {
    let sys = assemble(&coupled(), None, 24).unwrap();
    let (ker, coker) = kernel_and_cokernel(&sys);
    assert_eq!((ker.dim(), coker.dim()), (0, 0));
    assert_eq!(index(&sys), 0);
    assert_eq!(sys.matrix.nrows(), sys.matrix.ncols());
}

#[test]
fn coupling_adds_one_entry_per_k_coefficient() {
    let bc = coupled();
    let aps = aps_condition(bc.partition(), BoundaryField::zeros(5)).unwrap();
    let with_k = assemble(&bc, None, 16).unwrap();
    let without = assemble(&aps, None, 16).unwrap();
    assert_eq!(nonzeros(&with_k.matrix) - nonzeros(&without.matrix), 3 * 2);
}

#[test]
fn dropped_rows_leave_matching_kernel_and_cokernel() {
    let bc = coupled();
    let sys = assemble_with(&bc, None, 20, BoundaryRows::DropP).unwrap();
    let (ker, coker) = kernel_and_cokernel(&sys);
    assert_eq!(ker.dim(), 3);
    assert_eq!(coker.dim(), 3);

    // data living on the dropped rows cannot be reached
    let mut b = DVector::zeros(sys.matrix.nrows());
    b[5 * 20] = 1.0;
    b[3] = 0.5;
    let s = solvability_check(&sys, &coker, &b);
    assert!(!s.solvable);
    assert!(s.least_squares_residual > 0.9);

    let fixed = remove_cokernel(&coker, &b);
    let s = solvability_check(&sys, &coker, &fixed);
    assert!(s.solvable);
    assert!(s.least_squares_residual < 1e-10, "{}", s.least_squares_residual);
}

#[test]
fn transpose_and_adjoint_agree() {
    for rows in [BoundaryRows::Graph, BoundaryRows::DropP] {
        let sys = assemble_with(&coupled(), None, 12, rows).unwrap();
        let (a, b, d) = adjoint_consistency(&sys).unwrap();
        assert_eq!(a, b);
        assert!(d < 1e-8, "{d}");
    }
}

#[test]
fn small_perturbation_keeps_the_index() {
    let bc = coupled();
    let grid = Grid::new(1.0, 16).unwrap();
    let b = Perturbation::new(
        grid,
        grid.points()
            .iter()
            .map(|x| DMatrix::from_fn(5, 5, |r, c| 0.3 * ((r * 5 + c) as f64 * 0.7 + x).sin()))
            .collect(),
    )
    .unwrap();
    let sys = assemble(&bc, Some(&b), 16).unwrap();
    assert_eq!(index(&sys), 0);
    let f = CylinderField::zeros(grid, 5);
    assert!(sys.solve(&f, &BoundaryField::zeros(5)).is_ok());
}

proptest! {
    #[test]
    fn splitting_is_an_orthogonal_complement(
        p in prop::collection::vec(any::<bool>(), 1..20),
        entries in prop::collection::vec(-2.0..2.0f64, 400),
    ) {
        let n = p.len();
        let k = DMatrix::from_fn(n, n, |r, c| if p[r] && !p[c] { entries[r * 20 + c] } else { 0.0 });
        let s = splitting_check(&p, &k).unwrap();
        let in_p = p.iter().filter(|b| **b).count();
        prop_assert_eq!(s.dim_ker_q1, n - in_p);
        prop_assert_eq!(s.dim_ker_q2, in_p);
        prop_assert!(s.worst() < 1e-9, "{:?}", s.worst());
    }
}

#[test]
fn k_outside_the_block_is_rejected() {
    let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    assert!(splitting_check(&[true, false], &k).is_err());
}
