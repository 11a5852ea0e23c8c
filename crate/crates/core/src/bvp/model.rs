//! The model problem with `B = 0`, solved mode by mode.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, null_space, spectral_norm, subspace_distance};
use crate::mode_ode::{solve_from_left, solve_to_zero_at_right, ModeSolution};
use crate::spectral::{
    build_partition, eigendecompose_symmetric, hs_norm_sq, h1_star_norm_sq, BoundaryField, CylinderField,
    EigenMode, LambdaHatRule, Projection, SpectralPartition,
};

/// `P u(0) = sigma + K (1 - P) u(0)`, `(1 - P) u(delta) = 0`.
///
/// `K` has one row per `P` mode and one column per `1 - P` mode, both in
/// ascending position order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBoundaryCondition {
    partition: SpectralPartition,
    p_pos: Vec<usize>,
    q_pos: Vec<usize>,
    k: DMatrix<f64>,
    sigma: BoundaryField,
    k_bound: f64,
}

impl GraphBoundaryCondition {
    pub fn new(partition: SpectralPartition, k: DMatrix<f64>, sigma: BoundaryField) -> Result<Self> {
        let p_pos = partition.positions(Projection::P);
        let q_pos = partition.positions(Projection::OneMinusP);
        if k.shape() != (p_pos.len(), q_pos.len()) {
            return Err(Error::PartitionMismatch(format!(
                "K is {}x{}, expected |P| x |1-P| = {}x{}",
                k.nrows(),
                k.ncols(),
                p_pos.len(),
                q_pos.len()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("K has non-finite entries".into()));
        }
        if sigma.len() != partition.len() {
            return Err(Error::PartitionMismatch(format!(
                "sigma has {} modes, partition has {}",
                sigma.len(),
                partition.len()
            )));
        }
        if sigma.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sigma has non-finite entries".into()));
        }
        for &q in &q_pos {
            if sigma.coeffs[q] != 0.0 {
                return Err(Error::SigmaNotInRangeP {
                    index: partition.modes()[q].index,
                    value: sigma.coeffs[q],
                });
            }
        }
        let k_bound = weighted_norm(&partition, &p_pos, &q_pos, &k);
        Ok(GraphBoundaryCondition {
            partition,
            p_pos,
            q_pos,
            k,
            sigma,
            k_bound,
        })
    }

    pub fn partition(&self) -> &SpectralPartition {
        &self.partition
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn sigma(&self) -> &BoundaryField {
        &self.sigma
    }

    /// `sup ||K (1-P) w||_{1/2} / ||(1-P) w||_{1/2}`.
    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    pub fn p_positions(&self) -> &[usize] {
        &self.p_pos
    }

    pub fn q_positions(&self) -> &[usize] {
        &self.q_pos
    }

    /// `K` embedded as an `N x N` matrix on mode positions.
    pub fn k_full(&self) -> DMatrix<f64> {
        let n = self.partition.len();
        let mut full = DMatrix::zeros(n, n);
        for (r, &p) in self.p_pos.iter().enumerate() {
            for (c, &q) in self.q_pos.iter().enumerate() {
                full[(p, q)] = self.k[(r, c)];
            }
        }
        full
    }

    /// The same condition with different boundary data.
    pub fn with_sigma(&self, sigma: BoundaryField) -> Result<Self> {
        Self::new(self.partition.clone(), self.k.clone(), sigma)
    }

    /// `Q1 = P - K (1 - P)` on mode positions.
    pub fn q1(&self) -> DMatrix<f64> {
        let n = self.partition.len();
        let mut q1 = -self.k_full();
        for p in 0..n {
            if self.partition.in_p(p) {
                q1[(p, p)] = 1.0;
            }
        }
        q1
    }
}

fn weighted_norm(partition: &SpectralPartition, p_pos: &[usize], q_pos: &[usize], k: &DMatrix<f64>) -> f64 {
    if k.is_empty() {
        return 0.0;
    }
    let mut w = k.clone();
    for (r, &p) in p_pos.iter().enumerate() {
        for (c, &q) in q_pos.iter().enumerate() {
            w[(r, c)] *= (partition.scale(p) / partition.scale(q)).sqrt();
        }
    }
    spectral_norm(&w)
}

/// APS-type condition: `K = 0`.
pub fn aps_condition(partition: &SpectralPartition, sigma: BoundaryField) -> Result<GraphBoundaryCondition> {
    let rows = partition.positions(Projection::P).len();
    let cols = partition.len() - rows;
    GraphBoundaryCondition::new(partition.clone(), DMatrix::zeros(rows, cols), sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChiralSign {
    /// Boundary values in `ker(1 - epsilon)`.
    #[serde(rename = "+")]
    Plus,
    /// Boundary values in `ker(1 + epsilon)`.
    #[serde(rename = "-")]
    Minus,
}

impl ChiralSign {
    fn value(self) -> f64 {
        match self {
            ChiralSign::Plus => 1.0,
            ChiralSign::Minus => -1.0,
        }
    }
}

/// A chiral condition rewritten as a graph condition in the eigenbasis of `A`.
#[derive(Debug, Clone)]
pub struct ChiralCondition {
    pub bc: GraphBoundaryCondition,
    /// Column `j` is the eigenvector of the mode at position `j`.
    pub basis: DMatrix<f64>,
    pub operator: DMatrix<f64>,
    pub epsilon: DMatrix<f64>,
    pub sign: ChiralSign,
}

impl ChiralCondition {
    /// Orthonormal basis of `ker(1 - s epsilon)` in the original coordinates.
    pub fn chiral_subspace(&self) -> DMatrix<f64> {
        let n = self.epsilon.nrows();
        let m = DMatrix::identity(n, n) - &self.epsilon * self.sign.value();
        null_space(&m, 1e-10).basis
    }

    /// Orthonormal basis of `ker(P - K(1-P))`, mapped to the original coordinates.
    pub fn graph_subspace(&self) -> DMatrix<f64> {
        let coeff = null_space(&self.bc.q1(), 1e-10).basis;
        let v = &self.basis * coeff;
        if v.ncols() == 0 {
            return v;
        }
        // re-orthonormalize against roundoff in the basis change
        v.qr().q()
    }

    /// Distance between the two subspaces above.
    pub fn conversion_distance(&self) -> f64 {
        let a = self.chiral_subspace();
        let b = self.graph_subspace();
        if a.ncols() != b.ncols() {
            return 1.0;
        }
        subspace_distance(&a, &b)
    }

    /// `max |<psi_i, A psi_j>|` over an orthonormal basis of the chiral subspace.
    pub fn isotropy_defect(&self) -> f64 {
        let psi = self.chiral_subspace();
        max_abs(&(psi.transpose() * &self.operator * psi))
    }
}

/// Converts the chiral condition `(1 - s epsilon) u(0) = 0` for the operator
/// `a` into graph form. `P` holds the positive modes and the zero modes with
/// `epsilon = -s`; `K = s E^T` with `E = Q_-^T epsilon Q_+`.
pub fn chiral_condition(
    a: &DMatrix<f64>,
    epsilon: &DMatrix<f64>,
    sign: ChiralSign,
    kappa: f64,
    delta: f64,
) -> Result<ChiralCondition> {
    let n = a.nrows();
    if epsilon.shape() != (n, n) {
        return Err(Error::NotChiral(format!(
            "epsilon is {}x{}, operator is {n}x{n}",
            epsilon.nrows(),
            epsilon.ncols()
        )));
    }
    if epsilon.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotChiral("epsilon has non-finite entries".into()));
    }
    let eig = eigendecompose_symmetric(a)?;
    let sym_a = (a + a.transpose()) * 0.5;
    let tol = 1e-10 * max_abs(&sym_a).max(1.0);
    let asym = max_abs(&(epsilon - epsilon.transpose()));
    if asym > 1e-10 {
        return Err(Error::NotChiral(format!("epsilon not symmetric (defect {asym:e})")));
    }
    let inv = max_abs(&(epsilon * epsilon - DMatrix::identity(n, n)));
    if inv > 1e-10 {
        return Err(Error::NotChiral(format!("epsilon^2 != 1 (defect {inv:e})")));
    }
    let anti = max_abs(&(epsilon * &sym_a + &sym_a * epsilon));
    if anti > tol {
        return Err(Error::NotChiral(format!("epsilon A + A epsilon != 0 (defect {anti:e})")));
    }
    let eps = (epsilon + epsilon.transpose()) * 0.5;

    let mut lambdas = eig.eigenvalues();
    let mut q = eig.vectors.clone();
    let zero_tol = 1e-9 * max_abs(&sym_a).max(1.0);
    let zeros: Vec<usize> = (0..n).filter(|&j| lambdas[j].abs() <= zero_tol).collect();
    // zero modes are contiguous in ascending order
    let mut zero_eps = Vec::new();
    if let Some(&z0) = zeros.first() {
        let nz = zeros.len();
        let q0 = q.columns(z0, nz).into_owned();
        let restricted = q0.transpose() * &eps * &q0;
        let local = eigendecompose_symmetric(&((&restricted + restricted.transpose()) * 0.5))?;
        for m in &local.modes {
            if (m.lambda.abs() - 1.0).abs() > 1e-8 {
                return Err(Error::NotChiral(format!(
                    "epsilon restricted to ker A has eigenvalue {}",
                    m.lambda
                )));
            }
            zero_eps.push(m.lambda.signum());
        }
        let rotated = q0 * local.vectors;
        q.columns_mut(z0, nz).copy_from(&rotated);
        for &j in &zeros {
            lambdas[j] = 0.0;
        }
    }

    let s = sign.value();
    let hat: Vec<usize> = (0..n)
        .filter(|&j| {
            if let Some(z) = zeros.iter().position(|&p| p == j) {
                zero_eps[z] == -s
            } else {
                lambdas[j] > 0.0 && lambdas[j] < kappa
            }
        })
        .collect();
    let modes: Vec<EigenMode> = lambdas
        .iter()
        .enumerate()
        .map(|(index, &lambda)| EigenMode { index, lambda })
        .collect();
    let partition = build_partition(&modes, kappa, delta, &LambdaHatRule::Labels(hat))?;
    let p_pos = partition.positions(Projection::P);
    let q_pos = partition.positions(Projection::OneMinusP);

    // K[r, c] = s <q_{p_r}, eps q_{q_c}> for nonzero modes, 0 on ker A
    let mut k = DMatrix::zeros(p_pos.len(), q_pos.len());
    for (r, &p) in p_pos.iter().enumerate() {
        if lambdas[p] == 0.0 {
            continue;
        }
        let ep = &eps * q.column(p);
        for (c, &qq) in q_pos.iter().enumerate() {
            if lambdas[qq] == 0.0 {
                continue;
            }
            k[(r, c)] = s * q.column(qq).dot(&ep);
        }
    }
    let sigma = BoundaryField::zeros(n);
    let bc = GraphBoundaryCondition::new(partition, k, sigma)?;
    Ok(ChiralCondition {
        bc,
        basis: q,
        operator: sym_a,
        epsilon: eps,
        sign,
    })
}

/// Source `f` on the cylinder and a boundary condition.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub f: CylinderField,
    pub bc: GraphBoundaryCondition,
}

impl ModelProblem {
    pub fn new(f: CylinderField, bc: GraphBoundaryCondition) -> Result<Self> {
        let partition = bc.partition();
        if f.modes() != partition.len() {
            return Err(Error::PartitionMismatch(format!(
                "source has {} modes, partition has {}",
                f.modes(),
                partition.len()
            )));
        }
        f.validate()?;
        if (f.grid.delta() - partition.delta()).abs() > 1e-12 * partition.delta() {
            return Err(Error::PartitionMismatch(format!(
                "source grid length {} differs from delta {}",
                f.grid.delta(),
                partition.delta()
            )));
        }
        if f.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("source has non-finite samples".into()));
        }
        Ok(ModelProblem { f, bc })
    }

    pub fn partition(&self) -> &SpectralPartition {
        self.bc.partition()
    }
}

/// Largest boundary-condition defects at the two ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BcResiduals {
    /// `max |P u(0) - sigma - K (1-P) u(0)|`
    pub left: f64,
    /// `max |(1-P) u(delta)|`
    pub right: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: CylinderField,
    /// `||u||^2_{H^1_*}`
    pub h1_norm_sq: f64,
    /// `||f||^2_{L^2} + ||sigma||^2_{H^{1/2}_*}`
    pub data_norm_sq: f64,
    pub c4: f64,
    pub k_bound: f64,
    pub bc_residuals: BcResiduals,
    /// `||P_0 u||_{L^2}`
    pub p0_norm: f64,
}

impl SolveReport {
    /// `c4^2 * data - ||u||^2`; non-negative when the a priori estimate holds.
    pub fn estimate_margin(&self) -> f64 {
        self.c4 * self.c4 * self.data_norm_sq - self.h1_norm_sq
    }
}

/// Solves the model problem in three phases: right-anchored solves on the
/// `1 - P` modes, the coupling `K (1-P) u(0)`, then left-anchored solves on
/// the `P` modes.
pub fn solve_model(problem: &ModelProblem) -> Result<SolveReport> {
    let u = propagate(&problem.bc, &problem.f)?;
    report(u, problem)
}

/// The solution field for source `f`; `f` must already match the partition.
pub(crate) fn propagate(bc: &GraphBoundaryCondition, f: &CylinderField) -> Result<CylinderField> {
    let partition = bc.partition();
    let grid = f.grid;
    let f = &f.values;

    let minus: Vec<ModeSolution> = bc
        .q_positions()
        .par_iter()
        .map(|&q| solve_to_zero_at_right(partition.lambda(q), &f[q], grid))
        .collect::<Result<_>>()?;

    let trace_minus = DVector::from_iterator(minus.len(), minus.iter().map(|s| s.u[0]));
    let coupled = bc.k() * &trace_minus;

    let plus: Vec<ModeSolution> = bc
        .p_positions()
        .par_iter()
        .enumerate()
        .map(|(r, &p)| {
            let u0 = bc.sigma().coeffs[p] + coupled[r];
            solve_from_left(partition.lambda(p), &f[p], u0, grid)
        })
        .collect::<Result<_>>()?;

    let n = partition.len();
    let mut values = vec![Vec::new(); n];
    let mut derivs = vec![Vec::new(); n];
    for (sol, &pos) in minus.into_iter().zip(bc.q_positions()).chain(plus.into_iter().zip(bc.p_positions())) {
        values[pos] = sol.u;
        derivs[pos] = sol.u_prime;
    }
    Ok(CylinderField {
        grid,
        values,
        derivs: Some(derivs),
    })
}

fn report(u: CylinderField, problem: &ModelProblem) -> Result<SolveReport> {
    let bc = &problem.bc;
    let partition = bc.partition();
    let h1_norm_sq = h1_star_norm_sq(&u, partition)?;
    let data_norm_sq = problem.f.l2_norm_sq() + hs_norm_sq(bc.sigma(), partition, 0.5)?;
    let bc_residuals = boundary_residuals(&u, bc);
    let p0_norm = partition
        .positions(Projection::Zero)
        .iter()
        .map(|&p| u.grid.trapezoid_map(&u.values[p], |v| v * v))
        .fold(0.0, |a, b| a + b)
        .sqrt();
    Ok(SolveReport {
        c4: partition.c4(bc.k_bound()),
        k_bound: bc.k_bound(),
        u,
        h1_norm_sq,
        data_norm_sq,
        bc_residuals,
        p0_norm,
    })
}

/// Boundary-condition defects of an arbitrary cylinder field.
pub fn boundary_residuals(u: &CylinderField, bc: &GraphBoundaryCondition) -> BcResiduals {
    let last = u.grid.cells();
    let trace_minus = DVector::from_iterator(
        bc.q_positions().len(),
        bc.q_positions().iter().map(|&q| u.values[q][0]),
    );
    let coupled = bc.k() * trace_minus;
    let left = bc
        .p_positions()
        .iter()
        .enumerate()
        .map(|(r, &p)| (u.values[p][0] - bc.sigma().coeffs[p] - coupled[r]).abs())
        .fold(0.0, f64::max);
    let right = bc
        .q_positions()
        .iter()
        .map(|&q| u.values[q][last].abs())
        .fold(0.0, f64::max);
    BcResiduals { left, right }
}
