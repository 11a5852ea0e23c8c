//! The fully discrete boundary value problem as one dense linear system, its
//! kernel and cokernel, and the algebra of the adjoint boundary condition.
//!
//! Unknowns are `u_alpha(x_i)`, mode-major. Each cell contributes the exact
//! exponential propagator row of its mode, scaled by `1/h` so the rows sample
//! `u' + A u + B u - f`. Boundary rows are scaled by `1/sqrt(h)` so singular
//! values approximate those of the continuum operator into `L^2 x R^N`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bvp::model::GraphBoundaryCondition;
use crate::bvp::perturbed::Perturbation;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{max_abs, null_space, subspace_distance, NullSpace};
use crate::mode_ode::CellStep;
use crate::spectral::{BoundaryField, CylinderField};

/// Relative SVD cutoff for kernel and cokernel.
pub const KERNEL_CUTOFF: f64 = 1e-8;

/// Which boundary rows to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRows {
    /// `P u(0) - K (1-P) u(0) = sigma` and `(1-P) u(delta) = 0`.
    Graph,
    /// The `P` rows at `x = 0` replaced by zero rows.
    DropP,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub matrix: DMatrix<f64>,
    pub grid: Grid,
    pub bc: GraphBoundaryCondition,
    pub perturbation: Option<Perturbation>,
    pub rows: BoundaryRows,
    steps: Vec<CellStep>,
}

impl DiscreteSystem {
    pub fn modes(&self) -> usize {
        self.bc.partition().len()
    }

    pub fn unknowns(&self) -> usize {
        self.modes() * self.grid.nodes()
    }

    fn col(&self, mode: usize, node: usize) -> usize {
        mode * self.grid.nodes() + node
    }

    fn propagator_rows(&self) -> usize {
        self.modes() * self.grid.cells()
    }

    /// Embeds the data `(f, sigma)` as a right-hand side.
    pub fn rhs(&self, f: &CylinderField, sigma: &BoundaryField) -> Result<DVector<f64>> {
        let n = self.modes();
        if f.modes() != n || sigma.len() != n || f.grid != self.grid {
            return Err(Error::PartitionMismatch("data does not match the assembled system".into()));
        }
        f.validate()?;
        let h = self.grid.spacing();
        let m = self.grid.cells();
        let mut b = DVector::zeros(self.matrix.nrows());
        for a in 0..n {
            let s = &self.steps[a];
            for i in 0..m {
                b[a * m + i] = -(s.left * f.values[a][i] + s.right * f.values[a][i + 1]) / h;
            }
        }
        if self.rows == BoundaryRows::Graph {
            let base = self.propagator_rows();
            for (r, &p) in self.bc.p_positions().iter().enumerate() {
                b[base + r] = sigma.coeffs[p] / h.sqrt();
            }
        }
        Ok(b)
    }

    /// Flattens a cylinder field into the unknown vector.
    pub fn pack(&self, u: &CylinderField) -> DVector<f64> {
        let mut z = DVector::zeros(self.unknowns());
        for (a, row) in u.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                z[self.col(a, i)] = *v;
            }
        }
        z
    }

    pub fn unpack(&self, z: &DVector<f64>) -> CylinderField {
        let nodes = self.grid.nodes();
        CylinderField {
            grid: self.grid,
            values: (0..self.modes()).map(|a| z.rows(a * nodes, nodes).iter().copied().collect()).collect(),
            derivs: None,
        }
    }

    /// `||M z - b||_2` for the packed field.
    pub fn residual(&self, u: &CylinderField, f: &CylinderField, sigma: &BoundaryField) -> Result<f64> {
        let b = self.rhs(f, sigma)?;
        Ok((&self.matrix * self.pack(u) - b).norm())
    }

    /// Direct solve of a square, nonsingular system.
    pub fn solve(&self, f: &CylinderField, sigma: &BoundaryField) -> Result<CylinderField> {
        let b = self.rhs(f, sigma)?;
        let z = self
            .matrix
            .clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InvalidInput("discrete system is singular".into()))?;
        Ok(self.unpack(&z))
    }
}

/// Assembles the discrete system with the graph boundary rows.
pub fn assemble(bc: &GraphBoundaryCondition, b: Option<&Perturbation>, cells: usize) -> Result<DiscreteSystem> {
    assemble_with(bc, b, cells, BoundaryRows::Graph)
}

pub fn assemble_with(
    bc: &GraphBoundaryCondition,
    b: Option<&Perturbation>,
    cells: usize,
    rows: BoundaryRows,
) -> Result<DiscreteSystem> {
    let partition = bc.partition();
    let grid = Grid::new(partition.delta(), cells)?;
    let n = partition.len();
    if let Some(b) = b {
        if b.grid != grid || b.modes() != n {
            return Err(Error::PartitionMismatch("perturbation does not match the assembled grid".into()));
        }
    }
    let h = grid.spacing();
    let m = cells;
    let nodes = grid.nodes();
    let steps: Vec<CellStep> = (0..n).map(|a| CellStep::forward(partition.lambda(a), h)).collect();
    let p_pos = bc.p_positions();
    let q_pos = bc.q_positions();
    let total_rows = n * m + p_pos.len() + q_pos.len();
    let mut mat = DMatrix::zeros(total_rows, n * nodes);
    let col = |a: usize, i: usize| a * nodes + i;

    for a in 0..n {
        let s = steps[a];
        for i in 0..m {
            let r = a * m + i;
            mat[(r, col(a, i))] += s.decay / h;
            mat[(r, col(a, i + 1))] -= 1.0 / h;
            if let Some(b) = b {
                for c in 0..n {
                    mat[(r, col(c, i))] -= s.left * b.matrices[i][(a, c)] / h;
                    mat[(r, col(c, i + 1))] -= s.right * b.matrices[i + 1][(a, c)] / h;
                }
            }
        }
    }
    let scale = 1.0 / h.sqrt();
    let base = n * m;
    if rows == BoundaryRows::Graph {
        for (r, &p) in p_pos.iter().enumerate() {
            mat[(base + r, col(p, 0))] = scale;
            for (c, &q) in q_pos.iter().enumerate() {
                mat[(base + r, col(q, 0))] = -bc.k()[(r, c)] * scale;
            }
        }
    }
    let base = base + p_pos.len();
    for (c, &q) in q_pos.iter().enumerate() {
        mat[(base + c, col(q, m))] = scale;
    }
    Ok(DiscreteSystem {
        matrix: mat,
        grid,
        bc: bc.clone(),
        perturbation: b.cloned(),
        rows,
        steps,
    })
}

/// Orthonormal kernel basis with the singular values around the cutoff.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub vectors: DMatrix<f64>,
    pub tol_used: f64,
    pub sigma_max: f64,
    /// Smallest singular value kept in the range.
    pub last_kept: Option<f64>,
    /// Largest singular value declared null.
    pub first_dropped: Option<f64>,
    /// The smallest few singular values, ascending.
    pub tail: Vec<f64>,
}

impl KernelBasis {
    fn from_null_space(ns: NullSpace) -> Self {
        let (last_kept, first_dropped) = ns.borderline();
        let mut tail: Vec<f64> = ns.singular_values.iter().rev().take(6).copied().collect();
        tail.sort_by(f64::total_cmp);
        KernelBasis {
            sigma_max: ns.singular_values.first().copied().unwrap_or(0.0),
            tol_used: KERNEL_CUTOFF,
            vectors: ns.basis,
            last_kept,
            first_dropped,
            tail,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Kernel of `M` and kernel of `M^T` (the cokernel).
pub fn kernel_and_cokernel(sys: &DiscreteSystem) -> (KernelBasis, KernelBasis) {
    let ker = null_space(&sys.matrix, KERNEL_CUTOFF);
    let coker = null_space(&sys.matrix.transpose(), KERNEL_CUTOFF);
    (KernelBasis::from_null_space(ker), KernelBasis::from_null_space(coker))
}

pub fn index(sys: &DiscreteSystem) -> i64 {
    let (k, c) = kernel_and_cokernel(sys);
    k.dim() as i64 - c.dim() as i64
}

/// The adjoint system assembled directly from the exact propagator of
/// `-phi' + lambda phi = 0` and the adjoint boundary conditions
/// `phi(0) in range(L^T)`, `phi(delta) in range(R^T)`, with unknowns
/// `(phi(x_1..x_M), mu, nu)`. Only for `B = 0`.
pub fn adjoint_system(sys: &DiscreteSystem) -> Result<DMatrix<f64>> {
    if sys.perturbation.is_some() {
        return Err(Error::InvalidInput("the direct adjoint is only assembled for B = 0".into()));
    }
    let n = sys.modes();
    let m = sys.grid.cells();
    let h = sys.grid.spacing();
    let rows_total = sys.matrix.nrows();
    let p_pos = sys.bc.p_positions();
    let q_pos = sys.bc.q_positions();
    let mut adj = DMatrix::zeros(n * (m + 1), rows_total);
    // phi unknown for mode a at node j (1..=M) sits in column a*M + j - 1
    let phi = |a: usize, j: usize| a * m + j - 1;
    let mu0 = n * m;
    let nu0 = mu0 + p_pos.len();
    let scale = 1.0 / h.sqrt();
    for a in 0..n {
        let growth = (sys.bc.partition().lambda(a) * h).exp();
        // phi(x_0) = e^{-lambda h} phi(x_1) combined with phi(0) + L^T mu = 0
        let r0 = a * (m + 1);
        adj[(r0, phi(a, 1))] = sys.steps[a].decay / h;
        for j in 1..m {
            // phi(x_{j+1}) - e^{lambda h} phi(x_j) = 0, scaled to match the propagator rows
            let r = r0 + j;
            adj[(r, phi(a, j + 1))] = 1.0 / (growth * h);
            adj[(r, phi(a, j))] = -1.0 / h;
        }
        adj[(r0 + m, phi(a, m))] = -1.0 / h;
    }
    if sys.rows == BoundaryRows::Graph {
        let kt = sys.bc.k();
        for (r, &p) in p_pos.iter().enumerate() {
            adj[(p * (m + 1), mu0 + r)] = scale;
            for (c, &q) in q_pos.iter().enumerate() {
                adj[(q * (m + 1), mu0 + r)] = -kt[(r, c)] * scale;
            }
        }
    }
    for (c, &q) in q_pos.iter().enumerate() {
        adj[(q * (m + 1) + m, nu0 + c)] = scale;
    }
    Ok(adj)
}

/// Compares the null space of the transposed system with that of the
/// directly assembled adjoint. Returns `(dim transpose, dim adjoint, distance)`.
pub fn adjoint_consistency(sys: &DiscreteSystem) -> Result<(usize, usize, f64)> {
    let adj = adjoint_system(sys)?;
    let a = null_space(&sys.matrix.transpose(), KERNEL_CUTOFF).basis;
    let b = null_space(&adj, KERNEL_CUTOFF).basis;
    let distance = if a.ncols() == b.ncols() { subspace_distance(&a, &b) } else { 1.0 };
    Ok((a.ncols(), b.ncols(), distance))
}

#[derive(Debug, Clone, Serialize)]
pub struct Solvability {
    pub solvable: bool,
    /// Norm of the projection of the data onto the cokernel.
    pub residual_against_cokernel: f64,
    pub data_norm: f64,
    /// Least-squares residual `||M z - b||` of the pseudo-inverse solution.
    pub least_squares_residual: f64,
    #[serde(skip)]
    pub solution: Option<DVector<f64>>,
}

/// Decides solvability of `M z = b` from the cokernel and, independently,
/// from the least-squares residual.
pub fn solvability_check(sys: &DiscreteSystem, coker: &KernelBasis, b: &DVector<f64>) -> Solvability {
    let data_norm = b.norm();
    let proj = if coker.dim() == 0 {
        0.0
    } else {
        (coker.vectors.transpose() * b).norm()
    };
    let solvable = proj <= 1e-6 * data_norm;
    let svd = sys.matrix.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let z = svd
        .solve(b, KERNEL_CUTOFF * smax)
        .unwrap_or_else(|_| DVector::zeros(sys.matrix.ncols()));
    let least_squares_residual = (&sys.matrix * &z - b).norm();
    Solvability {
        solvable,
        residual_against_cokernel: proj,
        data_norm,
        least_squares_residual,
        solution: solvable.then_some(z),
    }
}

/// Projects data onto the orthogonal complement of the cokernel.
pub fn remove_cokernel(coker: &KernelBasis, b: &DVector<f64>) -> DVector<f64> {
    if coker.dim() == 0 {
        return b.clone();
    }
    b - &coker.vectors * (coker.vectors.transpose() * b)
}

/// Checks of the splitting `R^N = ker Q1 (+) ker Q2` with
/// `Q1 = P - K(1-P)` and `Q2 = 1 - P + K^T P`.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingReport {
    pub n: usize,
    pub q1_idempotence: f64,
    pub q2_idempotence: f64,
    /// `max |<v, w>|` over the explicit bases `v = w' + K w'`, `w = p - K^T p`.
    pub orthogonality: f64,
    pub dim_ker_q1: usize,
    pub dim_ker_q2: usize,
    /// `||V^T V - I||` for the orthonormalized bases stacked side by side.
    pub complement_defect: f64,
    #[serde(skip)]
    pub ker_q1: DMatrix<f64>,
    #[serde(skip)]
    pub ker_q2: DMatrix<f64>,
}

impl SplittingReport {
    pub fn worst(&self) -> f64 {
        self.q1_idempotence
            .max(self.q2_idempotence)
            .max(self.orthogonality)
            .max(self.complement_defect)
    }
}

/// `k` is an `N x N` matrix that must vanish outside the `(P, 1-P)` block.
pub fn splitting_check(p: &[bool], k: &DMatrix<f64>) -> Result<SplittingReport> {
    let n = p.len();
    if k.shape() != (n, n) {
        return Err(Error::InvalidInput(format!("K must be {n}x{n}")));
    }
    for r in 0..n {
        for c in 0..n {
            let v = k[(r, c)];
            if v != 0.0 && !(p[r] && !p[c]) {
                return Err(Error::KNotOffBlock { row: r, col: c, value: v });
            }
        }
    }
    let proj = DMatrix::from_fn(n, n, |r, c| if r == c && p[r] { 1.0 } else { 0.0 });
    let id = DMatrix::identity(n, n);
    let q1 = &proj - k * (&id - &proj);
    let q2 = &id - &proj + k.transpose() * &proj;
    let q1_idempotence = max_abs(&(&q1 * &q1 - &q1));
    let q2_idempotence = max_abs(&(&q2 * &q2 - &q2));

    let ones: Vec<usize> = (0..n).filter(|&i| !p[i]).collect();
    let ps: Vec<usize> = (0..n).filter(|&i| p[i]).collect();
    let mut ker_q1 = DMatrix::zeros(n, ones.len());
    for (j, &q) in ones.iter().enumerate() {
        ker_q1[(q, j)] = 1.0;
        for &r in &ps {
            ker_q1[(r, j)] = k[(r, q)];
        }
    }
    let mut ker_q2 = DMatrix::zeros(n, ps.len());
    for (j, &r) in ps.iter().enumerate() {
        ker_q2[(r, j)] = 1.0;
        for &q in &ones {
            ker_q2[(q, j)] = -k[(r, q)];
        }
    }
    let orthogonality = if ker_q1.is_empty() || ker_q2.is_empty() {
        0.0
    } else {
        max_abs(&(ker_q1.transpose() * &ker_q2))
    };
    let n1 = null_space(&q1, 1e-10);
    let n2 = null_space(&q2, 1e-10);
    let mut stacked = DMatrix::zeros(n, n1.dim() + n2.dim());
    stacked.columns_mut(0, n1.dim()).copy_from(&n1.basis);
    stacked.columns_mut(n1.dim(), n2.dim()).copy_from(&n2.basis);
    let complement_defect = if stacked.ncols() == n {
        max_abs(&(stacked.transpose() * &stacked - &id))
    } else {
        1.0
    };
    Ok(SplittingReport {
        n,
        q1_idempotence,
        q2_idempotence,
        orthogonality,
        dim_ker_q1: n1.dim(),
        dim_ker_q2: n2.dim(),
        complement_defect,
        ker_q1,
        ker_q2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp::model::{aps_condition, solve_model, ModelProblem};
    use crate::spectral::{build_partition, EigenMode, LambdaHatRule};

    fn single_mode_bc(lambda: f64) -> GraphBoundaryCondition {
        let p = build_partition(&[EigenMode { index: 0, lambda }], 0.5, 1.0, &LambdaHatRule::default()).unwrap();
        let sigma = if lambda > 0.0 { 1.0 } else { 0.0 };
        aps_condition(&p, BoundaryField::new(vec![sigma])).unwrap()
    }

    #[test]
    fn single_mode_matches_model_solver() {
        let bc = single_mode_bc(1.0);
        let sys = assemble(&bc, None, 8).unwrap();
        assert!(sys.matrix.is_square());
        let grid = sys.grid;
        let f = CylinderField {
            grid,
            values: vec![grid.points().iter().map(|x| x.cos()).collect()],
            derivs: None,
        };
        let direct = sys.solve(&f, bc.sigma()).unwrap();
        let model = solve_model(&ModelProblem::new(f, bc).unwrap()).unwrap();
        for (a, b) in direct.values[0].iter().zip(&model.u.values[0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_dims() {
        let bc = single_mode_bc(1.0);
        let sys = assemble(&bc, None, 16).unwrap();
        let (k, c) = kernel_and_cokernel(&sys);
        assert_eq!((k.dim(), c.dim()), (0, 0));
        let broken = assemble_with(&bc, None, 16, BoundaryRows::DropP).unwrap();
        let (k, c) = kernel_and_cokernel(&broken);
        assert_eq!((k.dim(), c.dim()), (1, 1));
    }

    #[test]
    fn smallest_singular_value_is_stable() {
        let bc = single_mode_bc(1.0);
        let s: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&m| *kernel_and_cokernel(&assemble(&bc, None, m).unwrap()).0.tail.first().unwrap())
            .collect();
        for w in s.windows(2) {
            assert!((w[1] - w[0]).abs() <= 0.2 * w[0], "{s:?}");
        }
    }

    #[test]
    fn splitting_two_by_two() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let r = splitting_check(&[true, false], &k).unwrap();
        assert_eq!(r.ker_q1.column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(r.ker_q2.column(0).as_slice(), &[1.0, -1.0]);
        assert_eq!(r.orthogonality, 0.0);
        assert!(r.worst() < 1e-15);
    }

    #[test]
    fn off_block_k_is_rejected() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            splitting_check(&[true, false], &k),
            Err(Error::KNotOffBlock { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn transposed_system_matches_direct_adjoint() {
        let modes: Vec<EigenMode> = [-2.0, -0.4, 0.3, 1.5]
            .iter()
            .enumerate()
            .map(|(index, &lambda)| EigenMode { index, lambda })
            .collect();
        let p = build_partition(&modes, 1.0, 1.0, &LambdaHatRule::default()).unwrap();
        let k = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 0.5, 0.1]);
        let bc = GraphBoundaryCondition::new(p, k, BoundaryField::zeros(4)).unwrap();
        for rows in [BoundaryRows::Graph, BoundaryRows::DropP] {
            let sys = assemble_with(&bc, None, 12, rows).unwrap();
            let (a, b, d) = adjoint_consistency(&sys).unwrap();
            assert_eq!(a, b);
            assert!(d < 1e-10);
        }
    }
}
