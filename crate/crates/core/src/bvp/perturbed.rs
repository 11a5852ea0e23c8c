//! Contraction iteration for `(d/dx + A + B) u = f` with x-dependent `B`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bvp::model::{boundary_residuals, propagate, BcResiduals, ModelProblem};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::solve_spd_tridiagonal;
use crate::spectral::{h1_star_norm, hs_norm, CylinderField, SpectralPartition};

/// Safety factor applied to the power-iteration estimate.
pub const OP_NORM_SAFETY: f64 = 1.01;
const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 500;

/// `B(x_i)` sampled at every grid node, acting on mode coefficients by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub grid: Grid,
    pub matrices: Vec<DMatrix<f64>>,
}

impl Perturbation {
    pub fn new(grid: Grid, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.len() != grid.nodes() {
            return Err(Error::InvalidInput(format!(
                "perturbation has {} matrices for {} nodes",
                matrices.len(),
                grid.nodes()
            )));
        }
        let n = matrices.first().map_or(0, |m| m.nrows());
        if matrices.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::InvalidInput("perturbation matrices must be square and of equal size".into()));
        }
        if matrices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("perturbation has non-finite entries".into()));
        }
        Ok(Perturbation { grid, matrices })
    }

    pub fn zeros(grid: Grid, modes: usize) -> Self {
        Perturbation {
            grid,
            matrices: vec![DMatrix::zeros(modes, modes); grid.nodes()],
        }
    }

    /// `B(x) = c * Id`.
    pub fn scaled_identity(grid: Grid, modes: usize, c: f64) -> Self {
        Perturbation {
            grid,
            matrices: vec![DMatrix::identity(modes, modes) * c; grid.nodes()],
        }
    }

    pub fn modes(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn is_zero(&self) -> bool {
        self.matrices.iter().all(|m| m.iter().all(|&v| v == 0.0))
    }

    pub fn transpose(&self) -> Self {
        Perturbation {
            grid: self.grid,
            matrices: self.matrices.iter().map(|m| m.transpose()).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Perturbation {
            grid: self.grid,
            matrices: self.matrices.iter().map(|m| m * c).collect(),
        }
    }

    /// Entrywise piecewise-linear resampling onto another grid.
    pub fn resample(&self, grid: Grid) -> Perturbation {
        let matrices = (0..grid.nodes())
            .map(|j| {
                let (i, t) = self.grid.bracket(grid.node(j));
                &self.matrices[i] * (1.0 - t) + &self.matrices[i + 1] * t
            })
            .collect();
        Perturbation { grid, matrices }
    }

    /// `(B u)_alpha(x_i)`.
    pub fn apply(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = values.len();
        let mut out = vec![vec![0.0; self.grid.nodes()]; n];
        for (i, b) in self.matrices.iter().enumerate() {
            for a in 0..n {
                let mut s = 0.0;
                for (c, row) in values.iter().enumerate() {
                    s += b[(a, c)] * row[i];
                }
                out[a][i] = s;
            }
        }
        out
    }

    fn check(&self, grid: &Grid, modes: usize) -> Result<()> {
        if self.grid != *grid {
            return Err(Error::PartitionMismatch("perturbation grid differs from the problem grid".into()));
        }
        if self.modes() != modes {
            return Err(Error::PartitionMismatch(format!(
                "perturbation acts on {} modes, partition has {modes}",
                self.modes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpNormEstimate {
    /// `sqrt(rho) * OP_NORM_SAFETY`
    pub value: f64,
    /// Converged Rayleigh quotient `rho`.
    pub rayleigh: f64,
    pub iterations: usize,
}

/// Per-mode `H^1_*` Gram matrix: P1 stiffness plus `w^2` times the lumped mass.
fn gram(grid: &Grid, w: f64) -> (Vec<f64>, Vec<f64>) {
    let h = grid.spacing();
    let n = grid.nodes();
    let tau = grid.trapezoid_weights();
    let mut diag = vec![2.0 / h; n];
    diag[0] = 1.0 / h;
    diag[n - 1] = 1.0 / h;
    for i in 0..n {
        diag[i] += w * w * tau[i];
    }
    (diag, vec![-1.0 / h; n - 1])
}

fn apply_tridiagonal(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut s = diag[i] * x[i];
            if i > 0 {
                s += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += off[i] * x[i + 1];
            }
            s
        })
        .collect()
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

/// Estimates `||B||` as a map `H^1_* -> L^2` by power iteration on the
/// pencil `(C, G)` with `C = sum_i tau_i B_i^T B_i` and `G` the `H^1_*` Gram.
pub fn estimate_op_norm(b: &Perturbation, partition: &SpectralPartition) -> Result<OpNormEstimate> {
    b.check(&b.grid, partition.len())?;
    if b.is_zero() || partition.is_empty() {
        return Ok(OpNormEstimate {
            value: 0.0,
            rayleigh: 0.0,
            iterations: 1,
        });
    }
    let grid = b.grid;
    let tau = grid.trapezoid_weights();
    let grams: Vec<(Vec<f64>, Vec<f64>)> = (0..partition.len()).map(|p| gram(&grid, partition.scale(p))).collect();
    let bt = b.transpose();
    let apply_c = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut bx = b.apply(x);
        for row in bx.iter_mut() {
            for (v, t) in row.iter_mut().zip(&tau) {
                *v *= t;
            }
        }
        bt.apply(&bx)
    };
    let apply_g = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter()
            .zip(&grams)
            .map(|(row, (d, o))| apply_tridiagonal(d, o, row))
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..partition.len())
        .map(|_| (0..grid.nodes()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut previous = f64::NAN;
    let mut rho = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let cx = apply_c(&x);
        let gx = apply_g(&x);
        rho = dot(&x, &cx) / dot(&x, &gx);
        if rho == 0.0 || (rho - previous).abs() <= POWER_TOL * rho {
            return Ok(OpNormEstimate {
                value: rho.sqrt() * OP_NORM_SAFETY,
                rayleigh: rho,
                iterations: it,
            });
        }
        previous = rho;
        let mut y = cx;
        for (row, (d, o)) in y.iter_mut().zip(&grams) {
            solve_spd_tridiagonal(d, o, row);
        }
        let gy = apply_g(&y);
        let norm = dot(&y, &gy).sqrt();
        for row in y.iter_mut() {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        x = y;
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        estimate: rho.sqrt() * OP_NORM_SAFETY,
    })
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub u: CylinderField,
    pub iterations: usize,
    /// `||u^k - u^{k-1}||_{H^1_*}` for every step.
    pub step_norms: Vec<f64>,
    /// Consecutive quotients of `step_norms`.
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    pub op_norm: f64,
    pub adjoint_op_norm: f64,
    pub c4: f64,
    /// `||(d/dx + A + B) u - f||_{L^2}` at the nodes.
    pub residual: f64,
    pub bc_residuals: BcResiduals,
    pub h1_norm: f64,
    /// `c4 / (1 - c4 ||B||) (||f||_{L^2} + ||sigma||_{1/2})`
    pub bound: f64,
}

impl IterationReport {
    pub fn contraction_factor(&self) -> f64 {
        self.c4 * self.op_norm
    }

    /// Whether the adjoint smallness condition `c4 ||B^T|| < 1` also holds.
    pub fn adjoint_contracts(&self) -> bool {
        self.c4 * self.adjoint_op_norm < 1.0
    }
}

/// Iterates `L0 u^k = f - B u^{k-1}` from the homogeneous model solution
/// with the problem's boundary data.
pub fn solve_perturbed(problem: &ModelProblem, b: &Perturbation, tol: f64, max_iter: usize) -> Result<IterationReport> {
    let partition = problem.partition();
    let bc = &problem.bc;
    let grid = problem.f.grid;
    b.check(&grid, partition.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let op_norm = estimate_op_norm(b, partition)?.value;
    let adjoint_op_norm = estimate_op_norm(&b.transpose(), partition)?.value;
    let c4 = partition.c4(bc.k_bound());
    let product = c4 * op_norm;
    if product >= 1.0 {
        return Err(Error::NotContraction { product });
    }
    let data = problem.f.l2_norm_sq().sqrt() + hs_norm(bc.sigma(), partition, 0.5)?;
    let bound = c4 / (1.0 - product) * data;

    let finish = |u: CylinderField, iterations, step_norms: Vec<f64>, residual| -> Result<IterationReport> {
        let contraction_ratios = step_norms.windows(2).map(|w| w[1] / w[0]).collect();
        Ok(IterationReport {
            h1_norm: h1_star_norm(&u, partition)?,
            bc_residuals: boundary_residuals(&u, bc),
            u,
            iterations,
            step_norms,
            contraction_ratios,
            converged: true,
            op_norm,
            adjoint_op_norm,
            c4,
            residual,
            bound,
        })
    };

    if b.is_zero() {
        let u = propagate(bc, &problem.f)?;
        return finish(u, 1, Vec::new(), 0.0);
    }

    let zero = CylinderField {
        grid,
        values: vec![vec![0.0; grid.nodes()]; partition.len()],
        derivs: None,
    };
    let mut prev = propagate(bc, &zero)?;
    let mut step_norms = Vec::new();
    for k in 1..=max_iter {
        let bu = b.apply(&prev.values);
        let source = CylinderField {
            grid,
            values: problem
                .f
                .values
                .iter()
                .zip(&bu)
                .map(|(f, g)| f.iter().zip(g).map(|(a, c)| a - c).collect())
                .collect(),
            derivs: None,
        };
        let next = propagate(bc, &source)?;
        let diff = next.difference(&prev);
        let step = h1_star_norm(&diff, partition)?;
        step_norms.push(step);
        if step < tol {
            let bw = b.apply(&diff.values);
            let residual = bw.iter().map(|r| grid.trapezoid_map(r, |v| v * v)).sum::<f64>().sqrt();
            return finish(next, k, step_norms, residual);
        }
        prev = next;
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        last_step: step_norms.last().copied().unwrap_or(f64::NAN),
    })
}
