//! Exact propagators for the scalar mode equation `u' + lambda u = f` on
//! `[0, delta]`.
//!
//! Sources are piecewise linear between grid nodes. On each cell the
//! variation-of-constants integral is then available in closed form, so the
//! nodal values produced here are exact for that source; only diagnostics
//! built on top of them (trapezoid integrals) carry discretization error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Below this `|lambda h|` the cell weights use their Taylor expansions.
pub const SERIES_SWITCH: f64 = 1e-4;

/// Which evaluation of the cell weights to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelBranch {
    Auto,
    Series,
    Exponential,
}

/// `int_0^1 e^{-z t} t dt` and `int_0^1 e^{-z t} (1 - t) dt`.
pub fn cell_moments(z: f64, branch: KernelBranch) -> (f64, f64) {
    let series = match branch {
        KernelBranch::Auto => z.abs() < SERIES_SWITCH,
        KernelBranch::Series => true,
        KernelBranch::Exponential => false,
    };
    if series {
        let t = 0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0;
        let one_minus_t = 0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0;
        (t, one_minus_t)
    } else {
        let em1 = (-z).exp_m1();
        let e = (-z).exp();
        let z2 = z * z;
        ((-em1 - z * e) / z2, (z + em1) / z2)
    }
}

/// One forward step `u_{i+1} = decay * u_i + left * g_i + right * g_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStep {
    pub decay: f64,
    pub left: f64,
    pub right: f64,
}

impl CellStep {
    /// Forward step over a cell of width `h` for `u' + lambda u = g`.
    pub fn forward(lambda: f64, h: f64) -> Self {
        Self::forward_with(lambda, h, KernelBranch::Auto)
    }

    pub fn forward_with(lambda: f64, h: f64, branch: KernelBranch) -> Self {
        let z = lambda * h;
        let (t, one_minus_t) = cell_moments(z, branch);
        CellStep {
            decay: (-z).exp(),
            left: h * t,
            right: h * one_minus_t,
        }
    }

    /// Backward step `u_i = decay * u_{i+1} - (left * g_i + right * g_{i+1})`.
    pub fn backward(lambda: f64, h: f64) -> Self {
        let z = lambda * h;
        let (t, one_minus_t) = cell_moments(-z, KernelBranch::Auto);
        CellStep {
            decay: z.exp(),
            left: h * one_minus_t,
            right: h * t,
        }
    }
}

/// Samples of one mode's solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub lambda: f64,
    pub grid: Grid,
    pub u: Vec<f64>,
    /// `f_i - lambda u_i` at every node.
    pub u_prime: Vec<f64>,
    pub f: Vec<f64>,
}

fn check_source(f: &[f64], grid: &Grid) -> Result<()> {
    if f.len() != grid.nodes() {
        return Err(Error::InvalidInput(format!(
            "source has {} samples, grid has {} nodes",
            f.len(),
            grid.nodes()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("source has non-finite samples".into()));
    }
    Ok(())
}

fn finish(lambda: f64, grid: Grid, u: Vec<f64>, f: &[f64]) -> ModeSolution {
    let u_prime = u.iter().zip(f).map(|(u, f)| f - lambda * u).collect();
    ModeSolution {
        lambda,
        grid,
        u,
        u_prime,
        f: f.to_vec(),
    }
}

/// `u(x) = e^{-lambda x} u0 + int_0^x e^{lambda (s - x)} f(s) ds`.
pub fn solve_from_left(lambda: f64, f: &[f64], u0: f64, grid: Grid) -> Result<ModeSolution> {
    check_source(f, &grid)?;
    let step = CellStep::forward(lambda, grid.spacing());
    let mut u = Vec::with_capacity(grid.nodes());
    u.push(u0);
    for i in 0..grid.cells() {
        let next = step.decay * u[i] + step.left * f[i] + step.right * f[i + 1];
        u.push(next);
    }
    Ok(finish(lambda, grid, u, f))
}

/// `u(x) = e^{lambda (delta - x)} u_delta - int_x^delta e^{lambda (s - x)} f(s) ds`.
pub fn solve_from_right(lambda: f64, f: &[f64], u_delta: f64, grid: Grid) -> Result<ModeSolution> {
    check_source(f, &grid)?;
    let step = CellStep::backward(lambda, grid.spacing());
    let n = grid.cells();
    let mut u = vec![0.0; n + 1];
    u[n] = u_delta;
    for i in (0..n).rev() {
        u[i] = step.decay * u[i + 1] - (step.left * f[i] + step.right * f[i + 1]);
    }
    Ok(finish(lambda, grid, u, f))
}

/// The right-anchored solution with `u(delta) = 0`.
pub fn solve_to_zero_at_right(lambda: f64, f: &[f64], grid: Grid) -> Result<ModeSolution> {
    solve_from_right(lambda, f, 0.0, grid)
}

/// Terms of the per-mode energy identity
/// `int (u'^2 + lambda^2 u^2) + lambda (u(delta)^2 - u(0)^2) = int f^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub gradient: f64,
    pub boundary: f64,
    pub source: f64,
}

impl EnergyTerms {
    pub fn residual(&self) -> f64 {
        (self.gradient + self.boundary - self.source).abs()
    }
}

pub fn energy_terms(sol: &ModeSolution) -> EnergyTerms {
    let g = &sol.grid;
    let l = sol.lambda;
    let n = g.cells();
    let gradient = g.trapezoid_map(&sol.u_prime, |v| v * v) + l * l * g.trapezoid_map(&sol.u, |v| v * v);
    let boundary = l * (sol.u[n] * sol.u[n] - sol.u[0] * sol.u[0]);
    let source = g.trapezoid_map(&sol.f, |v| v * v);
    EnergyTerms {
        gradient,
        boundary,
        source,
    }
}

pub fn energy_identity_residual(sol: &ModeSolution) -> f64 {
    energy_terms(sol).residual()
}

/// Both sides of
/// `int_0^delta (int_x^delta e^{lambda(s-x)} f ds)^2 dx <= C(lambda) delta^2 int f^2 / 2`
/// with `C = e^{2 lambda delta}` for `lambda > 0` and `1` otherwise.
pub fn b2a_bound_check(lambda: f64, f: &[f64], grid: Grid) -> Result<(f64, f64)> {
    let sol = solve_to_zero_at_right(lambda, f, grid)?;
    let lhs = grid.trapezoid_map(&sol.u, |v| v * v);
    let delta = grid.delta();
    let growth = if lambda > 0.0 { (2.0 * lambda * delta).exp() } else { 1.0 };
    let rhs = 0.5 * delta * delta * growth * grid.trapezoid_map(f, |v| v * v);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> Grid {
        Grid::new(1.0, m).unwrap()
    }

    #[test]
    fn homogeneous_decay() {
        let g = grid(16);
        let s = solve_from_left(2.0, &[0.0; 17], 1.0, g).unwrap();
        assert!((s.u[16] - (-2.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pure_integration() {
        let g = grid(8);
        let s = solve_from_left(0.0, &[1.0; 9], 0.0, g).unwrap();
        for (i, u) in s.u.iter().enumerate() {
            assert!((u - g.node(i)).abs() < 1e-15);
        }
        let s = solve_to_zero_at_right(0.0, &[1.0; 9], g).unwrap();
        for (i, u) in s.u.iter().enumerate() {
            assert!((u - (g.node(i) - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_source_right_anchor_is_zero() {
        let s = solve_to_zero_at_right(-3.0, &[0.0; 5], grid(4)).unwrap();
        assert!(s.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn ode_residual_is_exact_at_nodes() {
        let g = grid(10);
        let f: Vec<f64> = g.points().iter().map(|x| x.sin()).collect();
        let s = solve_from_left(1.7, &f, 0.3, g).unwrap();
        for i in 0..g.nodes() {
            assert_eq!(s.u_prime[i] + 1.7 * s.u[i] - f[i], 0.0);
        }
    }

    #[test]
    fn series_and_exponential_agree_at_switch() {
        for z in [SERIES_SWITCH * (1.0 - 1e-9), -SERIES_SWITCH * (1.0 - 1e-9)] {
            let a = cell_moments(z, KernelBranch::Series);
            let b = cell_moments(z, KernelBranch::Exponential);
            assert!((a.0 - b.0).abs() / a.0 < 1e-10, "{a:?} {b:?}");
            assert!((a.1 - b.1).abs() / a.1 < 1e-10, "{a:?} {b:?}");
            // one cell update with O(1) data
            let h = 1e-2;
            let lambda = z / h;
            let s1 = CellStep::forward_with(lambda, h, KernelBranch::Series);
            let s2 = CellStep::forward_with(lambda, h, KernelBranch::Exponential);
            let step = |s: CellStep| s.decay * 0.7 + s.left * 1.3 + s.right * -0.4;
            assert!((step(s1) - step(s2)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_source() {
        assert!(solve_from_left(1.0, &[0.0; 3], 0.0, grid(4)).is_err());
        assert!(solve_from_left(1.0, &[0.0, 0.0, f64::NAN, 0.0, 0.0], 0.0, grid(4)).is_err());
    }

    #[test]
    fn b2a_zero_source() {
        assert_eq!(b2a_bound_check(1.0, &[0.0; 5], grid(4)).unwrap(), (0.0, 0.0));
    }
}
