use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = x_0 < x_1 < ... < x_M = delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    delta: f64,
    cells: usize,
}

impl Grid {
    pub fn new(delta: f64, cells: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidInput(format!("grid length must be positive, got {delta}")));
        }
        if cells < 2 {
            return Err(Error::InvalidInput(format!("grid needs at least 2 cells, got {cells}")));
        }
        Ok(Grid { delta, cells })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of cells `M`; there are `M + 1` nodes.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn spacing(&self) -> f64 {
        self.delta / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.delta
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.node(i)).collect()
    }

    /// Index of the node at `x`, if `x` is a node to within `1e-12 * delta`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let t = x / self.spacing();
        let i = t.round();
        if i < 0.0 || i > self.cells as f64 {
            return None;
        }
        let i = i as usize;
        ((self.node(i) - x).abs() <= 1e-12 * self.delta).then_some(i)
    }

    /// Trapezoid weights `h/2, h, ..., h, h/2`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.nodes()];
        w[0] = 0.5 * h;
        w[self.cells] = 0.5 * h;
        w
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes());
        let h = self.spacing();
        let inner: f64 = values[1..self.cells].iter().sum();
        h * (inner + 0.5 * (values[0] + values[self.cells]))
    }

    /// Trapezoid rule applied to `g(values[i])` without allocating.
    pub fn trapezoid_map(&self, values: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let h = self.spacing();
        let n = self.cells;
        let inner: f64 = values[1..n].iter().map(|&v| g(v)).sum();
        h * (inner + 0.5 * (g(values[0]) + g(values[n])))
    }

    /// Piecewise-linear interpolation weights at `x`: `(i, t)` with
    /// `value = (1 - t) v[i] + t v[i + 1]`.
    pub fn bracket(&self, x: f64) -> (usize, f64) {
        let t = (x / self.spacing()).clamp(0.0, self.cells as f64);
        let i = (t.floor() as usize).min(self.cells - 1);
        (i, t - i as f64)
    }

    /// Nodal samples on `self` resampled piecewise-linearly onto `target`.
    pub fn interpolate(&self, values: &[f64], target: &Grid) -> Vec<f64> {
        (0..target.nodes())
            .map(|j| {
                let (i, t) = self.bracket(target.node(j));
                (1.0 - t) * values[i] + t * values[i + 1]
            })
            .collect()
    }

    /// Second-order finite-difference derivative of nodal samples.
    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        let n = self.cells;
        let mut d = vec![0.0; n + 1];
        d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
        d[n] = (3.0 * values[n] - 4.0 * values[n - 1] + values[n - 2]) / (2.0 * h);
        for i in 1..n {
            d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_end_exactly() {
        let g = Grid::new(0.3, 7).unwrap();
        assert_eq!(g.nodes(), 8);
        assert_eq!(g.node(7), 0.3);
        assert_eq!(g.locate(0.3), Some(7));
        assert_eq!(g.locate(0.0), Some(0));
        assert_eq!(g.locate(0.05), None);
        assert_eq!(g.locate(-0.3 / 7.0), None);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid::new(2.0, 10).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.trapezoid(&v) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(0.0, 4).is_err());
        assert!(Grid::new(1.0, 1).is_err());
        assert!(Grid::new(f64::NAN, 4).is_err());
    }
}
